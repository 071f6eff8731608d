//! Dueling Q-network with hand-written gradients.

pub mod adam;
pub mod checkpoint;
pub mod features;
pub mod layers;
pub mod model;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use features::{local_features, step_input, StepInput, LOCAL_FEATURES};
pub use model::{dueling_combine, DimTable, EncodedStep, MapKind, ObjectCode, ObjectSample, PlacementSample, QNet};
