pub mod voxel;
pub mod properties;
pub mod catalog;
pub mod container;
pub mod candidates;
pub mod heuristics;
pub mod net;
pub mod harness;
pub mod training;
