//! Test-time planner loop, evaluation reports and rendering.

pub mod episode;
pub mod eval;
pub mod learned;
pub mod render;

pub use episode::{episode_metrics, packing_step, run_episode, EnvConfig, EpisodeError, EpisodeResult, PackingEpisode, PlacementRecord};
pub use eval::{evaluate, EpisodeRow, PolicyFactory, PolicySummary, Report};
pub use learned::{argmax, greedy_choice, LearnedPolicy};
pub use render::{render, render_annotated};
