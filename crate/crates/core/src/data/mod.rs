//! Demonstration data: transitions, expert-statistics normalization, the
//! expert/agent replay buffer and the JSON-lines dataset format.

pub mod dataset;
pub mod normalizer;
pub mod replay;
pub mod transition;

pub use dataset::{load_dataset, save_dataset};
pub use normalizer::Normalizer;
pub use replay::{mixture_ratio, MixedBatch, ReplayBuffer};
pub use transition::{Trajectory, Transition};
