//! Planning from offline imitation rewards.
//!
//! A behavior-cloning ensemble proposes actions, a learned ensemble dynamics
//! model rolls them forward, and an imitation reward computed from expert data
//! alone ranks the rollouts. The first action of the best rollout is executed
//! (model-predictive control). Online, the dynamics model is fine-tuned on a
//! mixture of expert and agent transitions.
//!
//! Module map:
//! - [`nn`]: MLPs, Adam, ensembles
//! - [`data`]: transitions, normalization, replay buffer, dataset files
//! - [`prior`]: BC ensemble (per-member proposals and the EBC baseline)
//! - [`world_model`]: ensemble dynamics with a frozen reward copy
//! - [`reward`]: L2, DRIL and MoREL imitation rewards
//! - [`planner`]: sampling-based action selection
//! - [`env`]: toy tasks with scripted experts
//! - [`harness`]: offline/online experiment driver, sweeps, CSV output

pub mod checkpoint;
pub mod data;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod planner;
pub mod prior;
pub mod reward;
pub mod seed;
pub mod world_model;

pub use error::{Error, Result};
