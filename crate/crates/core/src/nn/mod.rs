//! Dense networks, Adam, and bootstrap ensembles.

pub mod adam;
pub mod ensemble;
pub mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use ensemble::{Ensemble, EnsembleFile, RegressionSet, TrainConfig, TrainReport};
pub use mlp::{Activation, Gradients, Mlp, MlpSpec, NetShape};
