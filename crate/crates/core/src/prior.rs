//! Behavior-cloning prior: an ensemble of state -> action regressors.
//!
//! The planner queries members one at a time (each rollout sticks to one
//! member). Averaging all members gives the Ensemble BC (EBC) baseline.

use crate::data::{Normalizer, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::nn::{Ensemble, NetShape, RegressionSet, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq)]
pub struct BcEnsemble {
    pub ensemble: Ensemble,
    pub normalizer: Normalizer,
}

/// `(normalized state -> normalized action)` pairs of every expert transition.
pub fn bc_regression_set(expert: &[Trajectory], normalizer: &Normalizer) -> Result<RegressionSet> {
    let mut set = RegressionSet::new(normalizer.state_dim(), normalizer.action_dim());
    for t in expert.iter().flat_map(|t| t.transitions()) {
        set.push(
            &normalizer.normalize_state(&t.state)?,
            &normalizer.normalize_action(&t.action)?,
        )?;
    }
    Ok(set)
}

impl BcEnsemble {
    pub fn train(
        expert: &[Trajectory],
        normalizer: Normalizer,
        shape: NetShape,
        k: usize,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<(Self, TrainReport)> {
        let data = bc_regression_set(expert, &normalizer)?;
        if data.is_empty() {
            return Err(Error::InvalidInput("behavior cloning needs expert transitions".into()));
        }
        let spec = shape.spec(normalizer.state_dim(), normalizer.action_dim());
        let mut ensemble = Ensemble::init(spec, k, seed)?;
        let report = ensemble.train(&data, cfg)?;
        Ok((Self { ensemble, normalizer }, report))
    }

    pub fn new(ensemble: Ensemble, normalizer: Normalizer) -> Result<Self> {
        check_len("bc input_dim", normalizer.state_dim(), ensemble.spec.input_dim)?;
        check_len("bc output_dim", normalizer.action_dim(), ensemble.spec.output_dim)?;
        Ok(Self { ensemble, normalizer })
    }

    pub fn len(&self) -> usize {
        self.ensemble.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.ensemble.spec.input_dim
    }

    pub fn action_dim(&self) -> usize {
        self.ensemble.spec.output_dim
    }

    /// Member `k`'s action for a normalized state, in normalized units.
    pub fn predict_member(&self, k: usize, state: &[f64]) -> Result<Vec<f64>> {
        self.ensemble.member(k)?.forward(state)
    }

    /// Member `k` evaluated on `rows` stacked normalized states.
    pub fn predict_member_batch(&self, k: usize, states: &[f64], rows: usize, out: &mut Vec<f64>) -> Result<()> {
        self.ensemble.member(k)?.forward_batch(states, rows, out)
    }

    /// Mean of all member outputs for a normalized state, summed in member
    /// order and divided by the member count.
    pub fn mean_normalized(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut sum = vec![0.0; self.action_dim()];
        for member in &self.ensemble.members {
            for (s, v) in sum.iter_mut().zip(member.forward(state)?) {
                *s += v;
            }
        }
        let k = self.len() as f64;
        Ok(sum.into_iter().map(|s| s / k).collect())
    }

    /// EBC action for a raw environment state, in environment units (before
    /// clipping to the action box).
    pub fn predict_ebc(&self, raw_state: &[f64]) -> Result<Vec<f64>> {
        let s = self.normalizer.normalize_state(raw_state)?;
        self.normalizer.denormalize_action(&self.mean_normalized(&s)?)
    }
}
