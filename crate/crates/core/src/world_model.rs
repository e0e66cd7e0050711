//! Deterministic ensemble dynamics model `(state, action) -> next state`,
//! all in normalized units.
//!
//! The model predicts the absolute next state by default. A frozen copy of
//! the offline-trained members can be taken once; the MoREL reward reads that
//! copy so fine-tuning never moves the reward.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Normalizer, ReplayBuffer, Trajectory, Transition};
use crate::error::{check_len, Error, Result};
use crate::nn::ensemble::relabel_divergence;
use crate::nn::{AdamConfig, AdamState, Ensemble, EnsembleFile, NetShape, RegressionSet, TrainConfig, TrainReport};

#[derive(Debug, Clone)]
pub struct DynamicsEnsemble {
    live: Ensemble,
    frozen: Option<Arc<Ensemble>>,
    pub normalizer: Normalizer,
    /// Predict `s' - s` instead of `s'`.
    pub predict_delta: bool,
    finetune_optim: Option<Vec<AdamState>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldModelReport {
    pub train: TrainReport,
    /// One-step MSE of each member on the held-out split (diagnostic only).
    pub validation_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FineTuneReport {
    /// Mixture ratio in force for each gradient step taken.
    pub ratios: Vec<f64>,
    /// Batch loss of each member at the last step.
    pub last_losses: Vec<f64>,
}

fn concat(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + action.len());
    x.extend_from_slice(state);
    x.extend_from_slice(action);
    x
}

impl DynamicsEnsemble {
    pub fn state_dim(&self) -> usize {
        self.live.spec.output_dim
    }

    pub fn action_dim(&self) -> usize {
        self.live.spec.input_dim - self.live.spec.output_dim
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn live(&self) -> &Ensemble {
        &self.live
    }

    pub fn frozen(&self) -> Option<&Arc<Ensemble>> {
        self.frozen.as_ref()
    }

    pub fn new(live: Ensemble, normalizer: Normalizer, predict_delta: bool) -> Result<Self> {
        check_len(
            "world model input_dim",
            normalizer.state_dim() + normalizer.action_dim(),
            live.spec.input_dim,
        )?;
        check_len("world model output_dim", normalizer.state_dim(), live.spec.output_dim)?;
        Ok(Self {
            live,
            frozen: None,
            normalizer,
            predict_delta,
            finetune_optim: None,
        })
    }

    /// Regression pairs for normalized transitions.
    pub fn regression_set<'a>(
        transitions: impl IntoIterator<Item = &'a Transition>,
        state_dim: usize,
        action_dim: usize,
        predict_delta: bool,
    ) -> Result<RegressionSet> {
        let mut set = RegressionSet::new(state_dim + action_dim, state_dim);
        for t in transitions {
            let x = concat(&t.state, &t.action);
            if predict_delta {
                let d: Vec<f64> = t.next_state.iter().zip(&t.state).map(|(n, s)| n - s).collect();
                set.push(&x, &d)?;
            } else {
                set.push(&x, &t.next_state)?;
            }
        }
        Ok(set)
    }

    /// Trains on normalized expert transitions with `validation_fraction`
    /// held out for diagnostics.
    #[allow(clippy::too_many_arguments)]
    pub fn train(
        expert: &[Trajectory],
        normalizer: Normalizer,
        shape: NetShape,
        k: usize,
        cfg: &TrainConfig,
        seed: u64,
        validation_fraction: f64,
        predict_delta: bool,
    ) -> Result<(Self, WorldModelReport)> {
        let normalized = expert
            .iter()
            .flat_map(|t| t.transitions())
            .map(|t| normalizer.normalize(t))
            .collect::<Result<Vec<_>>>()?;
        let (sd, ad) = (normalizer.state_dim(), normalizer.action_dim());
        let all = Self::regression_set(&normalized, sd, ad, predict_delta)?;
        if all.is_empty() {
            return Err(Error::InvalidInput("world model needs expert transitions".into()));
        }
        let (train, valid) = all.split(validation_fraction, crate::seed::derive(seed, "wm-split", 0));
        let mut live = Ensemble::init(shape.spec(sd + ad, sd), k, seed)?;
        let train_report = live.train(&train, cfg)?;
        let validation_mse = if valid.is_empty() {
            Vec::new()
        } else {
            live.members
                .iter()
                .map(|m| m.mse(&valid.inputs, &valid.targets, valid.len()))
                .collect::<Result<Vec<_>>>()?
        };
        let wm = Self::new(live, normalizer, predict_delta)?;
        Ok((
            wm,
            WorldModelReport {
                train: train_report,
                validation_mse,
            },
        ))
    }

    pub fn predict_member(&self, k: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        predict_with(self.live.member(k)?, state, action, self.predict_delta)
    }

    pub fn predict_frozen_member(&self, k: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let frozen = self
            .frozen
            .as_ref()
            .ok_or_else(|| Error::InvalidState("world model has not been frozen".into()))?;
        predict_with(frozen.member(k)?, state, action, self.predict_delta)
    }

    /// Member `k` on `rows` stacked `(state, action)` pairs.
    pub fn predict_member_batch(
        &self,
        k: usize,
        states: &[f64],
        actions: &[f64],
        rows: usize,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let (sd, ad) = (self.state_dim(), self.action_dim());
        check_len("world model states", rows * sd, states.len())?;
        check_len("world model actions", rows * ad, actions.len())?;
        let mut x = Vec::with_capacity(rows * (sd + ad));
        for r in 0..rows {
            x.extend_from_slice(&states[r * sd..(r + 1) * sd]);
            x.extend_from_slice(&actions[r * ad..(r + 1) * ad]);
        }
        self.live.member(k)?.forward_batch(&x, rows, out)?;
        if self.predict_delta {
            out.iter_mut().zip(states).for_each(|(o, s)| *o += s);
        }
        Ok(())
    }

    /// Snapshots the current members as the reward model. Allowed once.
    pub fn freeze_for_reward(&mut self) -> Result<()> {
        if self.frozen.is_some() {
            return Err(Error::InvalidState("world model is already frozen".into()));
        }
        self.frozen = Some(Arc::new(self.live.clone()));
        Ok(())
    }

    /// `gradient_steps` Adam steps on every live member. Each step draws one
    /// mixed batch (advancing the buffer's schedule once) shared by all
    /// members. The frozen copy is never touched.
    pub fn fine_tune<R: Rng + ?Sized>(
        &mut self,
        buffer: &mut ReplayBuffer,
        gradient_steps: usize,
        batch_size: usize,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<FineTuneReport> {
        let mut report = FineTuneReport::default();
        if gradient_steps == 0 {
            return Ok(report);
        }
        if self.finetune_optim.is_none() {
            let states = self
                .live
                .members
                .iter()
                .map(|m| AdamState::new(adam, m))
                .collect::<Result<Vec<_>>>()?;
            self.finetune_optim = Some(states);
        }
        let (sd, ad) = (self.state_dim(), self.action_dim());
        let optim = self.finetune_optim.as_mut().expect("initialized above");
        report.last_losses = vec![0.0; self.live.len()];
        for _ in 0..gradient_steps {
            let batch = buffer.sample_mixed(batch_size, rng)?;
            report.ratios.push(batch.ratio);
            let set = Self::regression_set(&batch.transitions, sd, ad, self.predict_delta)?;
            for (k, (member, opt)) in self.live.members.iter_mut().zip(optim.iter_mut()).enumerate() {
                let (grads, loss) = member.mse_grad(&set.inputs, &set.targets, set.len())?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { member: k });
                }
                opt.step(member, &grads).map_err(|e| relabel_divergence(e, k))?;
                report.last_losses[k] = loss;
            }
        }
        Ok(report)
    }

    pub fn to_file(&self) -> WorldModelFile {
        WorldModelFile {
            live: EnsembleFile::from(&self.live),
            frozen: self.frozen.as_deref().map(EnsembleFile::from),
            normalizer: self.normalizer.clone(),
            predict_delta: self.predict_delta,
        }
    }

    pub fn from_file(file: WorldModelFile) -> Result<Self> {
        let mut wm = Self::new(file.live.into_ensemble()?, file.normalizer, file.predict_delta)?;
        wm.frozen = file.frozen.map(|f| f.into_ensemble().map(Arc::new)).transpose()?;
        Ok(wm)
    }
}

fn predict_with(member: &crate::nn::Mlp, state: &[f64], action: &[f64], delta: bool) -> Result<Vec<f64>> {
    let sd = member.output_dim();
    check_len("world model state", sd, state.len())?;
    check_len("world model action", member.input_dim() - sd, action.len())?;
    let mut out = member.forward(&concat(state, action))?;
    if delta {
        out.iter_mut().zip(state).for_each(|(o, s)| *o += s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModelFile {
    pub live: EnsembleFile,
    pub frozen: Option<EnsembleFile>,
    pub normalizer: Normalizer,
    pub predict_delta: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mlp, MlpSpec};
    use crate::seed;

    fn zero_member_with_bias(bias: f64) -> Mlp {
        let mut m = Mlp::zeros(MlpSpec::new(2, 1, 3, 1)).unwrap();
        m.layers[1].biases[0] = bias;
        m
    }

    #[test]
    fn zero_weights_give_bias() {
        let e = Ensemble::from_members(vec![zero_member_with_bias(0.25)]).unwrap();
        let wm = DynamicsEnsemble::new(e, Normalizer::identity(1, 1), false).unwrap();
        assert_eq!(wm.predict_member(0, &[3.0], &[-1.0]).unwrap(), vec![0.25]);
        assert_eq!(wm.predict_member(0, &[-9.0], &[4.0]).unwrap(), vec![0.25]);
        assert!(wm.predict_member(1, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let e = Ensemble::init(MlpSpec::new(3, 2, 5, 2), 2, 4).unwrap();
        let wm = DynamicsEnsemble::new(e, Normalizer::identity(2, 1), true).unwrap();
        let states = [0.1, 0.2, -0.5, 0.9];
        let actions = [0.3, -0.7];
        let mut out = Vec::new();
        wm.predict_member_batch(1, &states, &actions, 2, &mut out).unwrap();
        for r in 0..2 {
            let single = wm
                .predict_member(1, &states[r * 2..r * 2 + 2], &actions[r..r + 1])
                .unwrap();
            assert_eq!(&out[r * 2..r * 2 + 2], single.as_slice());
        }
    }

    #[test]
    fn double_freeze_is_rejected() {
        let e = Ensemble::init(MlpSpec::new(2, 1, 3, 1), 2, 0).unwrap();
        let mut wm = DynamicsEnsemble::new(e, Normalizer::identity(1, 1), false).unwrap();
        assert!(wm.predict_frozen_member(0, &[0.0], &[0.0]).is_err());
        wm.freeze_for_reward().unwrap();
        assert!(wm.freeze_for_reward().is_err());
    }

    #[test]
    fn fine_tune_leaves_frozen_copy_untouched() {
        let e = Ensemble::init(MlpSpec::new(2, 1, 8, 1), 3, 0).unwrap();
        let mut wm = DynamicsEnsemble::new(e, Normalizer::identity(1, 1), false).unwrap();
        wm.freeze_for_reward().unwrap();
        let probe = (vec![0.3], vec![-0.2]);
        let frozen_before: Vec<_> = (0..3)
            .map(|k| wm.predict_frozen_member(k, &probe.0, &probe.1).unwrap())
            .collect();
        let live_before = wm.predict_member(0, &probe.0, &probe.1).unwrap();
        let expert: Vec<Transition> = (0..20)
            .map(|i| {
                let s = i as f64 / 10.0 - 1.0;
                Transition::new(vec![s], vec![0.5], vec![s + 0.5]).unwrap()
            })
            .collect();
        let mut buf = ReplayBuffer::new(expert).unwrap();
        wm.fine_tune(&mut buf, 0, 8, AdamConfig::default(), &mut seed::rng(0))
            .unwrap();
        assert_eq!(wm.predict_member(0, &probe.0, &probe.1).unwrap(), live_before);
        wm.fine_tune(&mut buf, 20, 8, AdamConfig::with_learning_rate(1e-2), &mut seed::rng(0))
            .unwrap();
        assert_ne!(wm.predict_member(0, &probe.0, &probe.1).unwrap(), live_before);
        for (k, before) in frozen_before.iter().enumerate() {
            assert_eq!(&wm.predict_frozen_member(k, &probe.0, &probe.1).unwrap(), before);
        }
    }

    #[test]
    fn checkpoint_roundtrip_keeps_frozen() {
        let e = Ensemble::init(MlpSpec::new(3, 2, 4, 1), 2, 1).unwrap();
        let mut wm = DynamicsEnsemble::new(e, Normalizer::identity(2, 1), false).unwrap();
        wm.freeze_for_reward().unwrap();
        let back = DynamicsEnsemble::from_file(wm.to_file()).unwrap();
        assert_eq!(back.live(), wm.live());
        assert_eq!(back.frozen().map(|f| f.as_ref()), wm.frozen().map(|f| f.as_ref()));
    }
}
