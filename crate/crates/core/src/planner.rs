//! Sampling-based MPC action selection.
//!
//! `N` rollouts of `H` steps start from the current (normalized) state.
//! Rollout `n` (counted from 1) uses ensemble head `l = n mod K` for both the
//! BC proposal and the dynamics model at every step. At each step the head's
//! BC action is perturbed with `N(0, sigma^2 I)` noise, pushed through the
//! head's dynamics model, and the transition is scored with the imitation
//! reward. The returned action is the mean first action of the `top_k`
//! highest-return rollouts (ties go to the lower rollout index).
//!
//! Randomness: one `u64` call seed is drawn from the caller's generator;
//! rollout `n` draws all its noise from substream `n` of that seed. Results
//! therefore do not depend on the order rollouts are evaluated in.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::prior::BcEnsemble;
use crate::reward::RewardSpec;
use crate::seed;
use crate::world_model::DynamicsEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub num_trajectories: usize,
    pub noise_sigma: f64,
    pub top_k: usize,
    /// When false, actions are sampled uniformly in the normalized action box.
    pub use_bc_prior: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            num_trajectories: 200,
            noise_sigma: 0.2,
            top_k: 1,
            use_bc_prior: true,
        }
    }
}

impl PlannerConfig {
    pub fn full_scale() -> Self {
        Self {
            num_trajectories: 4000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.num_trajectories == 0 {
            return Err(Error::InvalidConfig(
                "planner horizon and num_trajectories must be >= 1".into(),
            ));
        }
        if self.top_k == 0 || self.top_k > self.num_trajectories {
            return Err(Error::InvalidConfig(format!(
                "top_k must be in 1..={}, got {}",
                self.num_trajectories, self.top_k
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Ensemble head used by rollout `n` (1-based).
pub fn head_for(n: usize, k: usize) -> usize {
    n % k
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    /// `H x action_dim`, row-major, normalized units.
    pub actions: Vec<f64>,
    pub ret: f64,
    pub head: usize,
}

impl RolloutRecord {
    pub fn first_action(&self, action_dim: usize) -> &[f64] {
        &self.actions[..action_dim]
    }
}

#[derive(Debug, Clone)]
pub struct Plan {
    /// Selected action in normalized units.
    pub action: Vec<f64>,
    pub records: Vec<RolloutRecord>,
    /// Rollout indices (0-based) ranked by return, best first; diverged
    /// rollouts are left out.
    pub ranking: Vec<usize>,
}

pub struct Planner<'a> {
    pub bc: &'a BcEnsemble,
    pub wm: &'a DynamicsEnsemble,
    pub reward: &'a RewardSpec,
    pub cfg: PlannerConfig,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

impl<'a> Planner<'a> {
    pub fn new(
        bc: &'a BcEnsemble,
        wm: &'a DynamicsEnsemble,
        reward: &'a RewardSpec,
        cfg: PlannerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if bc.len() != wm.len() {
            return Err(Error::InvalidConfig(format!(
                "BC prior has {} members but the world model has {}",
                bc.len(),
                wm.len()
            )));
        }
        check_len("world model state_dim", bc.state_dim(), wm.state_dim())?;
        check_len("world model action_dim", bc.action_dim(), wm.action_dim())?;
        let ad = bc.action_dim();
        let low = bc.normalizer.normalize_action(&vec![-1.0; ad])?;
        let high = bc.normalizer.normalize_action(&vec![1.0; ad])?;
        Ok(Self {
            bc,
            wm,
            reward,
            cfg,
            action_low: low,
            action_high: high,
        })
    }

    /// Sets the environment action box used by the no-prior sampler.
    pub fn with_action_box(mut self, low: &[f64], high: &[f64]) -> Result<Self> {
        self.action_low = self.bc.normalizer.normalize_action(low)?;
        self.action_high = self.bc.normalizer.normalize_action(high)?;
        Ok(self)
    }

    pub fn select_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.plan(state, rng)?.action)
    }

    pub fn plan<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Plan> {
        let call_seed: u64 = rng.random();
        let records = self.rollout_batch(state, call_seed)?;
        let ad = self.bc.action_dim();
        let mut ranking: Vec<usize> = (0..records.len()).filter(|&i| records[i].ret.is_finite()).collect();
        if ranking.is_empty() {
            return Err(Error::AllRolloutsDiverged);
        }
        // stable sort keeps the lower index first among equal returns
        ranking.sort_by(|&a, &b| records[b].ret.total_cmp(&records[a].ret));
        let k = self.cfg.top_k.min(ranking.len());
        let action = if k == 1 {
            records[ranking[0]].first_action(ad).to_vec()
        } else {
            // mean written as offsets from the best action, so k identical
            // actions average to exactly that action
            let anchor = records[ranking[0]].first_action(ad);
            let mut offset = vec![0.0; ad];
            for &i in &ranking[1..k] {
                for ((o, a), b) in offset.iter_mut().zip(records[i].first_action(ad)).zip(anchor) {
                    *o += a - b;
                }
            }
            anchor.iter().zip(offset).map(|(b, o)| b + o / k as f64).collect()
        };
        Ok(Plan {
            action,
            records,
            ranking,
        })
    }

    /// Simulates all `N` rollouts for one call seed. Rollouts sharing a head
    /// are evaluated together as one batch.
    pub fn rollout_batch(&self, state: &[f64], call_seed: u64) -> Result<Vec<RolloutRecord>> {
        let (sd, ad) = (self.bc.state_dim(), self.bc.action_dim());
        check_len("planner state", sd, state.len())?;
        let (n_traj, h, k) = (self.cfg.num_trajectories, self.cfg.horizon, self.bc.len());
        let mut records: Vec<RolloutRecord> = (1..=n_traj)
            .map(|n| RolloutRecord {
                actions: Vec::with_capacity(h * ad),
                ret: 0.0,
                head: head_for(n, k),
            })
            .collect();

        let (mut proposals, mut next, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
        for head in 0..k {
            // 0-based rollout indices i with (i + 1) % k == head
            let members: Vec<usize> = (0..n_traj).filter(|&i| records[i].head == head).collect();
            if members.is_empty() {
                continue;
            }
            let g = members.len();
            let mut rngs: Vec<_> = members
                .iter()
                .map(|&i| seed::substream(call_seed, i as u64 + 1))
                .collect();
            let mut states: Vec<f64> = state.repeat(g);
            let mut dead = vec![false; g];
            for _ in 0..h {
                if self.cfg.use_bc_prior {
                    self.bc.predict_member_batch(head, &states, g, &mut proposals)?;
                    for (row, r) in rngs.iter_mut().enumerate() {
                        for d in 0..ad {
                            let z: f64 = StandardNormal.sample(r);
                            proposals[row * ad + d] += self.cfg.noise_sigma * z;
                        }
                    }
                } else {
                    proposals.clear();
                    for r in rngs.iter_mut() {
                        for d in 0..ad {
                            let u: f64 = r.random();
                            proposals.push(self.action_low[d] + u * (self.action_high[d] - self.action_low[d]));
                        }
                    }
                }
                self.wm.predict_member_batch(head, &states, &proposals, g, &mut next)?;
                self.reward.score_batch(&states, &proposals, &next, g, &mut rewards)?;
                for (row, &i) in members.iter().enumerate() {
                    let rec = &mut records[i];
                    rec.actions.extend_from_slice(&proposals[row * ad..(row + 1) * ad]);
                    rec.ret += rewards[row];
                    if next[row * sd..(row + 1) * sd].iter().any(|v| !v.is_finite()) {
                        dead[row] = true;
                    }
                }
                std::mem::swap(&mut states, &mut next);
            }
            for (row, &i) in members.iter().enumerate() {
                if dead[row] || !records[i].ret.is_finite() {
                    records[i].ret = f64::NEG_INFINITY;
                }
            }
        }
        Ok(records)
    }

    /// Re-simulates a stored action sequence through `head` and returns the
    /// summed reward.
    pub fn replay(&self, state: &[f64], head: usize, actions: &[f64]) -> Result<f64> {
        let ad = self.bc.action_dim();
        let mut s = state.to_vec();
        let mut ret = 0.0;
        for a in actions.chunks(ad) {
            let next = self.wm.predict_member(head, &s, a)?;
            ret += self.reward.score_transition(&s, a, &next)?;
            s = next;
        }
        Ok(ret)
    }
}
