//! Fixed-horizon toy control tasks with scripted experts.
//!
//! Demonstrations are always recorded at the demo noise level
//! (`sigma_init = 0.02`, `sigma_action = 0`); deployment may use any noise.
//! Only the agent's starting position is perturbed by `sigma_init`; goal and
//! object positions keep their own fixed jitter.

pub mod point_reach;
pub mod toy_lift;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const WORKSPACE: f64 = 1.0;
pub const DEMO_SIGMA_INIT: f64 = 0.02;
/// Standard deviation of the toy_lift object placement, never scaled.
pub const OBJECT_JITTER: f64 = 0.02;

pub(crate) fn clamp_box(x: f64) -> f64 {
    x.clamp(-WORKSPACE, WORKSPACE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    PointReach,
    ToyLift,
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_reach" => Ok(EnvName::PointReach),
            "toy_lift" => Ok(EnvName::ToyLift),
            other => Err(Error::InvalidConfig(format!(
                "unknown env {other:?} (expected point_reach or toy_lift)"
            ))),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvName::PointReach => "point_reach",
            EnvName::ToyLift => "toy_lift",
        })
    }
}

impl EnvName {
    pub fn state_dim(self) -> usize {
        match self {
            EnvName::PointReach => point_reach::STATE_DIM,
            EnvName::ToyLift => toy_lift::STATE_DIM,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvName::PointReach => point_reach::ACTION_DIM,
            EnvName::ToyLift => toy_lift::ACTION_DIM,
        }
    }

    pub fn initial_state(self, sigma_init: f64, rng: &mut Rng) -> Vec<f64> {
        match self {
            EnvName::PointReach => point_reach::initial_state(sigma_init, rng),
            EnvName::ToyLift => toy_lift::initial_state(sigma_init, rng),
        }
    }

    /// Noise-free transition under an executed (clipped) action.
    pub fn dynamics(self, state: &[f64], action: &[f64]) -> Vec<f64> {
        match self {
            EnvName::PointReach => point_reach::dynamics(state, action),
            EnvName::ToyLift => toy_lift::dynamics(state, action),
        }
    }

    pub fn is_success(self, state: &[f64]) -> bool {
        match self {
            EnvName::PointReach => point_reach::is_success(state),
            EnvName::ToyLift => toy_lift::is_success(state),
        }
    }

    pub fn scripted_expert(self, state: &[f64]) -> Vec<f64> {
        match self {
            EnvName::PointReach => point_reach::expert(state),
            EnvName::ToyLift => toy_lift::expert(state),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub env_name: EnvName,
    pub sigma_init: f64,
    pub sigma_action: f64,
    pub horizon: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            env_name: EnvName::PointReach,
            sigma_init: DEMO_SIGMA_INIT,
            sigma_action: 0.0,
            horizon: 100,
        }
    }
}

impl EnvConfig {
    /// Demo-collection settings for `env_name`.
    pub fn demo(env_name: EnvName, horizon: usize) -> Self {
        Self {
            env_name,
            sigma_init: DEMO_SIGMA_INIT,
            sigma_action: 0.0,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        if !ok(self.sigma_init) || !ok(self.sigma_action) {
            return Err(Error::InvalidConfig("noise levels must be finite and >= 0".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("env horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub done: bool,
    pub success: bool,
}

/// A running episode.
#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: EnvConfig,
    state: Vec<f64>,
    t: usize,
    noise: Normal<f64>,
    noise_rng: Rng,
}

impl Env {
    /// Starts an episode; the initial state and the action-noise stream are
    /// both derived from `episode_seed`.
    pub fn reset(cfg: EnvConfig, episode_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = seed::derived_rng(episode_seed, "env-reset", 0);
        let state = cfg.env_name.initial_state(cfg.sigma_init, &mut init_rng);
        Ok(Self {
            cfg,
            state,
            t: 0,
            noise: Normal::new(0.0, cfg.sigma_action).expect("validated sigma"),
            noise_rng: seed::derived_rng(episode_seed, "env-action-noise", 0),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.horizon
    }

    /// Adds action noise, clips to `[-1, 1]` and advances one step.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let name = self.cfg.env_name;
        if action.len() != name.action_dim() {
            return Err(Error::shape("env action", name.action_dim(), action.len()));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite action".into()));
        }
        if self.is_done() {
            return Err(Error::InvalidState("episode already finished".into()));
        }
        let executed: Vec<f64> = action
            .iter()
            .map(|a| {
                let noisy = if self.cfg.sigma_action > 0.0 {
                    a + self.noise.sample(&mut self.noise_rng)
                } else {
                    *a
                };
                noisy.clamp(-1.0, 1.0)
            })
            .collect();
        self.state = name.dynamics(&self.state, &executed);
        self.t += 1;
        Ok(StepOutcome {
            next_state: self.state.clone(),
            done: self.is_done(),
            success: name.is_success(&self.state),
        })
    }
}

pub fn clip_action(action: &mut [f64]) {
    action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
}

/// Runs one full episode. `policy` maps the raw state to a raw action, which
/// is clipped before it reaches the environment. Success is read at the last
/// step.
pub fn run_episode<F>(cfg: EnvConfig, episode_seed: u64, mut policy: F) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut env = Env::reset(cfg, episode_seed)?;
    let mut states = vec![env.state().to_vec()];
    let mut actions = Vec::with_capacity(cfg.horizon);
    let mut success = false;
    while !env.is_done() {
        let mut a = policy(env.state())?;
        clip_action(&mut a);
        let out = env.step(&a)?;
        success = out.success;
        actions.push(a);
        states.push(out.next_state);
    }
    Trajectory::from_states_actions(states, actions, success, episode_seed)
}

/// Successful expert demonstrations at the demo noise level. Failed episodes
/// are replaced by fresh ones.
pub fn generate_demos(
    env_name: EnvName,
    horizon: usize,
    n_episodes: usize,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    let cfg = EnvConfig::demo(env_name, horizon);
    let mut demos = Vec::with_capacity(n_episodes);
    let mut attempts = 0u64;
    while demos.len() < n_episodes {
        let episode_seed = seed::derive(master_seed, "demo-episode", attempts);
        attempts += 1;
        let traj = run_episode(cfg, episode_seed, |s| Ok(env_name.scripted_expert(s)))?;
        if traj.success {
            demos.push(traj);
        }
        let failures = attempts as usize - demos.len();
        if attempts >= 20 && failures * 2 > attempts as usize {
            return Err(Error::ExpertTooWeak {
                rate: demos.len() as f64 / attempts as f64,
            });
        }
    }
    Ok(demos)
}
