//! Experiment configuration (TOML) and dotted-key overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, NetShape, TrainConfig};
use crate::planner::PlannerConfig;
use crate::reward::{EvalPoint, RewardKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Planner with BC proposals and a learned world model.
    Poir,
    /// Mean of the BC ensemble.
    Ebc,
    /// A single BC network.
    BcSingle,
    /// Planner sampling actions uniformly instead of from the BC prior.
    PoirNoPrior,
}

impl AgentKind {
    pub fn uses_planner(self) -> bool {
        matches!(self, AgentKind::Poir | AgentKind::PoirNoPrior)
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poir" => Ok(AgentKind::Poir),
            "ebc" => Ok(AgentKind::Ebc),
            "bc_single" => Ok(AgentKind::BcSingle),
            "poir_no_prior" => Ok(AgentKind::PoirNoPrior),
            other => Err(Error::InvalidConfig(format!(
                "unknown agent {other:?} (expected poir, ebc, bc_single or poir_no_prior)"
            ))),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Poir => "poir",
            AgentKind::Ebc => "ebc",
            AgentKind::BcSingle => "bc_single",
            AgentKind::PoirNoPrior => "poir_no_prior",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    /// JSON-lines dataset. When unset, demos are generated from the master seed.
    pub path: Option<PathBuf>,
    pub episodes: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            path: None,
            episodes: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub total_env_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Environment steps between fine-tuning rounds; 0 disables fine-tuning.
    pub train_every: usize,
    pub grad_steps_per_round: usize,
    pub batch_size: usize,
    pub finetune_adam: AdamConfig,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_env_steps: 50_000,
            eval_every: 5_000,
            eval_episodes: 20,
            train_every: 50,
            grad_steps_per_round: 50,
            batch_size: 128,
            finetune_adam: AdamConfig::with_learning_rate(1e-3),
        }
    }
}

impl Schedule {
    pub fn full_scale() -> Self {
        Self {
            total_env_steps: 500_000,
            eval_every: 50_000,
            eval_episodes: 20,
            train_every: 50,
            grad_steps_per_round: 50,
            batch_size: 256,
            finetune_adam: AdamConfig::default(),
        }
    }

    pub fn evaluations_per_run(&self) -> usize {
        self.total_env_steps / self.eval_every + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// One run per entry; each run's seeds are derived from
    /// `(master_seed, "run", seed)`.
    pub seeds: Vec<u64>,
    pub agent: AgentKind,
    pub env: EnvConfig,
    pub demos: DemoConfig,
    pub network: NetShape,
    pub ensemble_size: usize,
    pub bc_train: TrainConfig,
    pub wm_train: TrainConfig,
    pub validation_fraction: f64,
    pub predict_delta: bool,
    /// Train the EBC / single-BC baselines on normalized data too.
    pub normalize_baselines: bool,
    pub reward: RewardKind,
    pub eval_point: EvalPoint,
    pub planner: PlannerConfig,
    pub schedule: Schedule,
    /// Fill the `wall_clock` column; off by default so CSVs are reproducible.
    pub record_wall_clock: bool,
    /// Worker threads for sweeps; results do not depend on it.
    pub jobs: usize,
}

fn desk_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 128,
        adam: AdamConfig::with_learning_rate(1e-3),
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            seeds: (0..5).collect(),
            agent: AgentKind::Poir,
            env: EnvConfig::default(),
            demos: DemoConfig::default(),
            network: NetShape {
                hidden_width: 32,
                depth: 2,
                ..NetShape::default()
            },
            ensemble_size: 5,
            bc_train: desk_train(30),
            // the dynamics fit benefits from far more passes than the policy
            wm_train: desk_train(300),
            validation_fraction: 0.1,
            predict_delta: true,
            normalize_baselines: false,
            reward: RewardKind::L2,
            eval_point: EvalPoint::NextState,
            planner: PlannerConfig {
                top_k: 5,
                ..PlannerConfig::default()
            },
            schedule: Schedule::default(),
            record_wall_clock: false,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    /// Full-size settings: 27 members of 5x300 networks, 4000 rollouts,
    /// 500k environment steps.
    pub fn full_scale() -> Self {
        Self {
            network: NetShape::default(),
            ensemble_size: 27,
            bc_train: TrainConfig::default(),
            wm_train: TrainConfig::default(),
            predict_delta: false,
            planner: PlannerConfig::full_scale(),
            schedule: Schedule::full_scale(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.planner.validate()?;
        self.bc_train.adam.validate()?;
        self.wm_train.adam.validate()?;
        self.schedule.finetune_adam.validate()?;
        let s = &self.schedule;
        if s.eval_every == 0 || s.total_env_steps % s.eval_every != 0 {
            return Err(Error::InvalidConfig(format!(
                "eval_every ({}) must be >= 1 and divide total_env_steps ({})",
                s.eval_every, s.total_env_steps
            )));
        }
        if s.eval_episodes == 0 {
            return Err(Error::InvalidConfig("eval_episodes must be >= 1".into()));
        }
        if s.batch_size == 0 || self.bc_train.batch_size == 0 || self.wm_train.batch_size == 0 {
            return Err(Error::InvalidConfig("batch sizes must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("ensemble_size must be >= 1".into()));
        }
        if self.reward != RewardKind::L2 && self.ensemble_size < 2 && self.agent.uses_planner() {
            return Err(Error::InvalidConfig(format!(
                "the {} reward needs ensemble_size >= 2",
                self.reward
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig("validation_fraction must be in [0, 1)".into()));
        }
        if self.demos.episodes == 0 && self.demos.path.is_none() {
            return Err(Error::InvalidConfig("demos.episodes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|span| text[..span.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Applies `key.path=value` overrides. Values are read as TOML literals
    /// and fall back to plain strings (`env.env_name=toy_lift`).
    pub fn apply_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Serde(e.to_string()))?;
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override {raw:?} is not key=value")))?;
            set_path(&mut root, key.trim(), parse_value(value.trim()))?;
        }
        root.try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))
    }
}

fn parse_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override key {key:?}: {part:?} is not a table")))?;
        if i + 1 == parts.len() {
            table.insert((*part).to_string(), value);
            return Ok(());
        }
        node = table
            .entry((*part).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::InvalidConfig("empty override key".into()))
}
