//! Offline training, the online loop and evaluation for one run.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::{load_dataset, Normalizer, ReplayBuffer, Trajectory, Transition};
use crate::env::{clip_action, generate_demos, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::harness::config::{AgentKind, ExperimentConfig};
use crate::nn::EnsembleFile;
use crate::planner::Planner;
use crate::prior::BcEnsemble;
use crate::reward::{ExpertIndex, RewardKind, RewardSpec};
use crate::seed::{self, Rng};
use crate::world_model::{DynamicsEnsemble, WorldModelFile};

/// Expert data shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct ExpertData {
    pub demos: Vec<Trajectory>,
    pub normalizer: Normalizer,
    /// Normalized expert states (including final states).
    pub index: Arc<ExpertIndex>,
}

impl ExpertData {
    pub fn new(demos: Vec<Trajectory>) -> Result<Self> {
        let normalizer = Normalizer::from_expert(&demos)?;
        let states = demos
            .iter()
            .flat_map(|t| t.states())
            .map(|s| normalizer.normalize_state(s))
            .collect::<Result<Vec<_>>>()?;
        let index = Arc::new(ExpertIndex::new(states.iter().map(|s| s.as_slice()))?);
        Ok(Self {
            demos,
            normalizer,
            index,
        })
    }

    /// Loads `cfg.demos.path` or generates demonstrations from the master seed.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let demos = match &cfg.demos.path {
            Some(path) => load_demos(path)?,
            None => generate_demos(
                cfg.env.env_name,
                cfg.env.horizon,
                cfg.demos.episodes,
                seed::derive(cfg.master_seed, "demos", 0),
            )?,
        };
        let (sd, ad) = (cfg.env.env_name.state_dim(), cfg.env.env_name.action_dim());
        if let Some(t) = demos.first().and_then(|t| t.transitions().first()) {
            crate::error::check_len("demo state_dim", sd, t.state.len())?;
            crate::error::check_len("demo action_dim", ad, t.action.len())?;
        }
        Self::new(demos)
    }

    pub fn normalized_transitions(&self) -> Result<Vec<Transition>> {
        self.demos
            .iter()
            .flat_map(|t| t.transitions())
            .map(|t| self.normalizer.normalize(t))
            .collect()
    }
}

fn load_demos(path: &Path) -> Result<Vec<Trajectory>> {
    let demos = load_dataset(path)?;
    if demos.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: demo file has no trajectories",
            path.display()
        )));
    }
    Ok(demos)
}

/// Everything a run needs after offline training.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub agent: AgentKind,
    /// BC ensemble. For POIR this is the planner prior; for the baselines it
    /// is the policy itself.
    pub bc: BcEnsemble,
    pub world_model: Option<DynamicsEnsemble>,
    pub reward: Option<RewardSpec>,
    /// Expert statistics; online transitions are stored with these.
    pub normalizer: Normalizer,
    /// L2 imitation reward used for the diagnostic return column.
    pub diagnostic: RewardSpec,
}

fn build_reward(
    kind: RewardKind,
    cfg: &ExperimentConfig,
    expert: &ExpertData,
    bc: &BcEnsemble,
    wm: &DynamicsEnsemble,
) -> Result<RewardSpec> {
    let spec = match kind {
        RewardKind::L2 => RewardSpec::l2(expert.index.clone()),
        RewardKind::Dril => RewardSpec::dril(bc)?,
        RewardKind::Morel => RewardSpec::morel(wm)?,
    };
    Ok(spec.with_eval_point(cfg.eval_point))
}

/// Trains the models the configured agent needs. `run_seed` drives every
/// random choice.
pub fn run_offline(cfg: &ExperimentConfig, expert: &ExpertData, run_seed: u64) -> Result<Bundle> {
    cfg.validate()?;
    let normalizer = expert.normalizer.clone();
    let diagnostic = RewardSpec::l2(expert.index.clone());
    let bc_seed = seed::derive(run_seed, "bc", 0);
    match cfg.agent {
        AgentKind::Poir | AgentKind::PoirNoPrior => {
            let k = cfg.ensemble_size;
            let (bc, _) = BcEnsemble::train(
                &expert.demos,
                normalizer.clone(),
                cfg.network,
                k,
                &cfg.bc_train,
                bc_seed,
            )?;
            let (mut wm, _) = DynamicsEnsemble::train(
                &expert.demos,
                normalizer.clone(),
                cfg.network,
                k,
                &cfg.wm_train,
                seed::derive(run_seed, "world-model", 0),
                cfg.validation_fraction,
                cfg.predict_delta,
            )?;
            wm.freeze_for_reward()?;
            let reward = build_reward(cfg.reward, cfg, expert, &bc, &wm)?;
            Ok(Bundle {
                agent: cfg.agent,
                bc,
                world_model: Some(wm),
                reward: Some(reward),
                normalizer,
                diagnostic,
            })
        }
        AgentKind::Ebc | AgentKind::BcSingle => {
            let k = if cfg.agent == AgentKind::BcSingle {
                1
            } else {
                cfg.ensemble_size
            };
            let bc_norm = if cfg.normalize_baselines {
                normalizer.clone()
            } else {
                Normalizer::identity(normalizer.state_dim(), normalizer.action_dim())
            };
            let (bc, _) = BcEnsemble::train(&expert.demos, bc_norm, cfg.network, k, &cfg.bc_train, bc_seed)?;
            Ok(Bundle {
                agent: cfg.agent,
                bc,
                world_model: None,
                reward: None,
                normalizer,
                diagnostic,
            })
        }
    }
}

/// Policy view of a bundle: raw state in, clipped environment action out.
pub struct Agent<'a> {
    bundle: &'a Bundle,
    planner: Option<Planner<'a>>,
}

impl<'a> Agent<'a> {
    pub fn new(bundle: &'a Bundle, cfg: &ExperimentConfig) -> Result<Self> {
        let planner = match (&bundle.world_model, &bundle.reward) {
            (Some(wm), Some(reward)) if bundle.agent.uses_planner() => {
                let mut pcfg = cfg.planner;
                if bundle.agent == AgentKind::PoirNoPrior {
                    pcfg.use_bc_prior = false;
                }
                Some(Planner::new(&bundle.bc, wm, reward, pcfg)?)
            }
            _ if bundle.agent.uses_planner() => {
                return Err(Error::InvalidState("planner agent bundle lacks a world model".into()))
            }
            _ => None,
        };
        Ok(Self { bundle, planner })
    }

    pub fn act(&self, raw_state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut action = match &self.planner {
            Some(p) => {
                let s = self.bundle.normalizer.normalize_state(raw_state)?;
                let a = p.select_action(&s, rng)?;
                self.bundle.normalizer.denormalize_action(&a)?
            }
            None => self.bundle.bc.predict_ebc(raw_state)?,
        };
        clip_action(&mut action);
        Ok(action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub successes: usize,
    pub episodes: usize,
    pub success_rate: f64,
    /// Mean over episodes of the summed diagnostic reward.
    pub mean_return: f64,
}

/// Runs `episodes` evaluation episodes with seeds derived from `eval_seed`.
/// Nothing is learned and no data is kept.
pub fn evaluate(agent: &Agent<'_>, env_cfg: EnvConfig, episodes: usize, eval_seed: u64) -> Result<EvalResult> {
    evaluate_with(
        |s, rng| agent.act(s, rng),
        &agent.bundle.diagnostic,
        &agent.bundle.normalizer,
        env_cfg,
        episodes,
        eval_seed,
    )
}

/// [`evaluate`] for an arbitrary policy closure.
pub fn evaluate_with<F>(
    mut policy: F,
    diagnostic: &RewardSpec,
    normalizer: &Normalizer,
    env_cfg: EnvConfig,
    episodes: usize,
    eval_seed: u64,
) -> Result<EvalResult>
where
    F: FnMut(&[f64], &mut Rng) -> Result<Vec<f64>>,
{
    if episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut successes = 0;
    let mut total_return = 0.0;
    for ep in 0..episodes {
        let mut env = Env::reset(env_cfg, seed::derive(eval_seed, "eval-episode", ep as u64))?;
        let mut rng = seed::derived_rng(eval_seed, "eval-policy", ep as u64);
        let mut success = false;
        while !env.is_done() {
            let a = policy(env.state(), &mut rng)?;
            let out = env.step(&a)?;
            total_return += diagnostic.reward_l2(&normalizer.normalize_state(&out.next_state)?)?;
            success = out.success;
        }
        successes += usize::from(success);
    }
    Ok(EvalResult {
        successes,
        episodes,
        success_rate: successes as f64 / episodes as f64,
        mean_return: total_return / episodes as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub env_step: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub wall_clock: f64,
    pub mixture_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct OnlineReport {
    pub rows: Vec<MetricsRow>,
    pub bundle: Bundle,
    pub agent_transitions: usize,
    pub gradient_steps: u64,
}

/// The online loop: act, store the normalized transition, fine-tune the
/// world model every `train_every` steps, evaluate every `eval_every` steps
/// (including step 0).
pub fn run_online(
    mut bundle: Bundle,
    cfg: &ExperimentConfig,
    expert: &ExpertData,
    seed_label: u64,
    run_seed: u64,
) -> Result<OnlineReport> {
    cfg.validate()?;
    let sched = cfg.schedule;
    let started = Instant::now();
    let clock = |started: &Instant| {
        if cfg.record_wall_clock {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };
    let mut buffer = ReplayBuffer::new(expert.normalized_transitions()?)?;
    let mut rows = Vec::with_capacity(sched.evaluations_per_run());
    let eval_at = |bundle: &Bundle, step: usize, buffer: &ReplayBuffer| -> Result<EvalResult> {
        let agent = Agent::new(bundle, cfg)?;
        let before = buffer.agent().len();
        let res = evaluate(
            &agent,
            cfg.env,
            sched.eval_episodes,
            seed::derive(run_seed, "eval", step as u64),
        )?;
        debug_assert_eq!(before, buffer.agent().len());
        Ok(res)
    };

    let first = eval_at(&bundle, 0, &buffer).map_err(|e| at_step(0, e))?;
    rows.push(MetricsRow {
        seed: seed_label,
        env_step: 0,
        success_rate: first.success_rate,
        mean_return: first.mean_return,
        wall_clock: clock(&started),
        mixture_ratio: buffer.mixture_ratio(),
    });

    let mut episode = 0u64;
    let mut env = Env::reset(cfg.env, seed::derive(run_seed, "online-episode", episode))?;
    let mut act_rng = seed::derived_rng(run_seed, "online-policy", 0);
    let mut tune_rng = seed::derived_rng(run_seed, "finetune", 0);
    let finetunes = bundle.world_model.is_some() && sched.train_every > 0;

    for step in 1..=sched.total_env_steps {
        let res: Result<()> = (|| {
            let state = env.state().to_vec();
            let action = Agent::new(&bundle, cfg)?.act(&state, &mut act_rng)?;
            let out = env.step(&action)?;
            let n = &bundle.normalizer;
            buffer.push_agent(Transition::new(
                n.normalize_state(&state)?,
                n.normalize_action(&action)?,
                n.normalize_state(&out.next_state)?,
            )?);
            if out.done {
                episode += 1;
                env = Env::reset(cfg.env, seed::derive(run_seed, "online-episode", episode))?;
            }
            if finetunes && step % sched.train_every == 0 {
                if let Some(wm) = bundle.world_model.as_mut() {
                    wm.fine_tune(
                        &mut buffer,
                        sched.grad_steps_per_round,
                        sched.batch_size,
                        sched.finetune_adam,
                        &mut tune_rng,
                    )?;
                }
            }
            if step % sched.eval_every == 0 {
                let r = eval_at(&bundle, step, &buffer)?;
                rows.push(MetricsRow {
                    seed: seed_label,
                    env_step: step,
                    success_rate: r.success_rate,
                    mean_return: r.mean_return,
                    wall_clock: clock(&started),
                    mixture_ratio: buffer.mixture_ratio(),
                });
            }
            Ok(())
        })();
        res.map_err(|e| at_step(step, e))?;
    }
    Ok(OnlineReport {
        rows,
        agent_transitions: buffer.agent().len(),
        gradient_steps: buffer.gradient_steps(),
        bundle,
    })
}

fn at_step(step: usize, e: Error) -> Error {
    match e {
        Error::AtStep { .. } => e,
        other => Error::AtStep {
            step,
            source: Box::new(other),
        },
    }
}

/// Seed that drives one run.
pub fn run_seed(cfg: &ExperimentConfig, seed_label: u64) -> u64 {
    seed::derive(cfg.master_seed, "run", seed_label)
}

pub const BUNDLE_FORMAT: &str = "poir-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// On-disk form of a [`Bundle`]. The L2 reward is rebuilt from the demos on
/// load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    pub format: String,
    pub version: u32,
    pub agent: AgentKind,
    pub bc: EnsembleFile,
    pub bc_normalizer: Normalizer,
    pub world_model: Option<WorldModelFile>,
    pub reward: Option<RewardKind>,
    pub normalizer: Normalizer,
}

impl Bundle {
    pub fn to_file(&self) -> BundleFile {
        BundleFile {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            agent: self.agent,
            bc: EnsembleFile::from(&self.bc.ensemble),
            bc_normalizer: self.bc.normalizer.clone(),
            world_model: self.world_model.as_ref().map(|w| w.to_file()),
            reward: self.reward.as_ref().map(|r| r.kind()),
            normalizer: self.normalizer.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write_json(path, &self.to_file())
    }

    pub fn load(path: &Path, cfg: &ExperimentConfig, expert: &ExpertData) -> Result<Self> {
        let file: BundleFile = checkpoint::read_json(path)?;
        if file.format != BUNDLE_FORMAT || file.version != BUNDLE_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!(
                    "expected {BUNDLE_FORMAT} v{BUNDLE_VERSION}, got {} v{}",
                    file.format, file.version
                ),
            });
        }
        Self::from_file(file, cfg, expert)
    }

    pub fn from_file(file: BundleFile, cfg: &ExperimentConfig, expert: &ExpertData) -> Result<Self> {
        let bc = BcEnsemble::new(file.bc.into_ensemble()?, file.bc_normalizer)?;
        let world_model = file.world_model.map(DynamicsEnsemble::from_file).transpose()?;
        let reward = match (file.reward, &world_model) {
            (Some(kind), Some(wm)) => Some(build_reward(kind, cfg, expert, &bc, wm)?),
            (Some(_), None) => return Err(Error::InvalidState("bundle has a reward but no world model".into())),
            (None, _) => None,
        };
        Ok(Self {
            agent: file.agent,
            bc,
            world_model,
            reward,
            normalizer: file.normalizer,
            diagnostic: RewardSpec::l2(expert.index.clone()),
        })
    }
}
