use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poir::data::save_dataset;
use poir::env::{generate_demos, EnvName};
use poir::harness::{
    plot, read_csv, rows_for_run, run_offline, run_online, run_seed, run_sweep, write_csv, Agent, AgentKind, Bundle,
    ExperimentConfig, ExpertData, SweepAxis, SweepSpec,
};
use poir::reward::RewardKind;
use poir::{Error, Result};

#[derive(Parser)]
#[command(
    name = "poir",
    version,
    about = "Planning with imitation rewards on toy control tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted-expert demonstrations as JSON lines.
    GenDemos {
        #[arg(long, default_value = "point_reach")]
        env: EnvName,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the offline models for one seed and write a checkpoint.
    TrainOffline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline training followed by the online loop for every configured seed.
    RunOnline {
        #[command(flatten)]
        common: Common,
        /// Start from this checkpoint instead of training (single seed).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Success rate of a checkpoint (or of freshly trained models).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run every (agent, noise level, seed) cell and write one CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "sigma_init")]
        axis: SweepAxis,
        /// Comma-separated levels; defaults to the axis' standard values.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        /// Comma-separated agents.
        #[arg(long, value_delimiter = ',', default_value = "poir,ebc")]
        agents: Vec<AgentKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a metrics CSV and draw it as SVG.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config field: `--set planner.horizon=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    env: Option<EnvName>,
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    reward: Option<RewardKind>,
    #[arg(long)]
    demos: Option<PathBuf>,
    #[arg(long)]
    sigma_init: Option<f64>,
    #[arg(long)]
    sigma_action: Option<f64>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    num_trajectories: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    no_bc_prior: bool,
    #[arg(long)]
    total_env_steps: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Use the full-size defaults instead of the desk-scale ones.
    #[arg(long)]
    full_scale: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None if self.full_scale => ExperimentConfig::full_scale(),
            None => ExperimentConfig::default(),
        };
        cfg = cfg.apply_overrides(&self.overrides)?;
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.env.env_name, self.env);
        set!(cfg.agent, self.agent);
        set!(cfg.reward, self.reward);
        set!(cfg.env.sigma_init, self.sigma_init);
        set!(cfg.env.sigma_action, self.sigma_action);
        set!(cfg.master_seed, self.master_seed);
        set!(cfg.seeds, self.seeds);
        set!(cfg.planner.horizon, self.horizon);
        set!(cfg.planner.num_trajectories, self.num_trajectories);
        set!(cfg.planner.noise_sigma, self.noise_sigma);
        set!(cfg.planner.top_k, self.top_k);
        set!(cfg.schedule.total_env_steps, self.total_env_steps);
        set!(cfg.schedule.eval_every, self.eval_every);
        set!(cfg.schedule.eval_episodes, self.eval_episodes);
        set!(cfg.jobs, self.jobs);
        if self.demos.is_some() {
            cfg.demos.path = self.demos.clone();
        }
        if self.no_bc_prior {
            cfg.planner.use_bc_prior = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_or_train(cfg: &ExperimentConfig, expert: &ExpertData, checkpoint: Option<&Path>) -> Result<Bundle> {
    match checkpoint {
        Some(path) => Bundle::load(path, cfg, expert),
        None => run_offline(cfg, expert, run_seed(cfg, cfg.seeds[0])),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDemos {
            env,
            episodes,
            horizon,
            seed,
            out,
        } => {
            let demos = generate_demos(env, horizon, episodes, seed)?;
            save_dataset(&out, &demos)?;
            println!("wrote {} demonstrations to {}", demos.len(), out.display());
        }
        Command::TrainOffline { common, out } => {
            let cfg = common.config()?;
            let expert = ExpertData::prepare(&cfg)?;
            let bundle = run_offline(&cfg, &expert, run_seed(&cfg, cfg.seeds[0]))?;
            bundle.save(&out)?;
            println!("wrote {} checkpoint to {}", cfg.agent, out.display());
        }
        Command::RunOnline {
            common,
            checkpoint,
            out,
        } => {
            let cfg = common.config()?;
            let expert = ExpertData::prepare(&cfg)?;
            let seeds = if checkpoint.is_some() {
                &cfg.seeds[..1]
            } else {
                &cfg.seeds[..]
            };
            let mut rows = Vec::new();
            for &seed in seeds {
                let rs = run_seed(&cfg, seed);
                let bundle = match &checkpoint {
                    Some(path) => Bundle::load(path, &cfg, &expert)?,
                    None => run_offline(&cfg, &expert, rs)?,
                };
                let report = run_online(bundle, &cfg, &expert, seed, rs)?;
                for m in &report.rows {
                    eprintln!("seed {seed} step {:>7}: success {:.3}", m.env_step, m.success_rate);
                }
                rows.extend(rows_for_run(&cfg, &report.rows));
            }
            write_csv(&out, &rows)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Evaluate {
            common,
            checkpoint,
            episodes,
        } => {
            let cfg = common.config()?;
            let expert = ExpertData::prepare(&cfg)?;
            let bundle = load_or_train(&cfg, &expert, checkpoint.as_deref())?;
            let agent = Agent::new(&bundle, &cfg)?;
            let n = episodes.unwrap_or(cfg.schedule.eval_episodes);
            let res = poir::harness::evaluate(&agent, cfg.env, n, poir::seed::derive(cfg.master_seed, "evaluate", 0))?;
            println!(
                "{} on {}: success {}/{} = {:.3}, mean diagnostic return {:.3}",
                bundle.agent, cfg.env.env_name, res.successes, res.episodes, res.success_rate, res.mean_return
            );
        }
        Command::Sweep {
            common,
            axis,
            levels,
            agents,
            out,
        } => {
            let cfg = common.config()?;
            let expert = ExpertData::prepare(&cfg)?;
            let levels = if levels.is_empty() {
                axis.default_levels()
            } else {
                levels
            };
            let spec = SweepSpec { axis, levels, agents };
            let report = run_sweep(&cfg, &spec, &expert)?;
            write_csv(&out, &report.rows)?;
            for f in &report.failures {
                let level = f.level.map(|l| format!(" {axis}={l}")).unwrap_or_default();
                eprintln!("cell failed: agent {} seed {}{level}: {}", f.agent, f.seed, f.message);
            }
            println!(
                "wrote {} rows to {} ({} failed cells)",
                report.rows.len(),
                out.display(),
                report.failures.len()
            );
        }
        Command::Plot { csv, out } => {
            let rows = read_csv(&csv)?;
            let (is_action, cells) = plot::summarize(&rows);
            print!("{}", plot::table(&cells, is_action));
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            std::fs::write(&out, plot::svg(&cells, is_action)).map_err(|e| Error::io(&out, e))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
