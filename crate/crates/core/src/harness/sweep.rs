//! Noise sweeps over agents and seeds, written as one CSV.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{AgentKind, ExperimentConfig};
use crate::harness::run::{run_offline, run_online, run_seed, Bundle, ExpertData, MetricsRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SigmaInit,
    SigmaAction,
}

impl SweepAxis {
    pub fn default_levels(self) -> Vec<f64> {
        match self {
            SweepAxis::SigmaInit => vec![0.02, 0.1, 0.2, 0.3, 0.4],
            SweepAxis::SigmaAction => vec![0.0, 0.025, 0.05, 0.075, 0.1],
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, level: f64) {
        match self {
            SweepAxis::SigmaInit => cfg.env.sigma_init = level,
            SweepAxis::SigmaAction => cfg.env.sigma_action = level,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma_init" => Ok(SweepAxis::SigmaInit),
            "sigma_action" => Ok(SweepAxis::SigmaAction),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {other:?} (expected sigma_init or sigma_action)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::SigmaInit => "sigma_init",
            SweepAxis::SigmaAction => "sigma_action",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Eval,
    FinalOffline,
    FinalOnline,
}

/// One CSV line: a [`MetricsRow`] tagged with its sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub agent: AgentKind,
    pub env: String,
    pub sigma_init: f64,
    pub sigma_action: f64,
    pub kind: RowKind,
    pub seed: u64,
    pub env_step: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub wall_clock: f64,
    pub mixture_ratio: f64,
}

impl SweepRow {
    fn new(cfg: &ExperimentConfig, kind: RowKind, m: &MetricsRow) -> Self {
        Self {
            agent: cfg.agent,
            env: cfg.env.env_name.to_string(),
            sigma_init: cfg.env.sigma_init,
            sigma_action: cfg.env.sigma_action,
            kind,
            seed: m.seed,
            env_step: m.env_step,
            success_rate: m.success_rate,
            mean_return: m.mean_return,
            wall_clock: m.wall_clock,
            mixture_ratio: m.mixture_ratio,
        }
    }
}

/// All rows of one run: every evaluation plus the offline (step 0) and
/// final-online summaries.
pub fn rows_for_run(cfg: &ExperimentConfig, metrics: &[MetricsRow]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = metrics.iter().map(|m| SweepRow::new(cfg, RowKind::Eval, m)).collect();
    if let (Some(first), Some(last)) = (metrics.first(), metrics.last()) {
        rows.push(SweepRow::new(cfg, RowKind::FinalOffline, first));
        rows.push(SweepRow::new(cfg, RowKind::FinalOnline, last));
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub agent: AgentKind,
    pub seed: u64,
    pub level: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
}

pub struct SweepSpec {
    pub axis: SweepAxis,
    pub levels: Vec<f64>,
    pub agents: Vec<AgentKind>,
}

/// Runs every `(agent, level, seed)` cell. Offline training is shared by
/// the levels of one `(agent, seed)` pair. Rows come out in
/// agent / seed / level order whatever the worker count. A failing cell is
/// reported and skipped.
pub fn run_sweep(base: &ExperimentConfig, spec: &SweepSpec, expert: &ExpertData) -> Result<SweepReport> {
    base.validate()?;
    if spec.levels.is_empty() || spec.agents.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one level and one agent".into(),
        ));
    }
    for &level in &spec.levels {
        if !(level.is_finite() && level >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sweep level {level} must be finite and >= 0"
            )));
        }
    }
    let jobs: Vec<(AgentKind, u64)> = spec
        .agents
        .iter()
        .flat_map(|&a| base.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results: Mutex<Vec<Option<(Vec<SweepRow>, Vec<CellFailure>)>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = base.jobs.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(agent, seed)) = jobs.get(i) else { break };
                let out = run_pair(base, spec, expert, agent, seed);
                results.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    let mut report = SweepReport::default();
    for (rows, failures) in results.into_inner().expect("no worker panicked").into_iter().flatten() {
        report.rows.extend(rows);
        report.failures.extend(failures);
    }
    Ok(report)
}

fn run_pair(
    base: &ExperimentConfig,
    spec: &SweepSpec,
    expert: &ExpertData,
    agent: AgentKind,
    seed: u64,
) -> (Vec<SweepRow>, Vec<CellFailure>) {
    let mut cfg = base.clone();
    cfg.agent = agent;
    let rs = run_seed(&cfg, seed);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let bundle: Bundle = match run_offline(&cfg, expert, rs) {
        Ok(b) => b,
        Err(e) => {
            failures.push(CellFailure {
                agent,
                seed,
                level: None,
                message: e.to_string(),
            });
            return (rows, failures);
        }
    };
    for &level in &spec.levels {
        let mut cell = cfg.clone();
        spec.axis.apply(&mut cell, level);
        match run_online(bundle.clone(), &cell, expert, seed, rs) {
            Ok(report) => rows.extend(rows_for_run(&cell, &report.rows)),
            Err(e) => failures.push(CellFailure {
                agent,
                seed,
                level: Some(level),
                message: e.to_string(),
            }),
        }
    }
    (rows, failures)
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e: csv::Error| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(n: usize) -> Vec<MetricsRow> {
        (0..n)
            .map(|i| MetricsRow {
                seed: 3,
                env_step: i * 10,
                success_rate: i as f64 / 10.0,
                mean_return: -1.5,
                wall_clock: 0.0,
                mixture_ratio: 0.05 * i as f64,
            })
            .collect()
    }

    #[test]
    fn run_rows_add_two_summaries() {
        let cfg = ExperimentConfig::default();
        let rows = rows_for_run(&cfg, &metrics(4));
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[4].kind, RowKind::FinalOffline);
        assert_eq!(rows[4].env_step, 0);
        assert_eq!(rows[5].kind, RowKind::FinalOnline);
        assert_eq!(rows[5].env_step, 30);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = rows_for_run(&ExperimentConfig::default(), &metrics(3));
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("agent,env,sigma_init,sigma_action,kind,seed,env_step,success_rate"));
    }

    #[test]
    fn axis_names() {
        assert_eq!("sigma_init".parse::<SweepAxis>().unwrap(), SweepAxis::SigmaInit);
        assert!("sigma".parse::<SweepAxis>().is_err());
        assert_eq!(
            SweepAxis::SigmaAction.default_levels(),
            vec![0.0, 0.025, 0.05, 0.075, 0.1]
        );
    }
}
