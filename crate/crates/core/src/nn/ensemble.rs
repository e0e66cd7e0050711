//! Bootstrap ensembles of identically shaped MLPs.
//!
//! Every member sees the full dataset; members differ only through their
//! initialization seed, which also seeds their private minibatch shuffle.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::mlp::{Mlp, MlpSpec};
use crate::seed;

/// Supervised regression pairs stored as two row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSet {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl RegressionSet {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            inputs: Vec::new(),
            targets: Vec::new(),
            input_dim,
            output_dim,
        }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) -> Result<()> {
        check_len("regression input", self.input_dim, input.len())?;
        check_len("regression target", self.output_dim, target.len())?;
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.input_dim == 0 {
            0
        } else {
            self.inputs.len() / self.input_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// Deterministic split: `fraction` of the rows (rounded down) go to the
    /// second set, chosen by a seeded shuffle.
    pub fn split(&self, fraction: f64, seed: u64) -> (RegressionSet, RegressionSet) {
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seed::rng(seed));
        let held = ((n as f64) * fraction).floor() as usize;
        let mut train = RegressionSet::new(self.input_dim, self.output_dim);
        let mut valid = RegressionSet::new(self.input_dim, self.output_dim);
        for (rank, &i) in idx.iter().enumerate() {
            let dst = if rank < held { &mut valid } else { &mut train };
            dst.inputs.extend_from_slice(self.input(i));
            dst.targets.extend_from_slice(self.target(i));
        }
        (train, valid)
    }

    /// Copies the rows named by `idx` into `inputs`/`targets`.
    pub fn gather(&self, idx: &[usize], inputs: &mut Vec<f64>, targets: &mut Vec<f64>) {
        inputs.clear();
        targets.clear();
        for &i in idx {
            inputs.extend_from_slice(self.input(i));
            targets.extend_from_slice(self.target(i));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 256,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-dataset MSE of each member before training.
    pub initial_losses: Vec<f64>,
    /// Full-dataset MSE of each member after the last epoch.
    pub final_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub spec: MlpSpec,
    pub members: Vec<Mlp>,
    pub seeds: Vec<u64>,
}

impl Ensemble {
    /// `k` members with seeds fanned out from `master`.
    pub fn init(spec: MlpSpec, k: usize, master: u64) -> Result<Self> {
        let seeds: Vec<u64> = (0..k as u64).map(|i| seed::derive(master, "member", i)).collect();
        Self::from_seeds(spec, &seeds)
    }

    pub fn from_seeds(spec: MlpSpec, seeds: &[u64]) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        let members = seeds
            .iter()
            .map(|&s| Mlp::init(spec, seed::derive(s, "init", 0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            members,
            seeds: seeds.to_vec(),
        })
    }

    pub fn from_members(members: Vec<Mlp>) -> Result<Self> {
        let spec = members
            .first()
            .ok_or_else(|| Error::InvalidConfig("ensemble needs at least one member".into()))?
            .spec;
        if members.iter().any(|m| m.spec != spec) {
            return Err(Error::InvalidConfig("ensemble members must share one spec".into()));
        }
        let seeds = vec![0; members.len()];
        Ok(Self { spec, members, seeds })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, k: usize) -> Result<&Mlp> {
        self.members.get(k).ok_or(Error::MemberIndex {
            index: k,
            len: self.members.len(),
        })
    }

    /// Trains every member on the whole of `data` for a fixed number of epochs.
    pub fn train(&mut self, data: &RegressionSet, cfg: &TrainConfig) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
        }
        check_len("dataset input_dim", self.spec.input_dim, data.input_dim)?;
        check_len("dataset output_dim", self.spec.output_dim, data.output_dim)?;
        if cfg.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        let mut report = TrainReport::default();
        for (k, (member, &member_seed)) in self.members.iter_mut().zip(&self.seeds).enumerate() {
            let initial = member.mse(&data.inputs, &data.targets, data.len())?;
            train_member(member, member_seed, data, cfg).map_err(|e| relabel_divergence(e, k))?;
            let fin = member.mse(&data.inputs, &data.targets, data.len())?;
            if !fin.is_finite() {
                return Err(Error::Divergence { member: k });
            }
            report.initial_losses.push(initial);
            report.final_losses.push(fin);
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::checkpoint::write_json(path, &EnsembleFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: EnsembleFile = crate::checkpoint::read_json(path)?;
        file.into_ensemble()
    }
}

pub(crate) fn relabel_divergence(e: Error, member: usize) -> Error {
    match e {
        Error::Divergence { .. } => Error::Divergence { member },
        other => other,
    }
}

fn train_member(member: &mut Mlp, member_seed: u64, data: &RegressionSet, cfg: &TrainConfig) -> Result<()> {
    let mut rng = seed::derived_rng(member_seed, "shuffle", 0);
    let mut adam = AdamState::new(cfg.adam, member)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (mut xb, mut yb) = (Vec::new(), Vec::new());
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            data.gather(chunk, &mut xb, &mut yb);
            let (grads, loss) = member.mse_grad(&xb, &yb, chunk.len())?;
            if !loss.is_finite() {
                return Err(Error::Divergence { member: 0 });
            }
            adam.step(member, &grads)?;
        }
    }
    Ok(())
}

pub const ENSEMBLE_FORMAT: &str = "poir-ensemble";
pub const ENSEMBLE_VERSION: u32 = 1;

/// On-disk form: header, spec, and one flat parameter array per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub format: String,
    pub version: u32,
    pub spec: MlpSpec,
    pub member_count: usize,
    pub seeds: Vec<u64>,
    pub members: Vec<Vec<f64>>,
}

impl From<&Ensemble> for EnsembleFile {
    fn from(e: &Ensemble) -> Self {
        Self {
            format: ENSEMBLE_FORMAT.to_owned(),
            version: ENSEMBLE_VERSION,
            spec: e.spec,
            member_count: e.members.len(),
            seeds: e.seeds.clone(),
            members: e.members.iter().map(Mlp::flat_params).collect(),
        }
    }
}

impl EnsembleFile {
    pub fn into_ensemble(self) -> Result<Ensemble> {
        if self.format != ENSEMBLE_FORMAT || self.version != ENSEMBLE_VERSION {
            return Err(Error::Serde(format!(
                "unsupported ensemble checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.members.len() != self.member_count || self.seeds.len() != self.member_count {
            return Err(Error::Serde("member count does not match header".into()));
        }
        let members = self
            .members
            .iter()
            .map(|flat| mlp_from_flat(self.spec, flat))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble {
            spec: self.spec,
            members,
            seeds: self.seeds,
        })
    }
}

fn mlp_from_flat(spec: MlpSpec, flat: &[f64]) -> Result<Mlp> {
    let mut net = Mlp::zeros(spec)?;
    check_len("flat parameters", spec.num_params(), flat.len())?;
    let mut offset = 0;
    for slice in net.param_slices_mut() {
        let n = slice.len();
        slice.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_data(n: usize) -> RegressionSet {
        let mut d = RegressionSet::new(1, 1);
        for i in 0..n {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            d.push(&[x], &[2.0 * x]).unwrap();
        }
        d
    }

    fn quick_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            adam: AdamConfig::with_learning_rate(1e-2),
        }
    }

    #[test]
    fn identical_seeds_train_identical_members() {
        let mut e = Ensemble::from_seeds(MlpSpec::new(1, 1, 4, 1), &[5, 5, 5]).unwrap();
        e.train(&linear_data(32), &quick_cfg(5)).unwrap();
        assert_eq!(e.members[0], e.members[1]);
        assert_eq!(e.members[1], e.members[2]);
    }

    #[test]
    fn distinct_seeds_differ() {
        let e = Ensemble::init(MlpSpec::new(1, 1, 4, 1), 3, 1).unwrap();
        assert_ne!(e.members[0], e.members[1]);
    }

    #[test]
    fn training_fits_linear_target() {
        let spec = MlpSpec::new(1, 1, 1, 1);
        // seeds whose single hidden unit starts alive on part of [-1, 1]
        let mut e = Ensemble::from_seeds(spec, &[1, 2]).unwrap();
        let data = linear_data(64);
        let report = e
            .train(
                &data,
                &TrainConfig {
                    epochs: 500,
                    batch_size: 16,
                    adam: AdamConfig::with_learning_rate(1e-2),
                },
            )
            .unwrap();
        for (init, fin) in report.initial_losses.iter().zip(&report.final_losses) {
            assert!(fin < init);
        }
        // One relu unit can only represent half of y = 2x; check the wider net.
        let mut wide = Ensemble::from_seeds(MlpSpec::new(1, 1, 8, 1), &[3, 4, 5]).unwrap();
        let r = wide.train(&data, &quick_cfg(500)).unwrap();
        assert!(r.final_losses.iter().all(|&l| l < 1e-3), "{r:?}");
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut e = Ensemble::init(MlpSpec::new(1, 1, 2, 1), 1, 0).unwrap();
        assert!(e.train(&RegressionSet::new(1, 1), &quick_cfg(1)).is_err());
    }

    #[test]
    fn divergence_names_the_member() {
        let mut e = Ensemble::init(MlpSpec::new(1, 1, 2, 1), 2, 0).unwrap();
        let mut d = RegressionSet::new(1, 1);
        d.push(&[1.0], &[1.0]).unwrap();
        d.push(&[2.0], &[f64::INFINITY]).unwrap();
        match e.train(&d, &quick_cfg(1)) {
            Err(Error::Divergence { member }) => assert_eq!(member, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_roundtrips_bit_exactly() {
        let e = Ensemble::init(MlpSpec::new(3, 2, 5, 2), 4, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.json");
        e.save(&path).unwrap();
        let back = Ensemble::load(&path).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn split_partitions_rows() {
        let d = linear_data(50);
        let (train, valid) = d.split(0.1, 3);
        assert_eq!(valid.len(), 5);
        assert_eq!(train.len(), 45);
    }
}
