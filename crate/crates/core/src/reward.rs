//! Imitation rewards computed from expert data alone. All three are `<= 0`
//! and reach 0 on expert support:
//!
//! - L2: negated distance to the nearest expert state.
//! - DRIL: negated maximum pairwise disagreement of the BC members' actions.
//! - MoREL: negated maximum pairwise disagreement of the frozen dynamics
//!   members' next-state predictions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::Ensemble;
use crate::prior::BcEnsemble;
use crate::world_model::DynamicsEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    L2,
    Dril,
    Morel,
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(RewardKind::L2),
            "dril" => Ok(RewardKind::Dril),
            "morel" => Ok(RewardKind::Morel),
            other => Err(Error::InvalidConfig(format!(
                "unknown reward {other:?} (expected l2, dril or morel)"
            ))),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardKind::L2 => "l2",
            RewardKind::Dril => "dril",
            RewardKind::Morel => "morel",
        })
    }
}

/// Which state a state-based reward (L2, DRIL) is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPoint {
    CurrentState,
    #[default]
    NextState,
}

/// Exact nearest-neighbour lookup over expert states.
///
/// Queries go through a k-d tree; every candidate distance is accumulated in
/// dimension order exactly like [`ExpertIndex::linear_scan`], so both paths
/// return bit-identical results.
#[derive(Debug, Clone)]
pub struct ExpertIndex {
    dim: usize,
    points: Vec<f64>,
    nodes: Vec<KdNode>,
    /// Per node: `dim` lower corners then `dim` upper corners of the
    /// bounding box of its points.
    boxes: Vec<f64>,
}

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

const LEAF_SIZE: usize = 12;

impl ExpertIndex {
    pub fn new<'a>(states: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut rows: Vec<&[f64]> = states.into_iter().collect();
        let dim = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::InvalidInput("L2 reward needs at least one expert state".into()))?;
        for r in &rows {
            check_len("expert state", dim, r.len())?;
        }
        let mut nodes = Vec::new();
        let n = rows.len();
        build(&mut rows, 0, n, dim, &mut nodes);
        let points: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let mut boxes = Vec::with_capacity(nodes.len() * 2 * dim);
        for node in &nodes {
            let (start, end) = node_range(&nodes, node);
            let (mut lo, mut hi) = (vec![f64::INFINITY; dim], vec![f64::NEG_INFINITY; dim]);
            for p in points[start * dim..end * dim].chunks_exact(dim) {
                for d in 0..dim {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
            boxes.extend(lo);
            boxes.extend(hi);
        }
        Ok(Self {
            dim,
            points,
            nodes,
            boxes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nearest_distance(&self, query: &[f64]) -> Result<f64> {
        check_len("L2 query", self.dim, query.len())?;
        let mut best = f64::INFINITY;
        self.search(0, query, &mut best);
        Ok(best.sqrt())
    }

    /// Reference O(n) scan.
    pub fn linear_scan(&self, query: &[f64]) -> Result<f64> {
        check_len("L2 query", self.dim, query.len())?;
        let best = (0..self.len())
            .map(|i| sq_dist(query, self.point(i)))
            .fold(f64::INFINITY, f64::min);
        Ok(best.sqrt())
    }

    /// Squared distance from `q` to the bounding box of `node`.
    fn box_distance(&self, node: usize, q: &[f64]) -> f64 {
        let b = &self.boxes[node * 2 * self.dim..(node + 1) * 2 * self.dim];
        let (lo, hi) = b.split_at(self.dim);
        q.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&x, (&l, &h))| {
                let gap = (l - x).max(x - h).max(0.0);
                gap * gap
            })
            .sum()
    }

    /// Nodes are skipped only when their box distance, shrunk by a small
    /// relative margin for rounding, exceeds the best distance so far.
    fn search(&self, node: usize, q: &[f64], best: &mut f64) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for i in start..end {
                    let d = sq_dist(q, self.point(i));
                    if d < *best {
                        *best = d;
                    }
                }
            }
            KdNode::Split { left, right, .. } => {
                let (dl, dr) = (self.box_distance(left, q), self.box_distance(right, q));
                let order = if dl <= dr {
                    [(left, dl), (right, dr)]
                } else {
                    [(right, dr), (left, dl)]
                };
                for (child, bound) in order {
                    if bound * (1.0 - 1e-9) <= *best {
                        self.search(child, q, best);
                    }
                }
            }
        }
    }
}

fn node_range(nodes: &[KdNode], node: &KdNode) -> (usize, usize) {
    match *node {
        KdNode::Leaf { start, end } => (start, end),
        KdNode::Split { left, right, .. } => (node_range(nodes, &nodes[left]).0, node_range(nodes, &nodes[right]).1),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Builds the subtree over `rows[start..end]`, returning its node index.
/// Splits at the median of the widest axis.
fn build(rows: &mut [&[f64]], start: usize, end: usize, dim: usize, nodes: &mut Vec<KdNode>) -> usize {
    let id = nodes.len();
    nodes.push(KdNode::Leaf { start, end });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let slice = &mut rows[start..end];
    let axis = (0..dim)
        .map(|d| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[d]), hi.max(r[d]))
            });
            (d, hi - lo)
        })
        .fold(
            (0, -1.0),
            |acc, (d, spread)| if spread > acc.1 { (d, spread) } else { acc },
        )
        .0;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    let left = build(rows, start, start + mid, dim, nodes);
    let right = build(rows, start + mid, end, dim, nodes);
    nodes[id] = KdNode::Split { left, right };
    id
}

/// Largest pairwise Euclidean distance among `k` rows of width `dim`.
pub fn max_pairwise_distance(rows: &[f64], k: usize, dim: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            let d = sq_dist(&rows[i * dim..(i + 1) * dim], &rows[j * dim..(j + 1) * dim]).sqrt();
            if d > best {
                best = d;
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub enum RewardModel {
    L2(Arc<ExpertIndex>),
    Dril(Arc<Ensemble>),
    Morel { frozen: Arc<Ensemble>, predict_delta: bool },
}

/// A configured imitation reward. Cheap to clone; every model it references
/// is immutable.
#[derive(Debug, Clone)]
pub struct RewardSpec {
    pub model: RewardModel,
    pub eval_point: EvalPoint,
}

impl RewardSpec {
    /// L2 reward over normalized expert states.
    pub fn l2(index: Arc<ExpertIndex>) -> Self {
        Self {
            model: RewardModel::L2(index),
            eval_point: EvalPoint::default(),
        }
    }

    pub fn dril(bc: &BcEnsemble) -> Result<Self> {
        if bc.len() < 2 {
            return Err(Error::InvalidConfig("DRIL reward needs at least 2 BC members".into()));
        }
        Ok(Self {
            model: RewardModel::Dril(Arc::new(bc.ensemble.clone())),
            eval_point: EvalPoint::default(),
        })
    }

    /// MoREL reward on the frozen copy of the world model.
    pub fn morel(wm: &DynamicsEnsemble) -> Result<Self> {
        let frozen = wm
            .frozen()
            .ok_or_else(|| Error::InvalidState("MoREL reward needs a frozen world model".into()))?;
        if frozen.len() < 2 {
            return Err(Error::InvalidConfig(
                "MoREL reward needs at least 2 world-model members".into(),
            ));
        }
        Ok(Self {
            model: RewardModel::Morel {
                frozen: Arc::clone(frozen),
                predict_delta: wm.predict_delta,
            },
            eval_point: EvalPoint::default(),
        })
    }

    pub fn with_eval_point(mut self, eval_point: EvalPoint) -> Self {
        self.eval_point = eval_point;
        self
    }

    pub fn kind(&self) -> RewardKind {
        match self.model {
            RewardModel::L2(_) => RewardKind::L2,
            RewardModel::Dril(_) => RewardKind::Dril,
            RewardModel::Morel { .. } => RewardKind::Morel,
        }
    }

    pub fn reward_l2(&self, state: &[f64]) -> Result<f64> {
        match &self.model {
            RewardModel::L2(index) => Ok(-index.nearest_distance(state)?),
            _ => Err(Error::InvalidConfig("not an L2 reward".into())),
        }
    }

    pub fn reward_dril(&self, state: &[f64]) -> Result<f64> {
        match &self.model {
            RewardModel::Dril(bc) => {
                let dim = bc.spec.output_dim;
                let mut outs = Vec::with_capacity(bc.len() * dim);
                for m in &bc.members {
                    outs.extend(m.forward(state)?);
                }
                Ok(-max_pairwise_distance(&outs, bc.len(), dim))
            }
            _ => Err(Error::InvalidConfig("not a DRIL reward".into())),
        }
    }

    pub fn reward_morel(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        match &self.model {
            RewardModel::Morel { frozen, predict_delta } => {
                let dim = frozen.spec.output_dim;
                check_len("MoREL state", dim, state.len())?;
                check_len("MoREL action", frozen.spec.input_dim - dim, action.len())?;
                let mut x = state.to_vec();
                x.extend_from_slice(action);
                let mut outs = Vec::with_capacity(frozen.len() * dim);
                for m in &frozen.members {
                    let mut y = m.forward(&x)?;
                    if *predict_delta {
                        y.iter_mut().zip(state).for_each(|(o, s)| *o += s);
                    }
                    outs.extend(y);
                }
                Ok(-max_pairwise_distance(&outs, frozen.len(), dim))
            }
            _ => Err(Error::InvalidConfig("not a MoREL reward".into())),
        }
    }

    /// Scores one simulated transition `(s, a, s_pred)`.
    pub fn score_transition(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> Result<f64> {
        let point = match self.eval_point {
            EvalPoint::CurrentState => state,
            EvalPoint::NextState => next_state,
        };
        match self.model {
            RewardModel::L2(_) => self.reward_l2(point),
            RewardModel::Dril(_) => self.reward_dril(point),
            RewardModel::Morel { .. } => self.reward_morel(state, action),
        }
    }

    /// [`Self::score_transition`] over `rows` stacked transitions. Each
    /// value is bit-identical to the single-row call.
    pub fn score_batch(
        &self,
        states: &[f64],
        actions: &[f64],
        next_states: &[f64],
        rows: usize,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        out.clear();
        if rows == 0 {
            return Ok(());
        }
        let sd = states.len() / rows;
        let ad = actions.len() / rows;
        let points = match self.eval_point {
            EvalPoint::CurrentState => states,
            EvalPoint::NextState => next_states,
        };
        match &self.model {
            RewardModel::L2(index) => {
                for r in 0..rows {
                    out.push(-index.nearest_distance(&points[r * sd..(r + 1) * sd])?);
                }
            }
            RewardModel::Dril(bc) => {
                let dim = bc.spec.output_dim;
                let per_member = forward_all(bc, points, rows)?;
                out.extend((0..rows).map(|r| -disagreement_row(&per_member, r, dim)));
            }
            RewardModel::Morel { frozen, predict_delta } => {
                let dim = frozen.spec.output_dim;
                let mut x = Vec::with_capacity(rows * (sd + ad));
                for r in 0..rows {
                    x.extend_from_slice(&states[r * sd..(r + 1) * sd]);
                    x.extend_from_slice(&actions[r * ad..(r + 1) * ad]);
                }
                let mut per_member = forward_all(frozen, &x, rows)?;
                if *predict_delta {
                    for ys in &mut per_member {
                        ys.iter_mut().zip(states).for_each(|(o, s)| *o += s);
                    }
                }
                out.extend((0..rows).map(|r| -disagreement_row(&per_member, r, dim)));
            }
        }
        Ok(())
    }
}

fn forward_all(ensemble: &Ensemble, inputs: &[f64], rows: usize) -> Result<Vec<Vec<f64>>> {
    ensemble
        .members
        .iter()
        .map(|m| {
            let mut y = Vec::new();
            m.forward_batch(inputs, rows, &mut y)?;
            Ok(y)
        })
        .collect()
}

fn disagreement_row(per_member: &[Vec<f64>], r: usize, dim: usize) -> f64 {
    let rows: Vec<f64> = per_member
        .iter()
        .flat_map(|ys| ys[r * dim..(r + 1) * dim].iter().copied())
        .collect();
    max_pairwise_distance(&rows, per_member.len(), dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalizer;
    use crate::nn::{Mlp, MlpSpec};
    use crate::seed;
    use rand::Rng;

    fn constant_member(inp: usize, out: &[f64]) -> Mlp {
        let mut m = Mlp::zeros(MlpSpec::new(inp, out.len(), 2, 1)).unwrap();
        m.layers[1].biases.copy_from_slice(out);
        m
    }

    #[test]
    fn l2_hand_example() {
        let pts = [vec![0.0, 0.0], vec![3.0, 4.0]];
        let idx = ExpertIndex::new(pts.iter().map(|p| p.as_slice())).unwrap();
        let r = RewardSpec::l2(Arc::new(idx));
        assert_eq!(r.reward_l2(&[3.0, 0.0]).unwrap(), -3.0);
        assert_eq!(r.reward_l2(&[3.0, 4.0]).unwrap(), 0.0);
        assert!(r.reward_l2(&[3.0]).is_err());
    }

    #[test]
    fn empty_expert_set_rejected() {
        assert!(ExpertIndex::new(std::iter::empty::<&[f64]>()).is_err());
    }

    #[test]
    fn kd_tree_matches_scan() {
        let mut rng = seed::rng(3);
        let pts: Vec<Vec<f64>> = (0..2000)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let idx = ExpertIndex::new(pts.iter().map(|p| p.as_slice())).unwrap();
        for p in pts.iter().take(100) {
            assert_eq!(idx.nearest_distance(p).unwrap(), 0.0);
        }
        for _ in 0..300 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            assert_eq!(idx.nearest_distance(&q).unwrap(), idx.linear_scan(&q).unwrap());
        }
    }

    #[test]
    fn kd_tree_handles_duplicates() {
        let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![(i % 3) as f64, 0.0]).collect();
        let idx = ExpertIndex::new(pts.iter().map(|p| p.as_slice())).unwrap();
        assert_eq!(idx.nearest_distance(&[1.0, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn dril_two_members() {
        let e = Ensemble::from_members(vec![constant_member(1, &[0.0]), constant_member(1, &[3.0])]).unwrap();
        let bc = BcEnsemble::new(e, Normalizer::identity(1, 1)).unwrap();
        let r = RewardSpec::dril(&bc).unwrap();
        assert_eq!(r.reward_dril(&[0.5]).unwrap(), -3.0);
        let same = Ensemble::from_members(vec![constant_member(1, &[1.0]); 3]).unwrap();
        let r = RewardSpec::dril(&BcEnsemble::new(same, Normalizer::identity(1, 1)).unwrap()).unwrap();
        assert_eq!(r.reward_dril(&[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn disagreement_needs_two_members() {
        let e = Ensemble::init(MlpSpec::new(1, 1, 2, 1), 1, 0).unwrap();
        let bc = BcEnsemble::new(e.clone(), Normalizer::identity(1, 1)).unwrap();
        assert!(RewardSpec::dril(&bc).is_err());
        let wide = Ensemble::init(MlpSpec::new(2, 1, 2, 1), 1, 0).unwrap();
        let mut wm = DynamicsEnsemble::new(wide, Normalizer::identity(1, 1), false).unwrap();
        wm.freeze_for_reward().unwrap();
        assert!(RewardSpec::morel(&wm).is_err());
    }

    #[test]
    fn morel_ignores_predicted_state_and_needs_freeze() {
        let e = Ensemble::init(MlpSpec::new(3, 2, 4, 1), 3, 2).unwrap();
        let mut wm = DynamicsEnsemble::new(e, Normalizer::identity(2, 1), false).unwrap();
        assert!(RewardSpec::morel(&wm).is_err());
        wm.freeze_for_reward().unwrap();
        let r = RewardSpec::morel(&wm).unwrap();
        let a = r.score_transition(&[0.1, 0.2], &[0.3], &[5.0, 5.0]).unwrap();
        let b = r.score_transition(&[0.1, 0.2], &[0.3], &[-1.0, 9.0]).unwrap();
        assert_eq!(a, b);
        assert!(a <= 0.0);
    }

    #[test]
    fn score_batch_matches_single_rows() {
        let mut rng = seed::rng(1);
        let bc_e = Ensemble::init(MlpSpec::new(2, 1, 4, 1), 4, 3).unwrap();
        let bc = BcEnsemble::new(bc_e, Normalizer::identity(2, 1)).unwrap();
        let wm_e = Ensemble::init(MlpSpec::new(3, 2, 4, 1), 4, 5).unwrap();
        let mut wm = DynamicsEnsemble::new(wm_e, Normalizer::identity(2, 1), true).unwrap();
        wm.freeze_for_reward().unwrap();
        let pts: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random()]).collect();
        let l2 = RewardSpec::l2(Arc::new(ExpertIndex::new(pts.iter().map(|p| p.as_slice())).unwrap()));
        let rows = 7;
        let s: Vec<f64> = (0..rows * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n: Vec<f64> = (0..rows * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        for spec in [
            l2.clone(),
            l2.with_eval_point(EvalPoint::CurrentState),
            RewardSpec::dril(&bc).unwrap(),
            RewardSpec::morel(&wm).unwrap(),
        ] {
            let mut out = Vec::new();
            spec.score_batch(&s, &a, &n, rows, &mut out).unwrap();
            for r in 0..rows {
                let single = spec
                    .score_transition(&s[r * 2..r * 2 + 2], &a[r..r + 1], &n[r * 2..r * 2 + 2])
                    .unwrap();
                assert_eq!(out[r], single);
            }
        }
    }

    #[test]
    fn kind_parses() {
        assert_eq!("L2".parse::<RewardKind>().unwrap(), RewardKind::L2);
        assert_eq!("morel".parse::<RewardKind>().unwrap(), RewardKind::Morel);
        assert!("gail".parse::<RewardKind>().is_err());
    }
}
