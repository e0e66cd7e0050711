use serde::{Deserialize, Serialize};

use crate::data::transition::{Trajectory, Transition};
use crate::error::{check_len, Error, Result};

/// Per-dimension affine statistics fitted once on expert data.
///
/// After fitting the statistics are frozen: online data is always mapped
/// with the expert mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
    pub frozen: bool,
}

impl Normalizer {
    /// Standard deviation used for dimensions that are constant in the data.
    pub const STD_FLOOR: f64 = 1e-6;

    pub fn unfitted(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_mean: vec![0.0; state_dim],
            state_std: vec![1.0; state_dim],
            action_mean: vec![0.0; action_dim],
            action_std: vec![1.0; action_dim],
            frozen: false,
        }
    }

    /// Frozen identity map, for agents trained on raw data.
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Self {
            frozen: true,
            ..Self::unfitted(state_dim, action_dim)
        }
    }

    pub fn from_expert(expert: &[Trajectory]) -> Result<Self> {
        let first = expert
            .iter()
            .flat_map(|t| t.transitions().first())
            .next()
            .ok_or_else(|| Error::InvalidInput("cannot fit a normalizer on no expert data".into()))?;
        let mut n = Self::unfitted(first.state.len(), first.action.len());
        n.fit(expert)?;
        Ok(n)
    }

    pub fn fit(&mut self, expert: &[Trajectory]) -> Result<()> {
        if self.frozen {
            return Err(Error::InvalidState("normalizer is already fitted".into()));
        }
        let transitions: Vec<&Transition> = expert.iter().flat_map(|t| t.transitions()).collect();
        if transitions.is_empty() {
            return Err(Error::InvalidInput("cannot fit a normalizer on no expert data".into()));
        }
        for t in &transitions {
            check_len("expert state", self.state_mean.len(), t.state.len())?;
            check_len("expert action", self.action_mean.len(), t.action.len())?;
        }
        let (sm, ss) = moments(transitions.iter().map(|t| t.state.as_slice()), self.state_mean.len());
        let (am, as_) = moments(transitions.iter().map(|t| t.action.as_slice()), self.action_mean.len());
        self.state_mean = sm;
        self.state_std = ss;
        self.action_mean = am;
        self.action_std = as_;
        self.frozen = true;
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_mean.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_mean.len()
    }

    pub fn normalize_state(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.state_dim(), s.len())?;
        Ok(forward(s, &self.state_mean, &self.state_std))
    }

    pub fn denormalize_state(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.state_dim(), s.len())?;
        Ok(inverse(s, &self.state_mean, &self.state_std))
    }

    pub fn normalize_action(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_len("action", self.action_dim(), a.len())?;
        Ok(forward(a, &self.action_mean, &self.action_std))
    }

    pub fn denormalize_action(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_len("action", self.action_dim(), a.len())?;
        Ok(inverse(a, &self.action_mean, &self.action_std))
    }

    pub fn normalize(&self, t: &Transition) -> Result<Transition> {
        Ok(Transition {
            state: self.normalize_state(&t.state)?,
            action: self.normalize_action(&t.action)?,
            next_state: self.normalize_state(&t.next_state)?,
        })
    }
}

fn forward(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect()
}

fn inverse(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(std).map(|((v, m), s)| v * s + m).collect()
}

/// Population mean and standard deviation (floored) per dimension.
fn moments<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows.clone() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
        n += 1;
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((acc, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| (v / n as f64).sqrt().max(Normalizer::STD_FLOOR))
        .collect();
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(states: &[[f64; 2]], actions: &[[f64; 1]]) -> Trajectory {
        Trajectory::from_states_actions(
            states.iter().map(|s| s.to_vec()).collect(),
            actions.iter().map(|a| a.to_vec()).collect(),
            true,
            0,
        )
        .unwrap()
    }

    #[test]
    fn two_point_statistics() {
        let t = traj(&[[0.0, 5.0], [2.0, 5.0], [9.0, 9.0]], &[[1.0], [3.0]]);
        let n = Normalizer::from_expert(&[t]).unwrap();
        assert_eq!(n.state_mean, vec![1.0, 5.0]);
        assert_eq!(n.state_std[0], 1.0);
        // constant second dimension falls back to the floor and maps to 0
        assert_eq!(n.state_std[1], Normalizer::STD_FLOOR);
        assert_eq!(n.normalize_state(&[0.0, 5.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(n.action_mean, vec![2.0]);
    }

    #[test]
    fn hand_arithmetic() {
        let mut n = Normalizer::identity(1, 1);
        assert_eq!(n.normalize_state(&[5.0]).unwrap(), vec![5.0]);
        n.state_mean = vec![1.0];
        n.state_std = vec![2.0];
        assert_eq!(n.normalize_state(&[5.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn refit_and_empty_rejected() {
        let t = traj(&[[0.0, 0.0], [1.0, 1.0]], &[[0.5]]);
        let mut n = Normalizer::from_expert(&[t.clone()]).unwrap();
        assert!(n.fit(&[t]).is_err());
        assert!(Normalizer::from_expert(&[]).is_err());
        assert!(n.normalize_state(&[1.0]).is_err());
    }

    #[test]
    fn action_roundtrip() {
        let n = Normalizer {
            state_mean: vec![0.0],
            state_std: vec![1.0],
            action_mean: vec![0.3, -2.0],
            action_std: vec![0.7, 3.1],
            frozen: true,
        };
        let a = [0.123, -4.56];
        let back = n.denormalize_action(&n.normalize_action(&a).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
