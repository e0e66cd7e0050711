use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: Vec<f64>, next_state: Vec<f64>) -> Result<Self> {
        let t = Self {
            state,
            action,
            next_state,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state.len() != self.next_state.len() {
            return Err(Error::shape("next_state", self.state.len(), self.next_state.len()));
        }
        let finite = self
            .state
            .iter()
            .chain(&self.action)
            .chain(&self.next_state)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("transition contains a non-finite value".into()));
        }
        Ok(())
    }
}

/// One episode. Consecutive transitions chain: `next_state[i] == state[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRecord", into = "TrajectoryRecord")]
pub struct Trajectory {
    transitions: Vec<Transition>,
    pub success: bool,
    pub episode_seed: u64,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>, success: bool, episode_seed: u64) -> Result<Self> {
        for t in &transitions {
            t.validate()?;
        }
        if let Some(i) = transitions.windows(2).position(|w| w[0].next_state != w[1].state) {
            return Err(Error::InvalidInput(format!(
                "trajectory breaks chaining between transitions {i} and {}",
                i + 1
            )));
        }
        Ok(Self {
            transitions,
            success,
            episode_seed,
        })
    }

    /// Builds the chained transitions from `states` (one longer than `actions`).
    pub fn from_states_actions(
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        success: bool,
        episode_seed: u64,
    ) -> Result<Self> {
        if actions.is_empty() && states.len() <= 1 {
            return Self::new(Vec::new(), success, episode_seed);
        }
        if states.len() != actions.len() + 1 {
            return Err(Error::shape("trajectory states", actions.len() + 1, states.len()));
        }
        let transitions = actions
            .into_iter()
            .enumerate()
            .map(|(i, a)| Transition::new(states[i].clone(), a, states[i + 1].clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(transitions, success, episode_seed)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Every visited state, including the final `next_state`.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.transitions
            .iter()
            .map(|t| t.state.as_slice())
            .chain(self.transitions.last().map(|t| t.next_state.as_slice()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryRecord {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    success: bool,
    seed: u64,
}

impl TryFrom<TrajectoryRecord> for Trajectory {
    type Error = Error;

    fn try_from(r: TrajectoryRecord) -> Result<Self> {
        Trajectory::from_states_actions(r.states, r.actions, r.success, r.seed)
    }
}

impl From<Trajectory> for TrajectoryRecord {
    fn from(t: Trajectory) -> Self {
        Self {
            states: t.states().map(<[f64]>::to_vec).collect(),
            actions: t.transitions.into_iter().map(|tr| tr.action).collect(),
            success: t.success,
            seed: t.episode_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chaining_is_enforced() {
        let a = Transition::new(vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let b = Transition::new(vec![2.0], vec![1.0], vec![3.0]).unwrap();
        assert!(Trajectory::new(vec![a.clone(), b], true, 0).is_err());
        let c = Transition::new(vec![1.0], vec![1.0], vec![2.0]).unwrap();
        let t = Trajectory::new(vec![a, c], true, 0).unwrap();
        let states: Vec<_> = t.states().collect();
        assert_eq!(states, vec![&[0.0][..], &[1.0][..], &[2.0][..]]);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Transition::new(vec![f64::NAN], vec![0.0], vec![0.0]).is_err());
        assert!(Transition::new(vec![0.0], vec![0.0], vec![0.0, 1.0]).is_err());
    }
}
