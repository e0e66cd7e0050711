use rand::Rng;

use crate::data::transition::Transition;
use crate::error::{Error, Result};

/// Agent-data share of a fine-tuning batch after `gradient_steps` steps:
/// `min(0.5, 0.05 * floor(gradient_steps / 100))`.
pub fn mixture_ratio(gradient_steps: u64) -> f64 {
    ramp_increments(gradient_steps) as f64 / 20.0
}

fn ramp_increments(gradient_steps: u64) -> u64 {
    (gradient_steps / 100).min(10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub transitions: Vec<Transition>,
    /// How many of `transitions` (a prefix) came from agent data.
    pub from_agent: usize,
    /// Ratio in force when the batch was drawn.
    pub ratio: f64,
}

/// Expert transitions (immutable) plus an append-only log of agent
/// transitions, sampled with the ramped mixture ratio.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    expert: Vec<Transition>,
    agent: Vec<Transition>,
    gradient_steps: u64,
}

impl ReplayBuffer {
    pub fn new(expert: Vec<Transition>) -> Result<Self> {
        if expert.is_empty() {
            return Err(Error::InvalidInput("replay buffer needs expert transitions".into()));
        }
        Ok(Self {
            expert,
            agent: Vec::new(),
            gradient_steps: 0,
        })
    }

    pub fn expert(&self) -> &[Transition] {
        &self.expert
    }

    pub fn agent(&self) -> &[Transition] {
        &self.agent
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    /// Moves the schedule to an arbitrary point, e.g. when resuming.
    pub fn set_gradient_steps(&mut self, steps: u64) {
        self.gradient_steps = steps;
    }

    pub fn mixture_ratio(&self) -> f64 {
        mixture_ratio(self.gradient_steps)
    }

    pub fn push_agent(&mut self, t: Transition) {
        self.agent.push(t);
    }

    /// Number of agent samples in a batch of `batch_size` at the current step.
    pub fn agent_quota(&self, batch_size: usize) -> usize {
        // ceil(increments * batch / 20) in integers; avoids 0.05 * 3 > 0.15
        let inc = ramp_increments(self.gradient_steps) as usize;
        let quota = (inc * batch_size).div_ceil(20);
        quota.min(self.agent.len())
    }

    /// Draws one fine-tuning batch and advances the gradient-step counter.
    ///
    /// Agent samples come first, uniformly with replacement from the agent
    /// log; the remainder is uniform over expert data.
    pub fn sample_mixed<R: Rng + ?Sized>(&mut self, batch_size: usize, rng: &mut R) -> Result<MixedBatch> {
        if batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        let ratio = self.mixture_ratio();
        let from_agent = self.agent_quota(batch_size);
        let mut transitions = Vec::with_capacity(batch_size);
        for _ in 0..from_agent {
            transitions.push(self.agent[rng.random_range(0..self.agent.len())].clone());
        }
        for _ in from_agent..batch_size {
            transitions.push(self.expert[rng.random_range(0..self.expert.len())].clone());
        }
        self.gradient_steps += 1;
        Ok(MixedBatch {
            transitions,
            from_agent,
            ratio,
        })
    }
}
