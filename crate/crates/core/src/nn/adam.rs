use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(in_unit(self.beta1) && in_unit(self.beta2))
            || !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || !(self.epsilon > 0.0)
        {
            return Err(Error::InvalidConfig(format!("bad adam config {self:?}")));
        }
        Ok(())
    }
}

/// Moment accumulators for one network, laid out like `Mlp::param_slices`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &Mlp) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.param_slices().map(|s| vec![0.0; s.len()]).collect();
        Ok(Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        })
    }

    /// One bias-corrected Adam update. A non-finite gradient leaves both the
    /// parameters and the moments untouched and reports divergence.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.param_slices().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { member: 0 });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params
            .param_slices_mut()
            .zip(grads.param_slices())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        if !params.is_finite() {
            return Err(Error::Divergence { member: 0 });
        }
        Ok(())
    }
}
