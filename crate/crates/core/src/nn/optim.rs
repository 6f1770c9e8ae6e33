use serde::{Deserialize, Serialize};

use super::params::ModelParameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    /// Plain gradient descent, `w <- w - lr * grad`.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero rate is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::validation("Adam betas must lie in [0, 1)"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::validation("Adam epsilon must be > 0"));
        }
        Ok(())
    }
}

/// Optimizer moments and step counter for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    first: ModelParameters,
    second: ModelParameters,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ModelParameters) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut ModelParameters, grads: &ModelParameters) -> Result<()> {
        params.ensure_congruent(grads, "optimizer step (gradients)")?;
        params.ensure_congruent(&self.first, "optimizer step (moments)")?;
        self.step += 1;
        let c = self.config;
        let lr = c.learning_rate;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().zip(grads.tensors()) {
                    for (w, &d) in p.values_mut().iter_mut().zip(g.values()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bias1 = 1.0 - c.beta1.powi(t);
                let bias2 = 1.0 - c.beta2.powi(t);
                let moments = self.first.tensors_mut().zip(self.second.tensors_mut());
                for ((p, g), (m, v)) in params.tensors_mut().zip(grads.tensors()).zip(moments) {
                    let iter = p
                        .values_mut()
                        .iter_mut()
                        .zip(g.values())
                        .zip(m.values_mut().iter_mut().zip(v.values_mut()));
                    for ((w, &d), (m, v)) in iter {
                        *m = c.beta1 * *m + (1.0 - c.beta1) * d;
                        *v = c.beta2 * *v + (1.0 - c.beta2) * d * d;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        *w -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
