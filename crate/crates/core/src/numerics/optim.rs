use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
}

/// Hyperparameters. The Adam constants default to the usual
/// `β1 = 0.9, β2 = 0.999, ε = 1e-8`; AdamW decay defaults to 0.01.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            weight_decay: 0.0,
            ..Self::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            weight_decay: 0.0,
            ..Self::default()
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            lr,
            weight_decay,
            ..Self::default()
        }
    }
}

/// Optimizer with per-parameter moment accumulators.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &[Tensor]) -> Self {
        let zeros = |ps: &[Tensor]| ps.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let (first, second) = match config.kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            _ => (zeros(params), zeros(params)),
        };
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Applies one update. Gradients are validated before any parameter is
    /// touched, so a rejected step leaves the state unchanged.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidTensor(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            p.same_shape(g, "optimizer_step")?;
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { param_index: i });
            }
            if let Some(m) = self.first.get(i) {
                m.same_shape(p, "optimizer_step")?;
            }
        }
        self.step += 1;
        let c = self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= c.lr * gv;
                    }
                }
            }
            OptimizerKind::Adam | OptimizerKind::AdamW => {
                let t = self.step as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                let decay = if c.kind == OptimizerKind::AdamW {
                    c.lr * c.weight_decay
                } else {
                    0.0
                };
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = self.first[i].data_mut();
                    let v = self.second[i].data_mut();
                    for (((pv, &gv), mv), vv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v)
                    {
                        *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                        *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        if decay != 0.0 {
                            *pv -= decay * *pv;
                        }
                        *pv -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
