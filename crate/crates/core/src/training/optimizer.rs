use serde::{Deserialize, Serialize};

use crate::network::ParamGradients;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `v ← μ·v − lr·g; p ← p + v`.
    SgdMomentum {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

/// Per-parameter optimizer buffers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn ensure_state(&mut self, grads: &ParamGradients) {
        if self.first.is_empty() {
            self.first = grads.tensors.iter().map(|g| vec![0.0; g.len()]).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &ParamGradients, lr: f64) -> Result<()> {
        if params.len() != grads.tensors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.tensors.len()
            )));
        }
        self.ensure_state(grads);
        self.step += 1;
        for (i, (p, g)) in params.into_iter().zip(&grads.tensors).enumerate() {
            if p.len() != g.len() || self.first[i].len() != g.len() {
                return Err(Error::InvalidArgument(format!(
                    "parameter tensor {i} has {} entries but its gradient has {}",
                    p.len(),
                    g.len()
                )));
            }
            match self.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    let v = &mut self.first[i];
                    for j in 0..p.len() {
                        v[j] = momentum * v[j] - lr * g[j];
                        p[j] += v[j];
                    }
                }
                OptimizerKind::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => {
                    let bias1 = 1.0 - beta1.powf(self.step as f64);
                    let bias2 = 1.0 - beta2.powf(self.step as f64);
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for j in 0..p.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / bias1;
                        let v_hat = v[j] / bias2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
