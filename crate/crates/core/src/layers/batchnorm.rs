use serde::{Deserialize, Serialize};

use super::Mode;
use crate::numeric::Matrix;
use crate::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-node batch normalization.
///
/// Train mode normalizes with the batch mean and population variance and
/// blends them into the running statistics as
/// `running = momentum · running + (1 − momentum) · batch`.
/// Infer mode normalizes with the running statistics only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    #[serde(skip)]
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGradients {
    pub input: Matrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(width: usize) -> Self {
        BatchNormLayer {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            cache: None,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.width()
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(Error::shape("batchnorm", x.shape(), (1, self.width())));
        }
        Ok(())
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let x_hat =
                    (*v - self.running_mean[c]) / (self.running_var[c] + self.epsilon).sqrt();
                *v = self.gamma[c] * x_hat + self.beta[c];
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        if mode == Mode::Infer {
            self.cache = None;
            return self.infer(x);
        }
        self.check_width(x)?;
        let n = x.rows();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        let width = self.width();
        let inv_n = 1.0 / n as f64;
        let mean: Vec<f64> = x.column_sums().iter().map(|s| s * inv_n).collect();
        let mut var = vec![0.0; width];
        for r in 0..n {
            for (c, &v) in x.row(r).iter().enumerate() {
                var[c] += (v - mean[c]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_n);
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();

        let mut x_hat = x.clone();
        let mut out = x.clone();
        for r in 0..n {
            let xr = x_hat.row_mut(r);
            for c in 0..width {
                xr[c] = (xr[c] - mean[c]) * inv_std[c];
            }
            let or = out.row_mut(r);
            for c in 0..width {
                or[c] = self.gamma[c] * x_hat.get(r, c) + self.beta[c];
            }
        }
        for c in 0..width {
            self.running_mean[c] =
                self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
            self.running_var[c] =
                self.momentum * self.running_var[c] + (1.0 - self.momentum) * var[c];
        }
        self.cache = Some(BnCache { x_hat, inv_std });
        Ok(out)
    }

    /// Exact gradients of the train-mode forward pass.
    pub fn backward(&self, upstream: &Matrix) -> Result<BatchNormGradients> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::MissingCache("batchnorm"))?;
        if upstream.shape() != cache.x_hat.shape() {
            return Err(Error::shape(
                "batchnorm_backward",
                upstream.shape(),
                cache.x_hat.shape(),
            ));
        }
        let n = upstream.rows();
        let width = self.width();
        let beta_grad = upstream.column_sums();
        let mut gamma_grad = vec![0.0; width];
        for r in 0..n {
            for c in 0..width {
                gamma_grad[c] += upstream.get(r, c) * cache.x_hat.get(r, c);
            }
        }
        // dx = γ·inv_std/n · (n·g − Σg − x̂·Σ(g·x̂))
        let inv_n = 1.0 / n as f64;
        let mut input = Matrix::zeros(n, width);
        for r in 0..n {
            let row = input.row_mut(r);
            for c in 0..width {
                let g = upstream.get(r, c);
                let xh = cache.x_hat.get(r, c);
                row[c] = self.gamma[c]
                    * cache.inv_std[c]
                    * inv_n
                    * (n as f64 * g - beta_grad[c] - xh * gamma_grad[c]);
            }
        }
        Ok(BatchNormGradients {
            input,
            gamma: gamma_grad,
            beta: beta_grad,
        })
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
