use serde::{Deserialize, Serialize};

use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    /// Glorot uniform, limit `sqrt(6 / (fan_in + fan_out))`.
    Xavier,
    /// He uniform, limit `sqrt(6 / fan_in)`.
    He,
}

/// Fully connected affine map `x · Wᵀ + b`.
///
/// `weights` is `out × in`, `bias` is `out × 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Matrix,
    #[serde(skip)]
    input: Option<Matrix>,
}

#[derive(Debug, Clone)]
pub struct DenseGradients {
    pub input: Matrix,
    pub weights: Matrix,
    pub bias: Matrix,
}

impl DenseLayer {
    pub fn new(input_dim: usize, output_dim: usize, init: Init, rng: &mut Rng) -> Self {
        let limit = match init {
            Init::Zeros => 0.0,
            Init::Xavier => (6.0 / (input_dim + output_dim) as f64).sqrt(),
            Init::He => (6.0 / input_dim as f64).sqrt(),
        };
        let data = (0..input_dim * output_dim)
            .map(|_| {
                if limit == 0.0 {
                    0.0
                } else {
                    rng.uniform(-limit, limit)
                }
            })
            .collect();
        DenseLayer {
            weights: Matrix::new(output_dim, input_dim, data).expect("sized above"),
            bias: Matrix::zeros(output_dim, 1),
            input: None,
        }
    }

    pub fn from_parts(weights: Matrix, bias: Matrix) -> Result<Self> {
        if bias.shape() != (weights.rows(), 1) {
            return Err(Error::shape("dense bias", weights.shape(), bias.shape()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            input: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Matrix {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut Matrix {
        &mut self.bias
    }

    /// Mutable weights and bias data at once.
    pub fn parameters_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.data_mut(), self.bias.data_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.data().len() + self.bias.data().len()
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "dense_forward",
                x.shape(),
                self.weights.shape(),
            ));
        }
        x.matmul_transpose_b(&self.weights)?
            .add_row_vector(self.bias.data())
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<DenseGradients> {
        let x = self.input.as_ref().ok_or(Error::MissingCache("dense"))?;
        if upstream.shape() != (x.rows(), self.output_dim()) {
            return Err(Error::shape(
                "dense_backward",
                upstream.shape(),
                (x.rows(), self.output_dim()),
            ));
        }
        Ok(DenseGradients {
            input: upstream.matmul(&self.weights)?,
            weights: upstream.transpose_matmul(x)?,
            bias: Matrix::column(upstream.column_sums()),
        })
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
