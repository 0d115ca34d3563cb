use serde::{Deserialize, Serialize};

use super::Mode;
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

/// Inverted dropout: kept units are scaled by `1 / (1 − rate)` at train time
/// so inference is the identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropoutLayer {
    pub rate: f64,
    #[serde(skip)]
    mask: Option<Matrix>,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(DropoutLayer { rate, mask: None })
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut Rng) -> Matrix {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mask_data = (0..x.data().len())
            .map(|_| if rng.next_f64() < keep { scale } else { 0.0 })
            .collect();
        let mask = Matrix::new(x.rows(), x.cols(), mask_data).expect("same shape as x");
        let out = x.mul(&mask).expect("same shape as x");
        self.mask = Some(mask);
        out
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<Matrix> {
        match &self.mask {
            Some(mask) => upstream.mul(mask),
            None => Ok(upstream.clone()),
        }
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}
