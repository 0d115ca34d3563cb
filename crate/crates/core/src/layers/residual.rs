use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ActivationKind, ActivationLayer, BatchNormGradients, BatchNormLayer, Mode};
use crate::numeric::Matrix;
use crate::{Error, Result};

/// What happens to `x_l + F(x_L)` after the identity addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualOption {
    /// Option 1: the sum is passed on unchanged.
    None,
    /// Option 2: activation applied to the sum.
    Activation,
    /// Option 3: activation, then batch normalization.
    ActivationBatchNorm,
}

impl fmt::Display for ResidualOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResidualOption::None => "none",
            ResidualOption::Activation => "activation",
            ResidualOption::ActivationBatchNorm => "activation_batchnorm",
        })
    }
}

/// Joins an encode-side tensor `x_l` to its decode mirror `F(x_L, W_L)`.
///
/// A disabled node keeps its post-op (so parameter counts do not depend on
/// which shortcuts are active) but ignores the shallow branch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualAddNode {
    pub enabled: bool,
    pub option: ResidualOption,
    /// Human-readable names of the joined layers, used in errors.
    pub encode_label: String,
    pub decode_label: String,
    activation: ActivationLayer,
    batchnorm: Option<BatchNormLayer>,
}

#[derive(Debug, Clone)]
pub struct ResidualGradients {
    /// Gradient flowing back into the shortcut; `None` when disabled.
    pub shallow: Option<Matrix>,
    pub deep: Matrix,
    /// Gradient reaching the sum itself (after undoing the post-op).
    pub at_sum: Matrix,
    pub batchnorm: Option<BatchNormGradients>,
}

impl ResidualAddNode {
    pub fn new(
        option: ResidualOption,
        activation: ActivationKind,
        width: usize,
        encode_label: impl Into<String>,
        decode_label: impl Into<String>,
    ) -> Self {
        ResidualAddNode {
            enabled: true,
            option,
            encode_label: encode_label.into(),
            decode_label: decode_label.into(),
            activation: ActivationLayer::new(activation),
            batchnorm: (option == ResidualOption::ActivationBatchNorm)
                .then(|| BatchNormLayer::new(width)),
        }
    }

    pub fn batchnorm(&self) -> Option<&BatchNormLayer> {
        self.batchnorm.as_ref()
    }

    pub fn batchnorm_mut(&mut self) -> Option<&mut BatchNormLayer> {
        self.batchnorm.as_mut()
    }

    pub fn activation(&self) -> &ActivationLayer {
        &self.activation
    }

    pub fn parameter_count(&self) -> usize {
        self.batchnorm
            .as_ref()
            .map_or(0, BatchNormLayer::parameter_count)
    }

    fn sum(&self, x_l: &Matrix, f_out: &Matrix) -> Result<Matrix> {
        if !self.enabled {
            return Ok(f_out.clone());
        }
        if x_l.shape() != f_out.shape() {
            return Err(Error::ResidualShape {
                encode: self.encode_label.clone(),
                decode: self.decode_label.clone(),
                left: x_l.shape(),
                right: f_out.shape(),
            });
        }
        x_l.add(f_out)
    }

    pub fn forward(&mut self, x_l: &Matrix, f_out: &Matrix, mode: Mode) -> Result<Matrix> {
        let sum = self.sum(x_l, f_out)?;
        match self.option {
            ResidualOption::None => Ok(sum),
            ResidualOption::Activation => Ok(self.activation.forward(&sum)),
            ResidualOption::ActivationBatchNorm => {
                let a = self.activation.forward(&sum);
                self.batchnorm
                    .as_mut()
                    .ok_or_else(|| Error::Builder("option-3 node without batchnorm".into()))?
                    .forward(&a, mode)
            }
        }
    }

    pub fn infer(&self, x_l: &Matrix, f_out: &Matrix) -> Result<Matrix> {
        let sum = self.sum(x_l, f_out)?;
        match self.option {
            ResidualOption::None => Ok(sum),
            ResidualOption::Activation => Ok(self.activation.infer(&sum)),
            ResidualOption::ActivationBatchNorm => {
                let a = self.activation.infer(&sum);
                self.batchnorm
                    .as_ref()
                    .ok_or_else(|| Error::Builder("option-3 node without batchnorm".into()))?
                    .infer(&a)
            }
        }
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<ResidualGradients> {
        let (at_sum, batchnorm) = match self.option {
            ResidualOption::None => (upstream.clone(), None),
            ResidualOption::Activation => (self.activation.backward(upstream)?, None),
            ResidualOption::ActivationBatchNorm => {
                let bn = self
                    .batchnorm
                    .as_ref()
                    .ok_or_else(|| Error::Builder("option-3 node without batchnorm".into()))?
                    .backward(upstream)?;
                (self.activation.backward(&bn.input)?, Some(bn))
            }
        };
        Ok(ResidualGradients {
            shallow: self.enabled.then(|| at_sum.clone()),
            deep: at_sum.clone(),
            at_sum,
            batchnorm,
        })
    }

    pub fn clear_cache(&mut self) {
        self.activation.clear_cache();
        if let Some(bn) = self.batchnorm.as_mut() {
            bn.clear_cache();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    fn node(option: ResidualOption, act: ActivationKind, width: usize) -> ResidualAddNode {
        ResidualAddNode::new(option, act, width, "encode[0]", "decode[0]")
    }

    #[test]
    fn zero_deep_branch_is_identity() {
        let mut n = node(ResidualOption::None, ActivationKind::Relu, 2);
        let x = Matrix::from_rows(&[[1.0, -2.0]]).unwrap();
        assert_eq!(n.forward(&x, &Matrix::zeros(1, 2), Mode::Train).unwrap(), x);
    }

    #[test]
    fn direct_sum() {
        let n = node(ResidualOption::None, ActivationKind::Relu, 2);
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let f = Matrix::from_rows(&[[0.5, -0.5]]).unwrap();
        assert_eq!(n.infer(&x, &f).unwrap().data(), &[1.5, 1.5]);
    }

    #[test]
    fn option_two_applies_relu() {
        let n = node(ResidualOption::Activation, ActivationKind::Relu, 2);
        let x = Matrix::from_rows(&[[-1.0, 2.0]]).unwrap();
        assert_eq!(
            n.infer(&x, &Matrix::zeros(1, 2)).unwrap().data(),
            &[0.0, 2.0]
        );
    }

    #[test]
    fn shape_mismatch_names_pair() {
        let n = node(ResidualOption::None, ActivationKind::Relu, 2);
        let err = n
            .infer(&Matrix::zeros(1, 2), &Matrix::zeros(1, 3))
            .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("encode[0]") && msg.contains("decode[0]"),
            "{msg}"
        );
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut n = node(ResidualOption::ActivationBatchNorm, ActivationKind::ELU, 3);
        let mut rng = Rng::new(1);
        let x = Matrix::new(4, 3, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        n.forward(&x, &x.scale(0.5), Mode::Train).unwrap();
        let g = n.backward(&Matrix::zeros(4, 3)).unwrap();
        assert!(g.shallow.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.deep.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disabled_node_ignores_shortcut_but_keeps_post_op() {
        let mut n = node(ResidualOption::ActivationBatchNorm, ActivationKind::Relu, 2);
        n.enabled = false;
        assert_eq!(n.parameter_count(), 4);
        let f = Matrix::from_rows(&[[1.0, 2.0], [3.0, 5.0]]).unwrap();
        let with = n.infer(&Matrix::filled(2, 2, 100.0), &f).unwrap();
        let without = n.infer(&Matrix::zeros(2, 2), &f).unwrap();
        assert_eq!(with, without);
        n.forward(&Matrix::zeros(2, 2), &f, Mode::Train).unwrap();
        assert!(n.backward(&f).unwrap().shallow.is_none());
    }

    #[test]
    fn relu_post_op_matches_finite_differences() {
        let mut rng = Rng::new(12);
        let x = Matrix::new(3, 4, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let f = Matrix::new(3, 4, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let probe = Matrix::new(3, 4, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let mut n = node(ResidualOption::Activation, ActivationKind::Relu, 4);
        n.forward(&x, &f, Mode::Train).unwrap();
        let g = n.backward(&probe).unwrap();
        let shallow = g.shallow.unwrap();
        let loss = |a: &Matrix, b: &Matrix| n.infer(a, b).unwrap().mul(&probe).unwrap().sum();
        let h = 1e-6;
        for i in 0..12 {
            let s = x.data()[i] + f.data()[i];
            if s.abs() < 1e-3 {
                continue;
            }
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd_x = (loss(&xp, &f) - loss(&xm, &f)) / (2.0 * h);
            let mut fp = f.clone();
            fp.data_mut()[i] += h;
            let mut fm = f.clone();
            fm.data_mut()[i] -= h;
            let fd_f = (loss(&x, &fp) - loss(&x, &fm)) / (2.0 * h);
            assert!((fd_x - shallow.data()[i]).abs() < 1e-6);
            assert!((fd_f - g.deep.data()[i]).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn plain_sum_passes_gradient_unchanged(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let up = Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal(0.0, 10.0)).collect()).unwrap();
            let mut n = node(ResidualOption::None, ActivationKind::Relu, cols);
            n.forward(&Matrix::zeros(rows, cols), &Matrix::zeros(rows, cols), Mode::Train).unwrap();
            let g = n.backward(&up).unwrap();
            let shallow = g.shallow.unwrap();
            for (a, b) in shallow.data().iter().zip(up.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in g.deep.data().iter().zip(up.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
