use serde::{Deserialize, Serialize};

use crate::evaluation::softmax;
use crate::network::{Network, ParamGradients, ParamKind, Predictions};
use crate::numeric::Matrix;
use crate::{Error, Result};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `(1/2n) Σ ‖y − ŷ‖²` on the target head.
    MseOpt1,
    /// Target MSE plus `weight · (1/2n) Σ ‖x − x̂‖²` on the reconstruction head.
    MsePlusReconstructionOpt2 {
        #[serde(default = "one")]
        weight: f64,
    },
    /// Mean softmax cross-entropy; targets hold class indices.
    CrossEntropy,
}

impl LossKind {
    pub fn needs_reconstruction(self) -> bool {
        matches!(self, LossKind::MsePlusReconstructionOpt2 { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    #[default]
    None,
    L1,
    L2,
}

/// Penalty on dense-layer weights (biases and batch-norm parameters are not
/// penalized).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Regularizer {
    #[serde(default)]
    pub kind: RegularizerKind,
    #[serde(default)]
    pub coefficient: f64,
}

impl Regularizer {
    pub const NONE: Regularizer = Regularizer {
        kind: RegularizerKind::None,
        coefficient: 0.0,
    };

    pub fn l1(coefficient: f64) -> Self {
        Regularizer {
            kind: RegularizerKind::L1,
            coefficient,
        }
    }

    pub fn l2(coefficient: f64) -> Self {
        Regularizer {
            kind: RegularizerKind::L2,
            coefficient,
        }
    }

    fn active(&self) -> bool {
        self.kind != RegularizerKind::None && self.coefficient != 0.0
    }

    pub fn penalty(&self, net: &Network) -> f64 {
        if !self.active() {
            return 0.0;
        }
        let total: f64 = net
            .parameters()
            .into_iter()
            .zip(net.parameter_kinds())
            .filter(|(_, kind)| *kind == ParamKind::Weight)
            .map(|(p, _)| p)
            .map(|p| match self.kind {
                RegularizerKind::L1 => p.iter().map(|v| v.abs()).sum::<f64>(),
                RegularizerKind::L2 => p.iter().map(|v| v * v).sum::<f64>(),
                RegularizerKind::None => 0.0,
            })
            .sum();
        self.coefficient * total
    }

    /// Adds the penalty gradient to `grads` (aligned with
    /// [`Network::parameters`]).
    pub fn add_gradient(&self, net: &Network, grads: &mut ParamGradients) {
        if !self.active() {
            return;
        }
        let kinds = net.parameter_kinds();
        for ((p, g), kind) in net.parameters().iter().zip(&mut grads.tensors).zip(kinds) {
            if kind != ParamKind::Weight {
                continue;
            }
            for (gi, &pi) in g.iter_mut().zip(p.iter()) {
                *gi += match self.kind {
                    RegularizerKind::L1 => self.coefficient * sign(pi),
                    RegularizerKind::L2 => 2.0 * self.coefficient * pi,
                    RegularizerKind::None => 0.0,
                };
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss value split into its data and penalty parts, plus the gradient with
/// respect to the full head output.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub data_term: f64,
    pub penalty: f64,
    pub head_gradient: Matrix,
}

fn half_mse(target: &Matrix, prediction: &Matrix, n: f64) -> Result<(f64, Matrix)> {
    if target.shape() != prediction.shape() {
        return Err(Error::shape("mse loss", prediction.shape(), target.shape()));
    }
    let diff = prediction.sub(target)?;
    let value = diff.sum_of_squares() / (2.0 * n);
    Ok((value, diff.scale(1.0 / n)))
}

/// Mean softmax cross-entropy and its gradient `(softmax − onehot) / n`.
pub fn cross_entropy(logits: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    if labels.cols() != 1 || labels.rows() != logits.rows() {
        return Err(Error::shape(
            "cross-entropy labels",
            labels.shape(),
            (logits.rows(), 1),
        ));
    }
    let n = logits.rows() as f64;
    let mut grad = softmax(logits);
    let mut value = 0.0;
    for r in 0..logits.rows() {
        let label = labels.get(r, 0);
        if label < 0.0 || label.fract() != 0.0 || label as usize >= logits.cols() {
            return Err(Error::InvalidArgument(format!(
                "class label {label} invalid for {} classes",
                logits.cols()
            )));
        }
        let c = label as usize;
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        value += log_sum - row[c];
        let g = grad.row_mut(r);
        g[c] -= 1.0;
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    Ok((value / n, grad))
}

/// Data term and head gradient of `kind`; `inputs` is the network input the
/// reconstruction head is compared against.
pub fn data_loss(
    kind: LossKind,
    predictions: &Predictions,
    targets: &Matrix,
    inputs: Option<&Matrix>,
) -> Result<(f64, Matrix)> {
    let n = predictions.outputs.rows() as f64;
    match kind {
        LossKind::MseOpt1 => half_mse(targets, &predictions.outputs, n),
        LossKind::CrossEntropy => cross_entropy(&predictions.outputs, targets),
        LossKind::MsePlusReconstructionOpt2 { weight } => {
            let (recon, inputs) = match (&predictions.reconstruction, inputs) {
                (Some(r), Some(x)) => (r, x),
                _ => {
                    return Err(Error::InvalidArgument(
                        "reconstruction loss needs a reconstruction head and the inputs".into(),
                    ))
                }
            };
            let (target_value, target_grad) = half_mse(targets, &predictions.outputs, n)?;
            let (recon_value, recon_grad) = half_mse(inputs, recon, n)?;
            Ok((
                target_value + weight * recon_value,
                target_grad.hstack(&recon_grad.scale(weight))?,
            ))
        }
    }
}

/// Full objective: data term plus the regularizer penalty on `net`.
pub fn loss(
    kind: LossKind,
    predictions: &Predictions,
    targets: &Matrix,
    inputs: Option<&Matrix>,
    reg: &Regularizer,
    net: &Network,
) -> Result<LossValue> {
    let (data_term, head_gradient) = data_loss(kind, predictions, targets, inputs)?;
    let penalty = reg.penalty(net);
    Ok(LossValue {
        value: data_term + penalty,
        data_term,
        penalty,
        head_gradient,
    })
}
