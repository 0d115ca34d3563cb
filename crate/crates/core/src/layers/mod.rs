//! Layer primitives with explicit forward and backward passes.
//!
//! Every stateful layer caches what its backward pass needs during a
//! train-mode `forward`. `infer` is the side-effect free counterpart used for
//! prediction.

mod activation;
mod batchnorm;
mod dense;
mod dropout;
mod residual;

use serde::{Deserialize, Serialize};

pub use activation::{ActivationKind, ActivationLayer};
pub use batchnorm::{BatchNormGradients, BatchNormLayer, BN_EPSILON, BN_MOMENTUM};
pub use dense::{DenseGradients, DenseLayer, Init};
pub use dropout::DropoutLayer;
pub use residual::{ResidualAddNode, ResidualGradients, ResidualOption};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}
