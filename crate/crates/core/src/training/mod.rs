//! Losses, regularizers, optimizers, the epoch loop and gradient checking.

mod gradcheck;
mod loss;
mod optimizer;
mod trainer;

pub use gradcheck::{
    gradient_check, gradient_check_with, GradientCheckOptions, GradientCheckReport,
    RELATIVE_ERROR_FLOOR,
};
pub use loss::{cross_entropy, data_loss, loss, LossKind, LossValue, Regularizer, RegularizerKind};
pub use optimizer::{Optimizer, OptimizerKind};
pub use trainer::{
    batches, check_loss_compatible, evaluate_loss, train, EpochRecord, TrainConfig, TrainData,
    TrainHistory, TrainOutcome,
};
