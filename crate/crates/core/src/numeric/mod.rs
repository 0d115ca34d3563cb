//! Numeric building blocks shared by every other module.

mod matrix;
mod rng;
mod standardize;

pub use matrix::{ElementwiseOp, Matrix};
pub use rng::Rng;
pub use standardize::{standardize_fit_apply, StandardizeStats, SD_FLOOR};
