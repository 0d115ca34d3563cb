//! Nested-residual autoencoder networks for tabular data.
//!
//! The crate is a small, dependency-light deep-learning engine built around one
//! architecture: a symmetric dense autoencoder whose encode layers are joined to
//! their mirrored decode layers by identity shortcuts, nested from the input
//! level inwards. A target head sits on top of the decoder and either predicts
//! the targets alone or the targets plus a reconstruction of the inputs.
//!
//! Module map:
//!
//! - [`numeric`]: dense matrices, the seeded generator, feature standardization.
//! - [`layers`]: dense, activation, batch-norm, dropout and residual-add nodes.
//! - [`network`]: the builder for residual and regular networks, forward pass,
//!   parameter bookkeeping and JSON persistence.
//! - [`training`]: losses, regularizers, backpropagation driver, optimizers,
//!   the epoch loop and the finite-difference gradient checker.
//! - [`data`]: simulated and spatial-field generators, CSV ingestion, splits.
//! - [`evaluation`]: metrics and the comparison, grid-search and
//!   residual-count experiments.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod layers;
pub mod network;
pub mod numeric;
pub mod training;

pub use error::{Error, Result};
pub use numeric::{Matrix, Rng};
