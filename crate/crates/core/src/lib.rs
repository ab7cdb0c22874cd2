//! Network reconstruction from noisy node time series by sparse Bayesian
//! regression, with a cross-validated lasso baseline, simulators for three
//! dynamics, accuracy metrics and an experiment harness.

pub mod cli;
pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod lasso;
pub mod metrics;
pub mod network;
pub mod problem;
pub mod special;
pub mod vbr;

pub use error::{Error, Result};
pub use nalgebra;
