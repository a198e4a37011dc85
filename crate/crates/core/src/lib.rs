//! Selective inference for quantile regression.
//!
//! Variables are selected with a randomized l1-penalized smoothed quantile
//! regression; confidence intervals and p-values for the selected effects
//! are then computed from a truncated-Gaussian pivot, conditional on the
//! selection event. Baselines (naive reuse of the data and sample
//! splitting) share the same reporting pipeline.

pub mod dataset;
pub mod geometry;
pub mod error;
pub mod io;
pub mod kernel;
pub mod moments;
pub mod pipeline;
pub mod pivot;
pub mod sim;
pub mod solver;
pub mod stats;

pub use dataset::Dataset;
pub use error::{Error, Result};
