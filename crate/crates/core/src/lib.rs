//! Two-way cluster-robust variance estimation, regression inference, simulation
//! designs with exact moments, normal-approximation bounds and Monte Carlo studies.

// `!(x > 0.0)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cluster;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod regression;
pub mod stein;
pub mod variance;

pub use error::{Error, Result, Warning};
