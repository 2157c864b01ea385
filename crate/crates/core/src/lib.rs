//! Deep ReLU networks trained by full-batch gradient descent on the square loss,
//! together with a global-convergence certificate computed at initialization and
//! a per-iteration audit of every invariant the certificate relies on.
//!
//! Module map:
//! - [`linalg`]: dense matrices and extremal singular/eigen values.
//! - [`network`]: forward pass, square loss, backprop, Jacobian blocks.
//! - [`init`]: sphere-uniform data and the three initialization schemes.
//! - [`certificate`]: initialization conditions, learning-rate bound, β-search, λ_* estimate.
//! - [`trainer`]: gradient descent with invariant and descent-decomposition audits.
//! - [`analysis`]: NTK assembly and the structural inequality checks.
//! - [`io`]: the text matrix format used to persist datasets and parameters.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod certificate;
pub mod error;
pub mod init;
pub mod io;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod trainer;

pub use error::{Error, LinalgError, Result};
pub use linalg::Matrix;
