//! Robust detection of Gaussian signals whose power spectral density is only
//! known to lie in a finite uncertainty set.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod dominance;
pub mod error;
pub mod exponent;
pub mod gaussian_model;
pub mod harness;
pub mod minimax;
mod parallel;
pub mod rng;
pub mod serde_float;
pub mod spectral;

pub use error::{Error, Result};
