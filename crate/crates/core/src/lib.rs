//! Near/far matched designs for continuous instrumental variables.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod cohort;
pub mod debias;
pub mod density;
pub mod dgp;
pub mod efficiency;
pub mod error;
pub mod inference;
pub mod matching;
pub mod presets;
pub mod quadrature;
pub mod rng;
pub mod sensitivity;
pub mod stats;

pub use error::{Error, Result};
