// `!(x > 0.0)` is used on purpose throughout so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoise;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod models;
pub mod noisy_labels;
pub mod numerics;
pub mod risk;
pub mod rng;
pub mod simplex;
pub mod uncertainty;

pub use error::{Error, Result};
