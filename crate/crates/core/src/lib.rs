// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod sim;
pub mod sliced;

pub use error::{Error, Result};
