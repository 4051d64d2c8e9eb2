//! Multi-scenario ranking with adaptive feature learning, built on a small
//! reverse-mode differentiation core.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
