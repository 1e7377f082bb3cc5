//! Uncertainty quantification for deep spatiotemporal forecasting.
//!
//! The crate bundles a small reverse-mode differentiation engine
//! ([`diffcore`]), graph and grid spatial operators ([`spatial`]),
//! recurrent sequence-to-sequence forecasters ([`models`]), interval and
//! quantile scoring rules ([`scoring`]), six uncertainty-quantification
//! procedures ([`uqmethods`]) and an experiment harness ([`harness`]).

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffcore;
pub mod error;
pub mod harness;
pub mod models;
pub mod scoring;
pub mod spatial;
pub mod uqmethods;

pub use error::{Error, Result};
