//! Convexity adjustments for SOFR futures under a Hull-White model extended
//! with a sinh smile, via small-noise expansion of the pricing Green's
//! function.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod greens;
pub mod kernels;
pub mod mc;
pub mod pricing;
pub mod quadrature;
pub mod termstructure;

pub use error::{Error, Result};
