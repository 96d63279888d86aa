//! Numerical laboratory for one-dimensional Itô equations
//! `dξ = a_T(t, ξ) dt + dW` whose coefficients depend irregularly on a
//! parameter, and for the weak limits of their transformed paths and
//! integral functionals.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The lane loops index several parallel arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod conditions;
pub mod error;
pub mod model;
pub mod noise;
pub mod quad;
pub mod simulate;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
