//! Numerical laboratory for Robin-boundary heat flows, Rayleigh instability of
//! shear profiles and the exponent bookkeeping of boundary-layer expansions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod certificate;
pub mod error;
pub mod experiment;
pub mod jet;
pub mod numerics;
pub mod planner;
pub mod profile;
pub mod quad;
pub mod rayleigh;
pub mod robin;

pub use error::{Error, Result};
