//! Adaptive finite elements with a fixed-point linearisation for strongly monotone
//! quasilinear elliptic problems on the unit square.
//!
//! The pipeline is mesh -> space -> assembly -> solver -> estimator -> adapt.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adapt;
pub mod assembly;
pub mod cli;
pub mod element;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
