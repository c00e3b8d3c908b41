//! Numerical kernels for divided differences, multijets, interval-map
//! perturbation, normal-form return maps, Pfaffian zero counting,
//! stratification diagnostics and Abelian integrals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abelint;
pub mod chainstrata;
pub mod error;
pub mod interp;
pub mod linalg;
pub mod multijet;
pub mod normalforms;
pub mod perturb;
pub mod pfaffrolle;
pub mod poly;
pub mod quad;

pub use error::{Error, Result};
