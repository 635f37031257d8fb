//! Quasi-stationary analysis of binomial–Poisson population chains.
//!
//! The chain lives on the lattice `Z_+^d / N`; each step every individual dies
//! with probability `1/N` and each type `i` receives `Poi(F_i(x))` newborns.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod grid;
pub mod ldp;
pub mod model;
pub mod qsd;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::ModelSpec;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
