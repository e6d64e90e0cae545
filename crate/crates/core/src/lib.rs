//! Self-interacting diffusions on spheres S^n with inner-product interaction
//! kernel: simulation, Gibbs-measure numerics and convergence diagnostics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod gibbs;
pub mod interaction;
pub mod output;
pub mod runner;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
