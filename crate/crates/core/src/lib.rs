//! Long-range percolation on `Z^d` with connection probability
//! `1 - exp(-beta |x - y|^{-s})`, in the regime `d < s < 2d`.
//!
//! The crate samples percolation graphs on finite boxes, computes chemical
//! distances, tabulates the exponent sequences `theta_n` and `vartheta_n`,
//! evaluates the limiting scaling function and estimates it from simulation.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod estimator;
pub mod exponents;
pub mod lattice;
pub mod limits;
pub mod metric;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{LatticeBox, Vertex};
pub use model::{Kernel, ModelParams, Norm};
