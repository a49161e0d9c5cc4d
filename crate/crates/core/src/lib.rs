//! Permanent approximation for random matrices with vanishing mean.
//!
//! The crate computes `g_A(z) = Per(J + zA)` exactly at desk scale, continues
//! `ln g_A` along root-avoiding curves from truncated Taylor tables, and ships
//! the exact oracles and Monte-Carlo checks used to validate every step.
//!
//! Module map:
//! - [`matrix`]: complex matrices and seeded ensembles
//! - [`permanent`]: permutation-sum and Ryser permanents
//! - [`poly`]: the interpolating polynomial, its coefficients and roots
//! - [`cac`]: log-Taylor tables, derivative schedules and the continuation engine
//! - [`curve`]: root-avoiding curve families, discretization and clearance
//! - [`stats`]: Monte-Carlo estimators for moments, root counts and tail sums
//! - [`bw`]: exact Berlekamp-Welch recovery of `Per(A)` from a faulty oracle
//! - [`verify`]: the acceptance checks, shared by the test suite and the CLI

pub mod bw;
pub mod cac;
pub mod curve;
pub mod error;
pub mod matrix;
pub mod permanent;
pub mod poly;
pub mod serde_complex;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::{affine_combine, all_ones, sample, ComplexMatrix, EnsembleKind, EnsembleSpec};
pub use num_complex::Complex64;
