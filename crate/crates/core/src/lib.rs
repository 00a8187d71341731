//! Determinant-based distribution over binary vectors.
//!
//! A model is a p×p matrix Σ whose diagonal holds the marginal means and
//! whose off-diagonal entries encode dependence. With `Λ = Σ⁻¹`, the
//! probability of a state with zeros at B is `det(Λ_BB − I) / det Λ`.
//! Marginals, conditionals, moments and sampling all reduce to small
//! determinants, inverses and Schur complements.
//!
//! The library API is 0-based; the CLI and file formats are 1-based.

// `!(x > 0.0)` is used on purpose so NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod experiment;
pub mod io;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::{IndexSet, Matrix};
pub use model::{BinaryVector, CheckPolicy, GrassmannBinary, ModelOptions, Observation, SigmaMatrix, Validity};
pub use sampler::{Dataset, Sampler};
