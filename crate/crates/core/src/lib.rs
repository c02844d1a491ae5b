//! Group-invariant tensor bases and invariant tensor-train classifiers.

// Contractions index several arrays with one loop variable.
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod group_algebra;
pub mod invariant_basis;
pub mod learning;
pub mod linalg;
pub mod reference_solvers;
pub mod rng;
pub mod tensor_train;

pub use error::{Error, Result};
