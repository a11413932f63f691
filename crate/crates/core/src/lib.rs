//! Adaptive, error-bounded hierarchical matrices and their use for compressing
//! feed-forward network weights.

pub mod baselines;
pub mod experiments;
pub mod error;
pub mod generate;
pub mod hmatrix;
pub mod linalg;
pub mod nn;
pub mod pinn;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
