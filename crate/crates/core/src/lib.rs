#![allow(clippy::needless_range_loop)]

//! Universal multiplier bounds for reversible Markov semigroups on finite
//! weighted spaces: heat kernels, Laplace-type spectral multipliers, the
//! Rota dilation into reverse martingales, and empirical `L^p` checks.

pub mod cli;
pub mod dilation;
pub mod error;
pub mod inequalities;
pub mod linalg;
pub mod multiplier;
pub mod quadrature;
pub mod semigroup;
pub mod space;
pub mod spectral;

pub use error::{Error, Result};
pub use space::{Field, WeightedSpace, C64};
