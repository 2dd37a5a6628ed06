//! Numerical laboratory for weighted Bergman kernels, radius functions,
//! Agmon distances and weighted Kohn-Laplacian forms on ℂⁿ.

pub mod agmon;
pub mod cli;
pub mod error;
pub mod fit;
pub mod forms;
pub mod kernel;
pub mod potential;
pub mod quad;
pub mod radius;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
