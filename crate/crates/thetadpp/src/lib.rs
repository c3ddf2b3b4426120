//! Stieltjes-Wigert polynomials, the Chern-Simons matrix model and the
//! determinantal point process with the Jacobi-theta kernel.

pub mod error;
pub mod numeric;
pub mod qspecial;
pub mod swpoly;
pub mod kernels;
pub mod partition;
pub mod dpp;
pub mod acceptance;

pub use error::{Error, Result};
