//! Data-driven behavioral modeling of nonlinear systems with vector-valued
//! kernels: minimum-norm interpolation with error certificates, kernelized
//! subspace identification, and reference simulators.

pub mod check;
pub mod config;
pub mod error;
pub mod interp;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod subspace;
pub mod systems;

pub use error::{Error, Result};
