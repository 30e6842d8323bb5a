//! Surface-layer mass functionals for causal variational principles: radial
//! vacuum kernels, jets and their kernel derivatives, alignment fields, and
//! the linearized Schwarzschild and ultrastatic scenarios.

pub mod alignment;
pub mod error;
pub mod fd;
pub mod geometry;
pub mod jets;
pub mod kernel;
pub mod quadrature;
pub mod report;
pub mod schwarzschild;
pub mod surface_layer;
pub mod cli;
pub mod ultrastatic;

pub use error::{Error, Result};
