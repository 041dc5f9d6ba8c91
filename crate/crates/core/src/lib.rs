//! Structure-preserving solver for the 2D incompressible Navier-Stokes
//! equations on mimetic spectral-element spaces, with Galerkin, optimal
//! projection and variational multiscale modes.

pub mod assembly;
pub mod basis;
pub mod cases;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod mesh;
pub mod sparse;
pub mod stokes;
pub mod timestepper;
pub mod vms;

pub use error::{Error, Result};
