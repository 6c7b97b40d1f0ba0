//! Numerical homogenization toolkit for a 2D coupled phase-field /
//! incompressible-flow system with rapidly oscillating viscosity.
//!
//! The crate provides:
//! - staggered-grid discrete operators ([`grid`]),
//! - FFT/DCT-based constant-coefficient solvers ([`spectral`]),
//! - oscillating viscosity models with ellipticity probing ([`viscosity`]),
//! - periodic vector-valued cell problems and the resulting effective
//!   viscosity tensor ([`cell`]),
//! - mean-value computation for (quasi-)periodic functions and two-scale
//!   pairings ([`meanvalue`]),
//! - the coupled solver for both the heterogeneous and the effective
//!   system ([`chns`]),
//! - a comparison harness measuring convergence between the two ([`harness`]).

pub mod cell;
pub mod chns;
pub mod error;
pub mod grid;
pub mod harness;
pub mod meanvalue;
pub mod spectral;
pub mod viscosity;

pub use error::{Error, Result};
