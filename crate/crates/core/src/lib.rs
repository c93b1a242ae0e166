//! Numerical laboratory for the radial defocusing wave equation
//! `u_tt - Δu = -|u|^(p-1) u` in three dimensions, `3 <= p < 5`.
//!
//! The solution is carried as `w = r u` on a uniform radial grid and advanced
//! by a unit-CFL leapfrog scheme. Diagnostics split the energy into inward and
//! outward channels and check the flux identities and decay estimates that
//! govern scattering.

pub mod appendix;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod plot;
pub mod quad;
pub mod scattering;
pub mod solver;

pub use error::{Error, Result};
