//! Command-line driver for the radial wave laboratory.

pub mod checks;
pub mod config;
pub mod fit;
pub mod run;
pub mod sweep;
pub mod verify;
