//! Monte Carlo verification toolkit for one-dimensional diffusions on (0,1)
//! with boundary-dominating drift: envelope validation and explicit
//! constants, boundary-safe path simulation, hitting-time moment
//! certification, excursion-based invariant-measure estimation, and
//! convergence-to-equilibrium curves with coupling diagnostics.

pub mod cli;
pub mod config;
pub mod convergence;
pub mod error;
pub mod expr;
pub mod invariant;
pub mod model;
pub mod recurrence;
pub mod report;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
