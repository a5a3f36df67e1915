//! Pathwise simulation of the stochastic shadow Gierer-Meinhardt system on the
//! unit ball, with finite-time blowup detection and evaluators for the
//! closed-form blowup-time and stopping-time bounds.
//!
//! The activator is integrated in the rescaled variable `v = e^t u` on a radial
//! grid; the inhibitor is advanced through the monotone process
//! `xi_hat = exp(3t/2 - B_t) * xi`, which keeps it non-decreasing by
//! construction.
//!
//! Module map:
//!
//! - [`model`]: parameters, the initial profile, the radial grid.
//! - [`brownian`]: driving path with dyadic bridge refinement and tail bound.
//! - [`solver`]: time stepping, invariant monitors, stopping times.
//! - [`bounds`]: closed-form bound evaluators and per-path checks.
//! - [`ensemble`]: reproducible Monte Carlo campaigns.
//! - [`output`]: CSV/JSON encodings of the artifacts.

pub mod bounds;
pub mod brownian;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod output;
pub(crate) mod power;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Parameters, RadialGrid, RawParameters};
