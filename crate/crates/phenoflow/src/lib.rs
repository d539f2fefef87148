//! Simulator and verification harness for tissue growth with N competing
//! phenotypes on a periodic box. The phenotype densities are transported by
//! the gradient of a Brinkman potential W (screened by viscosity nu) driven
//! by a stiff power-law pressure (exponent k) and grow at rates depending on
//! pressure and an inherited trait. Alongside the solver, the crate measures
//! the quantities that control the joint limit N -> inf, k -> inf, nu -> 0:
//! mass and pressure bounds, an energy balance, weak complementarity and
//! reconstruction defects, and self-convergence rates along parameter
//! sweeps.
//!
//! Start from [`config::RunConfig`] and [`runner::execute`], or the runnable
//! examples, each of which exercises one capability end to end.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod runner;
pub mod spectral;
pub mod sweep;

mod cli;

pub use cli::cli_main;
pub use error::{Error, Result};
