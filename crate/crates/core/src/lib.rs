//! Mixture density network compact models for stochastic devices.
//!
//! The pipeline: a parametric heater-cryotron oracle generates sweep data
//! ([`device`]), a mixture density network learns the conditional
//! distribution of the load voltage ([`network`], [`mixture`]), values are
//! drawn by inverse transform sampling with held quantiles ([`sampling`]),
//! the fit is scored the way switching experiments are ([`evalsuite`]), and
//! the trained model is emitted as Verilog-A ([`export`]).

pub mod cli;
pub mod device;
pub mod error;
pub mod evalsuite;
pub mod export;
pub mod mixture;
pub mod network;
pub mod sampling;

pub use error::{Error, Result};
