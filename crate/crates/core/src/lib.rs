//! Sequential Bayesian inference for stochastic SEIR epidemic models.
//!
//! The outer sampler ([`smc2`]) moves a population of parameter particles
//! through the data, each carrying an inner filter that estimates the
//! likelihood: an ensemble Kalman filter ([`enkf`]) or a bootstrap particle
//! filter ([`bpf`]). [`liuwest`] is a joint state-parameter baseline and
//! [`products`] turns a finished run into state bands and forecasts.

pub mod bpf;
pub mod cli;
pub mod enkf;
pub mod error;
pub mod gaussdens;
pub mod io;
pub mod liuwest;
pub mod model;
pub mod products;
pub mod smc2;
pub mod ssm;
pub mod stochastic;
pub mod summary;

pub use error::{Error, Result};

/// Log of a zero probability.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

