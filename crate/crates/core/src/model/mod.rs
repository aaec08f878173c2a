//! Diffusion-driven SEIR latent dynamics and count observation models.
//!
//! The latent state is `(S, E, I, R, Z, log beta)`. Compartments follow a
//! forward-Euler discretization of the SEIR ODEs, `Z` accumulates new
//! infectious cases over one reporting interval, and `log beta` is a Brownian
//! motion with volatility `nu_beta`.

mod dynamics;
mod examples;
mod observation;
mod simulate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::{Marginal, StreamRng};

pub use dynamics::{effective_reproduction, transition, transition_frozen_beta};
pub use examples::{example, example1, example2, ExampleSpec};
pub use observation::{obs_conditional_variance, obs_log_density, obs_sample, MU_FLOOR};
pub use simulate::{simulate_epidemic, SimulatedEpidemic};

// Inside these bounds exp(log_beta) is finite and non-zero.
const MIN_LOG_BETA: f64 = -745.0;
const MAX_LOG_BETA: f64 = 709.0;

/// One point of the latent SEIR process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    /// Incidence accumulated over the last reporting interval.
    pub z: f64,
    pub log_beta: f64,
}

impl LatentState {
    pub const DIM: usize = 6;

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub fn population(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    pub fn coords(&self) -> [f64; 6] {
        [self.s, self.e, self.i, self.r, self.z, self.log_beta]
    }

    pub fn from_coords(c: [f64; 6]) -> Self {
        Self {
            s: c[0],
            e: c[1],
            i: c[2],
            r: c[3],
            z: c[4],
            log_beta: c[5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(ok(self.s) && ok(self.e) && ok(self.i) && ok(self.r) && ok(self.z)) {
            return Err(Error::InvalidState(format!(
                "compartments must be finite and non-negative: {self:?}"
            )));
        }
        if !(self.log_beta > MIN_LOG_BETA && self.log_beta < MAX_LOG_BETA) {
            return Err(Error::InvalidState(format!(
                "log_beta {} does not give a finite positive beta",
                self.log_beta
            )));
        }
        Ok(())
    }
}

/// Names of the model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    Alpha,
    Gamma,
    NuBeta,
    Phi,
    Beta0,
}

impl Param {
    pub const ALL: [Param; 5] = [
        Param::Alpha,
        Param::Gamma,
        Param::NuBeta,
        Param::Phi,
        Param::Beta0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::Gamma => "gamma",
            Param::NuBeta => "nu_beta",
            Param::Phi => "phi",
            Param::Beta0 => "beta0",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{s}'")))
    }
}

/// Static parameters `(alpha, gamma, nu_beta, phi, beta0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    /// Latency rate, per day.
    pub alpha: f64,
    /// Recovery rate, per day.
    pub gamma: f64,
    /// Volatility of log beta, per sqrt(day).
    pub nu_beta: f64,
    /// Negative-binomial overdispersion; ignored by the Poisson model.
    pub phi: f64,
    /// Transmission rate at time zero, per day.
    pub beta0: f64,
}

impl Default for ParamVector {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 1.0 / 7.0,
            nu_beta: 0.0,
            phi: 0.0,
            beta0: 0.3,
        }
    }
}

impl ParamVector {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Alpha => self.alpha,
            Param::Gamma => self.gamma,
            Param::NuBeta => self.nu_beta,
            Param::Phi => self.phi,
            Param::Beta0 => self.beta0,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Alpha => self.alpha = v,
            Param::Gamma => self.gamma = v,
            Param::NuBeta => self.nu_beta = v,
            Param::Phi => self.phi = v,
            Param::Beta0 => self.beta0 = v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.alpha > 0.0
            && self.gamma.is_finite()
            && self.gamma > 0.0
            && self.nu_beta.is_finite()
            && self.nu_beta >= 0.0
            && self.phi.is_finite()
            && self.phi >= 0.0
            && self.beta0.is_finite()
            && self.beta0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid parameter vector {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsModel {
    Poisson,
    NegBin,
}

impl ObsModel {
    pub fn name(self) -> &'static str {
        match self {
            ObsModel::Poisson => "poisson",
            ObsModel::NegBin => "negbin",
        }
    }
}

impl FromStr for ObsModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ObsModel::Poisson),
            "negbin" => Ok(ObsModel::NegBin),
            other => Err(Error::Config(format!(
                "unknown observation model '{other}' (expected poisson or negbin)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Population size N.
    pub population: f64,
    /// Reporting fraction in (0, 1].
    pub rho: f64,
    pub obs_model: ObsModel,
    /// Length of one reporting interval, in days.
    pub dt: f64,
    /// Euler sub-steps per reporting interval.
    pub n_substeps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            population: 500_000.0,
            rho: 1.0,
            obs_model: ObsModel::Poisson,
            dt: 1.0,
            n_substeps: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.population.is_finite() && self.population > 0.0) {
            return Err(Error::Config(format!(
                "population must be positive, got {}",
                self.population
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_substeps == 0 {
            return Err(Error::Config("n_substeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Distribution of the initial latent state. `log beta` starts at
/// `log(beta0)` of the parameter vector and `Z` at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub s0: Marginal,
    pub i0: Marginal,
    pub e0: f64,
    pub r0: f64,
}

impl InitialStateSpec {
    pub fn sample(&self, theta: &ParamVector, rng: &mut StreamRng) -> LatentState {
        LatentState {
            s: self.s0.sample(rng).max(0.0),
            e: self.e0,
            i: self.i0.sample(rng).max(0.0),
            r: self.r0,
            z: 0.0,
            log_beta: theta.beta0.ln(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.s0.validate()?;
        self.i0.validate()?;
        if !(self.e0 >= 0.0 && self.r0 >= 0.0 && self.e0.is_finite() && self.r0.is_finite()) {
            return Err(Error::Config("initial E and R must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
        assert!("delta".parse::<Param>().is_err());
    }

    #[test]
    fn param_vector_validation() {
        let mut theta = ParamVector::default();
        assert!(theta.validate().is_ok());
        theta.phi = 0.0;
        assert!(theta.validate().is_ok());
        theta.gamma = 0.0;
        assert!(theta.validate().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.rho = 0.0;
        assert!(cfg.validate().is_err());
        cfg.rho = 1.0;
        cfg.n_substeps = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn state_validation() {
        let mut x = LatentState {
            s: 10.0,
            log_beta: 0.3f64.ln(),
            ..Default::default()
        };
        assert!(x.validate().is_ok());
        x.e = -1.0;
        assert!(x.validate().is_err());
        x.e = 0.0;
        x.log_beta = f64::NAN;
        assert!(x.validate().is_err());
    }
}
