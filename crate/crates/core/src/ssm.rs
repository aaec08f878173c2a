//! State-space model interfaces shared by the filters.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    obs_conditional_variance, obs_log_density, obs_sample, transition, InitialStateSpec,
    LatentState, ModelConfig, ParamVector,
};
use crate::stochastic::StreamRng;

/// A Markov latent process with scalar observations, at fixed parameters.
pub trait StateSpaceModel: Sync {
    type State: Clone + Debug + Send + Sync;

    fn sample_initial(&self, rng: &mut StreamRng) -> Self::State;

    fn transition(&self, x: &Self::State, rng: &mut StreamRng) -> Result<Self::State>;

    fn obs_log_density(&self, y: f64, x: &Self::State) -> Result<f64>;

    fn sample_obs(&self, x: &Self::State, rng: &mut StreamRng) -> f64;
}

/// Models whose states can be shifted by an ensemble Kalman update.
pub trait EnsembleModel: StateSpaceModel {
    /// Number of real coordinates in the update vector.
    const DIM: usize;

    fn coord(&self, x: &Self::State, k: usize) -> f64;

    /// `H x`, the observed linear functional.
    fn obs_mean(&self, x: &Self::State) -> f64;

    /// `Var[y | x]`.
    fn obs_variance(&self, x: &Self::State) -> f64;

    /// `x += gain * innovation` followed by any domain projection.
    fn shift(&self, x: &mut Self::State, gain: &[f64], innovation: f64);
}

/// The SEIR model at one parameter vector.
#[derive(Clone, Copy, Debug)]
pub struct SeirModel<'a> {
    pub theta: ParamVector,
    pub cfg: &'a ModelConfig,
    pub init: &'a InitialStateSpec,
}

impl<'a> SeirModel<'a> {
    pub fn new(theta: ParamVector, cfg: &'a ModelConfig, init: &'a InitialStateSpec) -> Self {
        Self { theta, cfg, init }
    }
}

impl StateSpaceModel for SeirModel<'_> {
    type State = LatentState;

    fn sample_initial(&self, rng: &mut StreamRng) -> LatentState {
        let mut x = self.init.sample(&self.theta, rng);
        // The initial compartments are drawn independently; put them on the
        // population simplex the dynamics conserve.
        let total = x.population();
        if total > 0.0 {
            let scale = self.cfg.population / total;
            x.s *= scale;
            x.e *= scale;
            x.i *= scale;
            x.r *= scale;
        } else {
            x.s = self.cfg.population;
        }
        x
    }

    fn transition(&self, x: &LatentState, rng: &mut StreamRng) -> Result<LatentState> {
        transition(x, &self.theta, self.cfg, rng)
    }

    fn obs_log_density(&self, y: f64, x: &LatentState) -> Result<f64> {
        obs_log_density(y, x, &self.theta, self.cfg)
    }

    fn sample_obs(&self, x: &LatentState, rng: &mut StreamRng) -> f64 {
        obs_sample(x, &self.theta, self.cfg, rng)
    }
}

impl EnsembleModel for SeirModel<'_> {
    const DIM: usize = LatentState::DIM;

    fn coord(&self, x: &LatentState, k: usize) -> f64 {
        match k {
            0 => x.s,
            1 => x.e,
            2 => x.i,
            3 => x.r,
            4 => x.z,
            _ => x.log_beta,
        }
    }

    fn obs_mean(&self, x: &LatentState) -> f64 {
        self.cfg.rho * x.z
    }

    fn obs_variance(&self, x: &LatentState) -> f64 {
        obs_conditional_variance(x, &self.theta, self.cfg)
    }

    /// Compartments are clamped at zero afterwards; `log beta` is not, and the
    /// population total is restored by the next transition.
    fn shift(&self, x: &mut LatentState, gain: &[f64], innovation: f64) {
        x.s = (x.s + gain[0] * innovation).max(0.0);
        x.e = (x.e + gain[1] * innovation).max(0.0);
        x.i = (x.i + gain[2] * innovation).max(0.0);
        x.r = (x.r + gain[3] * innovation).max(0.0);
        x.z = (x.z + gain[4] * innovation).max(0.0);
        x.log_beta += gain[5] * innovation;
    }
}

/// `x_t = a x_{t-1} + N(0, q^2)`, `y_t = x_t + N(0, r^2)`, `x_0 ~ N(m0, s0^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearGaussian {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub m0: f64,
    pub s0: f64,
}

impl LinearGaussian {
    pub fn new(a: f64, q: f64, r: f64, m0: f64, s0: f64) -> Result<Self> {
        if ![a, q, r, m0, s0].iter().all(|v| v.is_finite()) || q < 0.0 || r <= 0.0 || s0 < 0.0 {
            return Err(Error::Domain("invalid linear-Gaussian model".into()));
        }
        Ok(Self { a, q, r, m0, s0 })
    }

    /// Simulates `T` observations.
    pub fn simulate(&self, t: usize, rng: &mut StreamRng) -> Vec<f64> {
        let mut x = self.sample_initial(rng);
        (0..t)
            .map(|_| {
                x = self.a * x + self.q * rng.sample::<f64, _>(StandardNormal);
                self.sample_obs(&x, rng)
            })
            .collect()
    }
}

impl StateSpaceModel for LinearGaussian {
    type State = f64;

    fn sample_initial(&self, rng: &mut StreamRng) -> f64 {
        self.m0 + self.s0 * rng.sample::<f64, _>(StandardNormal)
    }

    fn transition(&self, x: &f64, rng: &mut StreamRng) -> Result<f64> {
        Ok(self.a * x + self.q * rng.sample::<f64, _>(StandardNormal))
    }

    fn obs_log_density(&self, y: f64, x: &f64) -> Result<f64> {
        let v = self.r * self.r;
        Ok(-0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (y - x).powi(2) / v))
    }

    fn sample_obs(&self, x: &f64, rng: &mut StreamRng) -> f64 {
        x + self.r * rng.sample::<f64, _>(StandardNormal)
    }
}

impl EnsembleModel for LinearGaussian {
    const DIM: usize = 1;

    fn coord(&self, x: &f64, _k: usize) -> f64 {
        *x
    }

    fn obs_mean(&self, x: &f64) -> f64 {
        *x
    }

    fn obs_variance(&self, _x: &f64) -> f64 {
        self.r * self.r
    }

    fn shift(&self, x: &mut f64, gain: &[f64], innovation: f64) {
        *x += gain[0] * innovation;
    }
}
