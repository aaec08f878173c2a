//! Stochastic ensemble Kalman filter with perturbed observations and a
//! state-dependent observation variance.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussdens::{standard_gaussian_logpdf_scalar, ScalarUnbiased};
use crate::ssm::EnsembleModel;
use crate::stochastic::{RngStream, StreamRng};
use crate::LOG_ZERO;

/// Default floor on the observation variance.
pub const DEFAULT_ETA: f64 = 0.1;

/// Which density scores the one-step predictive distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LikelihoodKind {
    /// Finite-ensemble unbiased estimator of the Gaussian density.
    #[default]
    Unbiased,
    /// Normal density at the plug-in ensemble moments.
    Plugin,
}

impl LikelihoodKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Unbiased => "unbiased",
            Self::Plugin => "plugin",
        }
    }
}

impl std::str::FromStr for LikelihoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbiased" => Ok(Self::Unbiased),
            "plugin" | "standard" => Ok(Self::Plugin),
            other => Err(Error::Config(format!(
                "unknown likelihood '{other}' (expected unbiased or plugin)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnkfOptions {
    pub eta: f64,
    pub likelihood: LikelihoodKind,
}

impl Default for EnkfOptions {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            likelihood: LikelihoodKind::Unbiased,
        }
    }
}

impl EnkfOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Result of one forecast-analysis cycle.
#[derive(Clone, Debug)]
pub struct FilterStep<S> {
    pub analysis: Vec<S>,
    pub incr_loglik: f64,
    /// Ensemble mean of `H x` before the update.
    pub forecast_mean_obs: f64,
    /// Ensemble variance of `H x` before the update, without `V`.
    pub forecast_var_obs: f64,
    pub v: f64,
}

/// Propagates every member through the transition kernel.
pub fn forecast_ensemble<M: EnsembleModel>(
    model: &M,
    members: &[M::State],
    rng: &mut StreamRng,
) -> Result<Vec<M::State>> {
    members.iter().map(|x| model.transition(x, rng)).collect()
}

/// `V = max(eta, mean_i Var[y | x_i])`.
pub fn observation_variance<M: EnsembleModel>(model: &M, forecast: &[M::State], eta: f64) -> f64 {
    let mean = forecast.iter().map(|x| model.obs_variance(x)).sum::<f64>() / forecast.len() as f64;
    mean.max(eta)
}

/// `H x_i` with their sample mean and variance, and `V`, in one pass.
struct ObsMoments {
    hx: Vec<f64>,
    mean: f64,
    var: f64,
    v: f64,
}

fn obs_moments<M: EnsembleModel>(model: &M, members: &[M::State], eta: f64) -> ObsMoments {
    let n = members.len() as f64;
    let mut hx = Vec::with_capacity(members.len());
    let (mut sum_h, mut sum_var) = (0.0, 0.0);
    for x in members {
        let h = model.obs_mean(x);
        hx.push(h);
        sum_h += h;
        sum_var += model.obs_variance(x);
    }
    let mean = sum_h / n;
    let var = hx.iter().map(|h| (h - mean) * (h - mean)).sum::<f64>() / (n - 1.0);
    ObsMoments {
        hx,
        mean,
        var,
        v: (sum_var / n).max(eta),
    }
}

/// `K = cov(x, H x) / (var(H x) + V)`, one entry per state coordinate, with
/// sample moments normalized by `N_x - 1`.
pub fn kalman_gain<M: EnsembleModel>(model: &M, forecast: &[M::State], v: f64) -> Vec<f64> {
    let m = obs_moments(model, forecast, 0.0);
    gain_from(model, forecast, &m.hx, m.mean, m.var, v)
}

fn gain_from<M: EnsembleModel>(
    model: &M,
    forecast: &[M::State],
    hx: &[f64],
    mean_h: f64,
    var_h: f64,
    v: f64,
) -> Vec<f64> {
    // The deviations of H x sum to zero, so centring x on any member instead
    // of the ensemble mean gives the same covariance in one pass.
    let x0 = &forecast[0];
    let mut cov = vec![0.0; M::DIM];
    for (x, h) in forecast.iter().zip(hx) {
        let d = h - mean_h;
        for (k, c) in cov.iter_mut().enumerate() {
            *c += (model.coord(x, k) - model.coord(x0, k)) * d;
        }
    }
    let scale = 1.0 / ((forecast.len() as f64 - 1.0) * (var_h + v));
    cov.iter_mut().for_each(|c| *c *= scale);
    cov
}

/// `x_i += K (y + v_i - H x_i)` with `v_i ~ N(0, V)` drawn per member.
pub fn analysis_update<M: EnsembleModel>(
    model: &M,
    members: &mut [M::State],
    y: f64,
    gain: &[f64],
    v: f64,
    rng: &mut StreamRng,
) {
    let sd = v.sqrt();
    for x in members.iter_mut() {
        let noise: f64 = rng.sample(StandardNormal);
        let innovation = y + sd * noise - model.obs_mean(x);
        model.shift(x, gain, innovation);
    }
}

fn check_size(n: usize) -> Result<()> {
    if n <= 4 {
        return Err(Error::Precondition(format!(
            "ensemble size must exceed 4 for scalar observations, got {n}"
        )));
    }
    Ok(())
}

/// One forecast, likelihood and analysis cycle. A log-zero increment is
/// returned as a value.
pub fn enkf_step<M: EnsembleModel>(
    model: &M,
    members: &[M::State],
    y: f64,
    opts: &EnkfOptions,
    rng: &mut StreamRng,
) -> Result<FilterStep<M::State>> {
    check_size(members.len())?;
    let scorer = ScalarUnbiased::new(members.len())?;
    step_with(model, members, y, opts, &scorer, rng)
}

fn step_with<M: EnsembleModel>(
    model: &M,
    members: &[M::State],
    y: f64,
    opts: &EnkfOptions,
    scorer: &ScalarUnbiased,
    rng: &mut StreamRng,
) -> Result<FilterStep<M::State>> {
    let mut forecast = forecast_ensemble(model, members, rng)?;
    let ObsMoments {
        hx,
        mean: mean_h,
        var: var_h,
        v,
    } = obs_moments(model, &forecast, opts.eta);
    let incr_loglik = match opts.likelihood {
        LikelihoodKind::Unbiased => scorer.logpdf(y, mean_h, var_h + v),
        LikelihoodKind::Plugin => standard_gaussian_logpdf_scalar(y, mean_h, var_h + v)?,
    };
    let gain = gain_from(model, &forecast, &hx, mean_h, var_h, v);
    analysis_update(model, &mut forecast, y, &gain, v, rng);
    Ok(FilterStep {
        analysis: forecast,
        incr_loglik,
        forecast_mean_obs: mean_h,
        forecast_var_obs: var_h,
        v,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceRetention {
    #[default]
    Full,
    LastOnly,
}

/// Output of [`enkf_filter`]. `trace[0]` is the initial ensemble when the
/// full trace is kept.
#[derive(Clone, Debug)]
pub struct EnkfRun<S> {
    pub trace: Vec<Vec<S>>,
    pub increments: Vec<f64>,
    pub loglik: f64,
}

/// Runs the filter over `obs`. The initial ensemble uses `stream.child(0)` and
/// step `t` (1-based) uses `stream.child(t)`.
pub fn enkf_filter<M: EnsembleModel>(
    model: &M,
    obs: &[f64],
    n_x: usize,
    opts: &EnkfOptions,
    stream: RngStream,
    retention: TraceRetention,
) -> Result<EnkfRun<M::State>> {
    if obs.is_empty() {
        return Err(Error::Precondition("filter needs at least one observation".into()));
    }
    check_size(n_x)?;
    let mut rng = stream.child(0).rng();
    let mut members: Vec<M::State> = (0..n_x).map(|_| model.sample_initial(&mut rng)).collect();
    let scorer = ScalarUnbiased::new(n_x)?;
    let mut trace = Vec::new();
    if retention == TraceRetention::Full {
        trace.push(members.clone());
    }
    let mut increments = Vec::with_capacity(obs.len());
    for (t, &y) in obs.iter().enumerate() {
        let mut rng = stream.child(t as u64 + 1).rng();
        let step = step_with(model, &members, y, opts, &scorer, &mut rng)?;
        increments.push(step.incr_loglik);
        members = step.analysis;
        if retention == TraceRetention::Full {
            trace.push(members.clone());
        }
    }
    if retention == TraceRetention::LastOnly {
        trace.push(members);
    }
    let loglik = total(&increments);
    Ok(EnkfRun {
        trace,
        increments,
        loglik,
    })
}

/// Sum of increments, log-zero if any increment is.
pub(crate) fn total(increments: &[f64]) -> f64 {
    if increments.iter().any(|&v| v == LOG_ZERO) {
        LOG_ZERO
    } else {
        increments.iter().sum()
    }
}
