use rand::Rng;
use rand_distr::StandardNormal;

use super::{LatentState, ModelConfig, ParamVector};
use crate::error::{Error, Result};
use crate::stochastic::StreamRng;

/// Relative tolerance on `S + E + I + R = N` after every transition.
pub(crate) const CONSERVATION_TOL: f64 = 1e-6;

/// One forward-Euler sub-step of length `h` at transmission rate `beta`.
/// Returns the incidence accrued over the sub-step.
///
/// Compartments that overshoot below zero are clamped and the four
/// compartments are rescaled to sum to `population`.
pub(crate) fn euler_substep(
    x: &mut LatentState,
    beta: f64,
    theta: &ParamVector,
    population: f64,
    h: f64,
) -> Result<f64> {
    let infection = beta * x.s * x.i / population;
    let onset = theta.alpha * x.e;
    let recovery = theta.gamma * x.i;

    let s = (x.s - h * infection).max(0.0);
    let e = (x.e + h * (infection - onset)).max(0.0);
    let i = (x.i + h * (onset - recovery)).max(0.0);
    let r = (x.r + h * recovery).max(0.0);

    let total = s + e + i + r;
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical(format!(
            "compartment total {total} after Euler step"
        )));
    }
    let scale = population / total;
    x.s = s * scale;
    x.e = e * scale;
    x.i = i * scale;
    x.r = r * scale;
    Ok(h * onset)
}

fn check_conservation(x: &LatentState, population: f64) -> Result<()> {
    let drift = (x.population() - population).abs();
    if drift > CONSERVATION_TOL * population || x.validate().is_err() {
        return Err(Error::Numerical(format!(
            "transition broke state invariants (|sum - N| = {drift}): {x:?}"
        )));
    }
    Ok(())
}

fn advance(
    state: &LatentState,
    theta: &ParamVector,
    cfg: &ModelConfig,
    mut log_beta_increment: impl FnMut() -> f64,
) -> Result<LatentState> {
    state.validate()?;
    let h = cfg.dt / cfg.n_substeps as f64;
    let mut x = *state;
    x.z = 0.0;
    for _ in 0..cfg.n_substeps {
        let beta = x.log_beta.exp();
        let incidence = euler_substep(&mut x, beta, theta, cfg.population, h)?;
        x.z += incidence;
        x.log_beta += log_beta_increment();
    }
    check_conservation(&x, cfg.population)?;
    Ok(x)
}

/// Propagates the latent state over one reporting interval.
///
/// `log beta` gets one Gaussian increment per sub-step with standard deviation
/// `nu_beta * sqrt(dt / n_substeps)`, so the interval variance is
/// `nu_beta^2 * dt` for any sub-step count.
pub fn transition(
    state: &LatentState,
    theta: &ParamVector,
    cfg: &ModelConfig,
    rng: &mut StreamRng,
) -> Result<LatentState> {
    if theta.nu_beta == 0.0 {
        return advance(state, theta, cfg, || 0.0);
    }
    let sd = theta.nu_beta * (cfg.dt / cfg.n_substeps as f64).sqrt();
    advance(state, theta, cfg, || {
        let z: f64 = rng.sample(StandardNormal);
        sd * z
    })
}

/// Deterministic transition with `log beta` held fixed.
pub fn transition_frozen_beta(
    state: &LatentState,
    theta: &ParamVector,
    cfg: &ModelConfig,
) -> Result<LatentState> {
    advance(state, theta, cfg, || 0.0)
}

/// `beta * S / (gamma * N)`.
pub fn effective_reproduction(state: &LatentState, theta: &ParamVector, population: f64) -> f64 {
    state.beta() * state.s / (theta.gamma * population)
}
