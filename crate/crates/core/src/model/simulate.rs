use serde::{Deserialize, Serialize};

use super::dynamics::{euler_substep, CONSERVATION_TOL};
use super::{obs_sample, LatentState, ModelConfig, ParamVector};
use crate::error::{Error, Result};
use crate::stochastic::StreamRng;

/// Ground-truth path `x_0..x_T` and observations `y_1..y_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedEpidemic {
    pub states: Vec<LatentState>,
    pub observations: Vec<f64>,
}

impl SimulatedEpidemic {
    /// True reported incidence `rho * Z_t` for `t = 1..T`.
    pub fn true_incidence(&self, rho: f64) -> Vec<f64> {
        self.states[1..].iter().map(|x| rho * x.z).collect()
    }
}

fn schedule_value(schedule: &dyn Fn(f64) -> f64, t: f64) -> Result<f64> {
    let beta = schedule(t);
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Domain(format!(
            "transmission schedule gave {beta} at t = {t}"
        )));
    }
    Ok(beta)
}

// A zero rate has no logarithm; store the smallest positive one so the state
// stays valid while the dynamics see exactly zero.
fn log_rate(beta: f64) -> f64 {
    beta.max(f64::MIN_POSITIVE).ln()
}

/// Simulates `days` reporting intervals with `beta` forced to `schedule(t)`
/// (no diffusion), drawing one observation per interval.
pub fn simulate_epidemic(
    cfg: &ModelConfig,
    theta: &ParamVector,
    init: &LatentState,
    schedule: &dyn Fn(f64) -> f64,
    days: usize,
    rng: &mut StreamRng,
) -> Result<SimulatedEpidemic> {
    cfg.validate()?;
    init.validate()?;
    if days == 0 {
        return Err(Error::Domain("simulation needs at least one interval".into()));
    }
    let h = cfg.dt / cfg.n_substeps as f64;
    let mut x = *init;
    x.z = 0.0;
    x.log_beta = log_rate(schedule_value(schedule, 0.0)?);
    let mut states = Vec::with_capacity(days + 1);
    let mut observations = Vec::with_capacity(days);
    states.push(x);
    for day in 0..days {
        let start = day as f64 * cfg.dt;
        x.z = 0.0;
        for k in 0..cfg.n_substeps {
            let beta = schedule_value(schedule, start + k as f64 * h)?;
            let incidence = euler_substep(&mut x, beta, theta, cfg.population, h)?;
            x.z += incidence;
        }
        let end = (day + 1) as f64 * cfg.dt;
        x.log_beta = log_rate(schedule_value(schedule, end)?);
        if (x.population() - cfg.population).abs() > CONSERVATION_TOL * cfg.population {
            return Err(Error::Numerical(format!("conservation lost at day {}", day + 1)));
        }
        observations.push(obs_sample(&x, theta, cfg, rng));
        states.push(x);
    }
    Ok(SimulatedEpidemic {
        states,
        observations,
    })
}
