//! State bands with parameter uncertainty, posterior-predictive forecasts and
//! accuracy metrics.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enkf::EnkfOptions;
use crate::error::{Error, Result};
use crate::model::{
    effective_reproduction, obs_sample, transition, LatentState, ModelConfig, ParamVector,
};
use crate::smc2::{Engine, InnerFilterHandle, Problem};
use crate::stochastic::{normalize_log_weights, purpose, stratified_resample_n, RngStream};
use crate::summary::WeightedEcdf;

/// Central credible levels of the reported bands, innermost first.
pub const BAND_LEVELS: [f64; 4] = [0.5, 0.75, 0.9, 0.95];

pub const DEFAULT_DRAWS: usize = 100;
pub const DEFAULT_HORIZON: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    S,
    E,
    I,
    R,
    Z,
    Beta,
    /// Expected reported incidence `rho Z`.
    Incidence,
    Reff,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::S,
        Quantity::E,
        Quantity::I,
        Quantity::R,
        Quantity::Z,
        Quantity::Beta,
        Quantity::Incidence,
        Quantity::Reff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::S => "S",
            Quantity::E => "E",
            Quantity::I => "I",
            Quantity::R => "R",
            Quantity::Z => "Z",
            Quantity::Beta => "beta",
            Quantity::Incidence => "incidence",
            Quantity::Reff => "R_eff",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown quantity '{s}'")))
    }

    pub fn eval(self, x: &LatentState, theta: &ParamVector, cfg: &ModelConfig) -> f64 {
        match self {
            Quantity::S => x.s,
            Quantity::E => x.e,
            Quantity::I => x.i,
            Quantity::R => x.r,
            Quantity::Z => x.z,
            Quantity::Beta => x.beta(),
            Quantity::Incidence => cfg.rho * x.z,
            Quantity::Reff => effective_reproduction(x, theta, cfg.population),
        }
    }
}

/// Mean, median and central bands at [`BAND_LEVELS`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub mean: f64,
    pub median: f64,
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Bands {
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        let ecdf = WeightedEcdf::new(values, weights)?;
        let total: f64 = weights.iter().sum();
        let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
        let mut lower = [0.0; 4];
        let mut upper = [0.0; 4];
        for (k, level) in BAND_LEVELS.iter().enumerate() {
            lower[k] = ecdf.quantile(0.5 - level / 2.0);
            upper[k] = ecdf.quantile(0.5 + level / 2.0);
        }
        Ok(Self {
            mean,
            median: ecdf.quantile(0.5),
            lower,
            upper,
        })
    }

    /// Every band contains the next-narrower one and the median.
    pub fn is_nested(&self) -> bool {
        let ok_inner = self.lower[0] <= self.median && self.median <= self.upper[0];
        ok_inner
            && (1..4).all(|k| self.lower[k] <= self.lower[k - 1] && self.upper[k - 1] <= self.upper[k])
    }

    pub fn band(&self, level: f64) -> Option<(f64, f64)> {
        BAND_LEVELS
            .iter()
            .position(|l| (l - level).abs() < 1e-12)
            .map(|k| (self.lower[k], self.upper[k]))
    }

    pub fn contains(&self, level: f64, y: f64) -> bool {
        self.band(level).is_some_and(|(lo, hi)| lo <= y && y <= hi)
    }
}

/// A filtered state together with the parameter that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledState {
    pub theta: ParamVector,
    pub state: LatentState,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct StatePosterior {
    /// `bands[t - 1][k]` summarizes `Quantity::ALL[k]` at time `t`.
    pub bands: Vec<Vec<Bands>>,
    /// Trajectories pooled at each time.
    pub pooled_counts: Vec<usize>,
    /// Filtered `(theta, x_T)` pairs at the last time, weights summing to 1.
    pub final_states: Vec<PooledState>,
    pub warnings: Vec<String>,
}

impl StatePosterior {
    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn series(&self, q: Quantity) -> Vec<&Bands> {
        let k = Quantity::ALL.iter().position(|&x| x == q).expect("listed quantity");
        self.bands.iter().map(|row| &row[k]).collect()
    }

    pub fn mean_series(&self, q: Quantity) -> Vec<f64> {
        self.series(q).into_iter().map(|b| b.mean).collect()
    }
}

#[derive(Clone, Debug)]
pub struct MarginalOptions {
    pub draws: usize,
    pub n_x: usize,
    pub engine: Engine,
    pub enkf: EnkfOptions,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        Self {
            draws: DEFAULT_DRAWS,
            n_x: 100,
            engine: Engine::Enkf,
            enkf: EnkfOptions::default(),
        }
    }
}

/// Filtered states per time step for one parameter draw, or `None` when the
/// filter died.
fn filtered_trace(
    problem: &Problem,
    theta: ParamVector,
    obs: &[f64],
    opts: &MarginalOptions,
    stream: RngStream,
) -> Result<Option<Vec<(Vec<LatentState>, Vec<f64>)>>> {
    let model = problem.model(theta);
    let mut handle = InnerFilterHandle::new(opts.engine, &model, opts.n_x, stream);
    let mut trace = Vec::with_capacity(obs.len());
    for (i, &y) in obs.iter().enumerate() {
        handle.step(&model, y, i + 1, &opts.enkf)?;
        let (states, weights) = handle.weighted_states();
        if states.is_empty() {
            return Ok(None);
        }
        trace.push((states, weights));
    }
    Ok(Some(trace))
}

/// Filtered state bands integrated over the weighted parameter population
/// `(thetas, log_weights)`: `opts.draws` stratified draws, one fresh filter
/// per draw, pooled with equal weight per draw.
pub fn marginal_state_posterior(
    obs: &[f64],
    problem: &Problem,
    thetas: &[ParamVector],
    log_weights: &[f64],
    opts: &MarginalOptions,
    seed: u64,
) -> Result<StatePosterior> {
    if thetas.len() != log_weights.len() || thetas.is_empty() {
        return Err(Error::Domain(format!(
            "{} parameters with {} weights",
            thetas.len(),
            log_weights.len()
        )));
    }
    if opts.draws == 0 {
        return Err(Error::Domain("need at least one parameter draw".into()));
    }
    let w = normalize_log_weights(log_weights)?;
    let root = RngStream::new(seed).child(purpose::MARGINAL);
    let mut warnings = Vec::new();
    let support: HashSet<[u64; 5]> = thetas
        .iter()
        .zip(w.as_slice())
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(th, _)| [th.beta0, th.alpha, th.gamma, th.nu_beta, th.phi].map(f64::to_bits))
        .collect();
    if opts.draws > support.len() {
        warnings.push(format!(
            "{} draws from {} distinct parameter values; draws repeat",
            opts.draws,
            support.len()
        ));
    }
    let picks = stratified_resample_n(&w, opts.draws, &mut root.child(0).rng());

    let traces: Vec<Option<Vec<(Vec<LatentState>, Vec<f64>)>>> = picks
        .par_iter()
        .enumerate()
        .map(|(c, &k)| filtered_trace(problem, thetas[k], obs, opts, root.derive(&[1, c as u64])))
        .collect::<Result<_>>()?;
    let alive: Vec<(ParamVector, &Vec<(Vec<LatentState>, Vec<f64>)>)> = picks
        .iter()
        .zip(&traces)
        .filter_map(|(&k, tr)| tr.as_ref().map(|tr| (thetas[k], tr)))
        .collect();
    let dead = opts.draws - alive.len();
    if dead > 0 {
        warnings.push(format!("{dead} of {} filters had zero likelihood and were dropped", opts.draws));
    }
    if alive.is_empty() {
        return Err(Error::DegenerateWeights("every conditional filter had zero likelihood".into()));
    }

    let draw_weight = 1.0 / alive.len() as f64;
    let mut bands = Vec::with_capacity(obs.len());
    let mut pooled_counts = Vec::with_capacity(obs.len());
    let mut final_states = Vec::new();
    for t in 0..obs.len() {
        let mut pooled: Vec<PooledState> = Vec::new();
        for (theta, tr) in &alive {
            let (states, weights) = &tr[t];
            pooled.extend(states.iter().zip(weights).map(|(x, wi)| PooledState {
                theta: *theta,
                state: *x,
                weight: wi * draw_weight,
            }));
        }
        let weights: Vec<f64> = pooled.iter().map(|p| p.weight).collect();
        let row = Quantity::ALL
            .iter()
            .map(|q| {
                let values: Vec<f64> = pooled
                    .iter()
                    .map(|p| q.eval(&p.state, &p.theta, &problem.cfg))
                    .collect();
                Bands::from_weighted(&values, &weights)
            })
            .collect::<Result<Vec<_>>>()?;
        bands.push(row);
        pooled_counts.push(pooled.len());
        if t + 1 == obs.len() {
            final_states = pooled;
        }
    }
    Ok(StatePosterior {
        bands,
        pooled_counts,
        final_states,
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct ForecastOptions {
    pub horizon: usize,
    /// Keep the random walk on `log beta` instead of freezing it.
    pub diffusive_beta: bool,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            diffusive_beta: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForecastFan {
    /// 1, 2, ..., horizon.
    pub horizons: Vec<usize>,
    /// Posterior-predictive bands of the observed count.
    pub observations: Vec<Bands>,
    /// `states[h - 1][k]` summarizes `Quantity::ALL[k]` at horizon `h`.
    pub states: Vec<Vec<Bands>>,
}

/// Propagates every pooled `(theta, x_T)` pair `opts.horizon` intervals ahead
/// and samples one observation per interval.
pub fn forecast(
    start: &[PooledState],
    cfg: &ModelConfig,
    opts: &ForecastOptions,
    seed: u64,
) -> Result<ForecastFan> {
    if opts.horizon == 0 {
        return Err(Error::Domain("forecast horizon must be at least 1".into()));
    }
    if start.is_empty() {
        return Err(Error::Domain("no states to forecast from".into()));
    }
    let root = RngStream::new(seed).child(purpose::FORECAST);
    // paths[i][h] = (state, observation) at horizon h + 1.
    let paths: Vec<Vec<(LatentState, f64)>> = start
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut theta = p.theta;
            if !opts.diffusive_beta {
                theta.nu_beta = 0.0;
            }
            let mut rng = root.child(i as u64).rng();
            let mut x = p.state;
            let mut path = Vec::with_capacity(opts.horizon);
            for _ in 0..opts.horizon {
                x = transition(&x, &theta, cfg, &mut rng)?;
                let y = obs_sample(&x, &theta, cfg, &mut rng);
                path.push((x, y));
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;

    let weights: Vec<f64> = start.iter().map(|p| p.weight).collect();
    let mut observations = Vec::with_capacity(opts.horizon);
    let mut states = Vec::with_capacity(opts.horizon);
    for h in 0..opts.horizon {
        let ys: Vec<f64> = paths.iter().map(|p| p[h].1).collect();
        observations.push(Bands::from_weighted(&ys, &weights)?);
        let row = Quantity::ALL
            .iter()
            .map(|q| {
                let values: Vec<f64> = paths
                    .iter()
                    .zip(start)
                    .map(|(path, s)| q.eval(&path[h].0, &s.theta, cfg))
                    .collect();
                Bands::from_weighted(&values, &weights)
            })
            .collect::<Result<Vec<_>>>()?;
        states.push(row);
    }
    Ok(ForecastFan {
        horizons: (1..=opts.horizon).collect(),
        observations,
        states,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
}

pub fn metrics(estimate: &[f64], truth: &[f64]) -> Result<Metrics> {
    if estimate.len() != truth.len() {
        return Err(Error::Domain(format!(
            "estimate has {} points, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Domain("cannot score empty series".into()));
    }
    let n = truth.len() as f64;
    let (abs, sq) = estimate
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(a, s), (e, t)| (a + (e - t).abs(), s + (e - t).powi(2)));
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
    })
}

/// Fraction of `truth` inside `[lower, upper]` pointwise.
pub fn coverage(lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<f64> {
    if lower.len() != truth.len() || upper.len() != truth.len() {
        return Err(Error::Domain("band and truth lengths differ".into()));
    }
    if truth.is_empty() {
        return Err(Error::Domain("cannot score empty series".into()));
    }
    let hits = truth
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(&y, (&lo, &hi))| lo <= y && y <= hi)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}
