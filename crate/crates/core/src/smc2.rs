//! SMC over parameter particles with an inner likelihood filter per particle.
//!
//! With [`Engine::Bpf`] the inner filter is a bootstrap particle filter and
//! the sampler is standard SMC²; with [`Engine::Enkf`] it is the ensemble
//! Kalman filter. Everything else, including resampling and the PMMH
//! rejuvenation kernel, is shared.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpf::{bpf_step, ParticleCloud};
use crate::enkf::{self, EnkfOptions};
use crate::error::{Error, Result};
use crate::model::{InitialStateSpec, LatentState, ModelConfig, Param, ParamVector};
use crate::ssm::{SeirModel, StateSpaceModel};
use crate::stochastic::{
    ess, log_prior_density, normalize_log_weights, purpose, sample_prior, stratified_resample,
    PriorSpec, RngStream, WeightVector,
};
use crate::summary::{weighted_mean_sd, WeightedEcdf, SUMMARY_LEVELS};
use crate::LOG_ZERO;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    Enkf,
    Bpf,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Enkf => "enkf",
            Engine::Bpf => "bpf",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enkf" => Ok(Engine::Enkf),
            "bpf" => Ok(Engine::Bpf),
            other => Err(Error::Config(format!(
                "unknown engine '{other}' (expected enkf or bpf)"
            ))),
        }
    }
}

/// Model, prior and initial-state distribution being fitted.
#[derive(Clone, Debug)]
pub struct Problem {
    pub cfg: ModelConfig,
    pub prior: PriorSpec,
    pub init: InitialStateSpec,
}

impl Problem {
    pub fn model(&self, theta: ParamVector) -> SeirModel<'_> {
        SeirModel::new(theta, &self.cfg, &self.init)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.prior.validate()?;
        self.init.validate()?;
        if self.prior.marginals.is_empty() {
            return Err(Error::Config("no free parameters to infer".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smc2Config {
    pub engine: Engine,
    pub n_theta: usize,
    pub n_x: usize,
    /// PMMH moves per rejuvenation.
    pub moves: usize,
    /// Rejuvenate when ESS falls below this; `None` means `n_theta / 2`.
    pub ess_threshold: Option<f64>,
    /// Multiplier `c` of the proposal covariance.
    pub proposal_scale: f64,
    pub enkf: EnkfOptions,
    /// Times at which the full weighted parameter population is kept.
    pub checkpoints: Vec<usize>,
}

impl Default for Smc2Config {
    fn default() -> Self {
        Self {
            engine: Engine::Enkf,
            n_theta: 300,
            n_x: 100,
            moves: 5,
            ess_threshold: None,
            proposal_scale: 1.0,
            enkf: EnkfOptions::default(),
            checkpoints: Vec::new(),
        }
    }
}

impl Smc2Config {
    pub fn threshold(&self) -> f64 {
        self.ess_threshold.unwrap_or(self.n_theta as f64 / 2.0)
    }

    /// The `2.38^2 / d` scaling for `d` free parameters.
    pub fn optimal_scale(d: usize) -> f64 {
        2.38 * 2.38 / d as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 2 {
            return Err(Error::Config(format!("ntheta must be at least 2, got {}", self.n_theta)));
        }
        match self.engine {
            Engine::Enkf if self.n_x <= 4 => {
                return Err(Error::Config(format!(
                    "nx must exceed 4 for the ensemble filter, got {}",
                    self.n_x
                )))
            }
            Engine::Bpf if self.n_x == 0 => {
                return Err(Error::Config("nx must be at least 1".into()))
            }
            _ => {}
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::Config(format!(
                "proposal scale must be positive, got {}",
                self.proposal_scale
            )));
        }
        if let Some(th) = self.ess_threshold {
            if !(th >= 0.0 && th.is_finite()) {
                return Err(Error::Config(format!("invalid ESS threshold {th}")));
            }
        }
        self.enkf.validate()
    }
}

#[derive(Clone, Debug)]
pub enum FilterState {
    Ensemble(Vec<LatentState>),
    Cloud(ParticleCloud<LatentState>),
    /// The likelihood is zero: an increment was log-zero, the filter
    /// collapsed, or it produced an invalid state.
    Dead,
}

/// Persistent inner filter of one parameter particle.
#[derive(Clone, Debug)]
pub struct InnerFilterHandle {
    pub engine: Engine,
    pub state: FilterState,
    pub cum_loglik: f64,
    /// Every increment assimilated so far; `cum_loglik` is their sum.
    pub increments: Vec<f64>,
    pub n_x: usize,
    pub stream: RngStream,
}

impl InnerFilterHandle {
    pub fn new<M: StateSpaceModel<State = LatentState>>(
        engine: Engine,
        model: &M,
        n_x: usize,
        stream: RngStream,
    ) -> Self {
        let mut rng = stream.child(0).rng();
        let state = match engine {
            Engine::Enkf => {
                FilterState::Ensemble((0..n_x).map(|_| model.sample_initial(&mut rng)).collect())
            }
            Engine::Bpf => FilterState::Cloud(ParticleCloud::initial(model, n_x, &mut rng)),
        };
        Self {
            engine,
            state,
            cum_loglik: 0.0,
            increments: Vec::new(),
            n_x,
            stream,
        }
    }

    /// Assimilates `y` as observation number `t` (1-based). Filter failures
    /// caused by the parameter value turn into a log-zero increment.
    pub fn step(
        &mut self,
        model: &SeirModel<'_>,
        y: f64,
        t: usize,
        opts: &EnkfOptions,
    ) -> Result<f64> {
        let mut rng = self.stream.child(t as u64).rng();
        let outcome = match &self.state {
            FilterState::Dead => Ok(None),
            FilterState::Ensemble(members) => {
                enkf::enkf_step(model, members, y, opts, &mut rng).map(|s| {
                    Some((FilterState::Ensemble(s.analysis), s.incr_loglik))
                })
            }
            FilterState::Cloud(cloud) => {
                bpf_step(model, cloud, y, t, &mut rng).map(|(c, incr)| Some((FilterState::Cloud(c), incr)))
            }
        };
        let incr = match outcome {
            // A zero increment zeroes the particle for good; stop filtering it.
            Ok(Some((_, incr))) if incr == LOG_ZERO => {
                self.state = FilterState::Dead;
                incr
            }
            Ok(Some((state, incr))) => {
                self.state = state;
                incr
            }
            Ok(None) => LOG_ZERO,
            Err(
                Error::InvalidState(_) | Error::Numerical(_) | Error::ParticleCollapse { .. },
            ) => {
                self.state = FilterState::Dead;
                LOG_ZERO
            }
            Err(e) => return Err(e),
        };
        self.increments.push(incr);
        self.cum_loglik += incr;
        Ok(incr)
    }

    /// Latent states with their normalized weights, empty for a dead filter.
    pub fn weighted_states(&self) -> (Vec<LatentState>, Vec<f64>) {
        match &self.state {
            FilterState::Ensemble(m) => (m.clone(), vec![1.0 / m.len() as f64; m.len()]),
            FilterState::Cloud(c) => match normalize_log_weights(&c.log_weights) {
                Ok(w) => (c.particles.clone(), w.as_slice().to_vec()),
                Err(_) => (Vec::new(), Vec::new()),
            },
            FilterState::Dead => (Vec::new(), Vec::new()),
        }
    }
}

/// Runs a fresh inner filter over `obs`.
pub fn run_inner_filter(
    problem: &Problem,
    theta: ParamVector,
    obs: &[f64],
    engine: Engine,
    n_x: usize,
    opts: &EnkfOptions,
    stream: RngStream,
) -> Result<InnerFilterHandle> {
    let model = problem.model(theta);
    let mut handle = InnerFilterHandle::new(engine, &model, n_x, stream);
    for (i, &y) in obs.iter().enumerate() {
        handle.step(&model, y, i + 1, opts)?;
    }
    Ok(handle)
}

#[derive(Clone, Debug)]
pub struct ThetaParticle {
    pub theta: ParamVector,
    /// Normalized log-weight.
    pub log_weight: f64,
    pub filter: InnerFilterHandle,
}

/// Independent multivariate normal proposal over the free parameters.
#[derive(Clone, Debug)]
pub struct ProposalSpec {
    pub mean: DVector<f64>,
    /// Scaled covariance including the diagonal jitter.
    pub cov: DMatrix<f64>,
    pub c: f64,
    chol: Cholesky<f64, Dyn>,
    logdet: f64,
}

impl ProposalSpec {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + self.chol.l() * z).iter().copied().collect()
    }

    pub fn logpdf(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self
            .chol
            .l()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor is invertible");
        -0.5 * (self.dim() as f64 * (2.0 * std::f64::consts::PI).ln() + self.logdet + z.norm_squared())
    }
}

/// Weighted mean and `c`-scaled weighted covariance (divide-by-sum) of
/// `points`, with `1e-10 * trace` added to the diagonal.
pub fn build_proposal(points: &[Vec<f64>], weights: &[f64], c: f64) -> Result<ProposalSpec> {
    let d = points.first().map_or(0, Vec::len);
    if points.len() < 2 || d == 0 {
        return Err(Error::SingularProposal(
            "need at least two particles with free parameters".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::<f64>::zeros(d);
    for (p, w) in points.iter().zip(weights) {
        mean += DVector::from_column_slice(p) * (w / total);
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (p, w) in points.iter().zip(weights) {
        let diff = DVector::from_column_slice(p) - &mean;
        cov += &diff * diff.transpose() * (w / total);
    }
    cov *= c;
    let trace = cov.trace();
    if !(trace > 0.0 && trace.is_finite()) {
        return Err(Error::SingularProposal(
            "parameter particles have zero spread; increase ntheta".into(),
        ));
    }
    for i in 0..d {
        cov[(i, i)] += 1e-10 * trace;
    }
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        Error::SingularProposal("proposal covariance is singular; increase ntheta".into())
    })?;
    let logdet = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    Ok(ProposalSpec {
        mean,
        cov,
        c,
        chol,
        logdet,
    })
}

/// `log` of the PMMH acceptance ratio for an independent proposal.
pub fn acceptance_log_ratio(
    loglik_new: f64,
    log_prior_new: f64,
    log_q_new: f64,
    loglik_old: f64,
    log_prior_old: f64,
    log_q_old: f64,
) -> f64 {
    if loglik_new == LOG_ZERO || log_prior_new == LOG_ZERO {
        return LOG_ZERO;
    }
    (loglik_new + log_prior_new + log_q_old) - (loglik_old + log_prior_old + log_q_new)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub param: Param,
    pub mean: f64,
    pub sd: f64,
    /// Quantiles at [`SUMMARY_LEVELS`].
    pub quantiles: [f64; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub t: usize,
    pub params: Vec<ParamSummary>,
}

/// Weighted mean, sd and quantiles of each free parameter.
pub fn posterior_summary(particles: &[ThetaParticle], prior: &PriorSpec) -> Result<Vec<ParamSummary>> {
    let weights = normalize_log_weights(
        &particles.iter().map(|p| p.log_weight).collect::<Vec<_>>(),
    )?;
    prior
        .free_params()
        .into_iter()
        .map(|param| {
            let values: Vec<f64> = particles.iter().map(|p| p.theta.get(param)).collect();
            summarize(param, &values, weights.as_slice())
        })
        .collect()
}

pub fn summarize(param: Param, values: &[f64], weights: &[f64]) -> Result<ParamSummary> {
    let (mean, sd) = weighted_mean_sd(values, weights);
    let ecdf = WeightedEcdf::new(values, weights)?;
    Ok(ParamSummary {
        param,
        mean,
        sd,
        quantiles: SUMMARY_LEVELS.map(|p| ecdf.quantile(p)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Init,
    Assimilate(usize),
    Resample(usize),
    Rejuvenate(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// ESS after assimilating each observation, before any resampling.
    pub ess: Vec<f64>,
    pub rejuvenated: Vec<bool>,
    /// Acceptance rate of each rejuvenation, in order.
    pub acceptance: Vec<f64>,
    pub step_seconds: Vec<f64>,
    pub total_seconds: f64,
    /// Inner filters that produced invalid states or collapsed.
    pub filter_failures: usize,
    pub events: Vec<Event>,
}

impl RunDiagnostics {
    pub fn rejuvenation_times(&self) -> Vec<usize> {
        self.rejuvenated
            .iter()
            .enumerate()
            .filter(|(_, r)| **r)
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn mean_acceptance(&self) -> Option<f64> {
        if self.acceptance.is_empty() {
            None
        } else {
            Some(self.acceptance.iter().sum::<f64>() / self.acceptance.len() as f64)
        }
    }
}

/// Full weighted parameter population at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub thetas: Vec<ParamVector>,
    pub log_weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Smc2Output {
    pub particles: Vec<ThetaParticle>,
    pub history: Vec<StepSummary>,
    pub diagnostics: RunDiagnostics,
    pub checkpoints: Vec<Checkpoint>,
}

/// A run stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct Smc2Abort {
    pub error: Error,
    pub history: Vec<StepSummary>,
    pub diagnostics: RunDiagnostics,
}

impl fmt::Display for Smc2Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run aborted after {} steps: {}",
            self.history.len(),
            self.error
        )
    }
}

impl std::error::Error for Smc2Abort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Adds one inner-filter increment to every particle's weight and
/// renormalizes. Returns the normalized weights.
pub fn assimilate(
    problem: &Problem,
    particles: &mut [ThetaParticle],
    y: f64,
    t: usize,
    opts: &EnkfOptions,
) -> Result<Vec<f64>> {
    let increments = particles
        .par_iter_mut()
        .map(|p| {
            let model = problem.model(p.theta);
            p.filter.step(&model, y, t, opts)
        })
        .collect::<Result<Vec<f64>>>()?;
    apply_increments(particles, &increments, t)
}

/// `log w_m += incr_m`, then normalizes in log space.
pub fn apply_increments(particles: &mut [ThetaParticle], increments: &[f64], t: usize) -> Result<Vec<f64>> {
    for (p, incr) in particles.iter_mut().zip(increments) {
        p.log_weight += incr;
    }
    let log_weights: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    let weights = normalize_log_weights(&log_weights).map_err(|_| Error::DegeneratePopulation {
        t,
        detail: "every parameter particle has zero likelihood".into(),
    })?;
    for (p, w) in particles.iter_mut().zip(weights.as_slice()) {
        p.log_weight = w.ln();
    }
    Ok(weights.as_slice().to_vec())
}

/// Applies `moves` PMMH steps to each particle, rerunning the inner filter
/// over `obs` for every proposal. Returns the acceptance rate.
#[allow(clippy::too_many_arguments)]
pub fn pmmh_rejuvenate(
    problem: &Problem,
    particles: &mut [ThetaParticle],
    obs: &[f64],
    proposal: &ProposalSpec,
    moves: usize,
    config: &Smc2Config,
    stream: RngStream,
) -> Result<f64> {
    let prior = &problem.prior;
    let accepted = particles
        .par_iter_mut()
        .enumerate()
        .map(|(m, p)| -> Result<usize> {
            let mut accepted = 0;
            let mut lp_current = log_prior_density(&p.theta, prior);
            let mut lq_current = proposal.logpdf(&prior.free_values(&p.theta));
            for r in 0..moves {
                let move_stream = stream.derive(&[m as u64, r as u64]);
                let mut rng = move_stream.child(0).rng();
                let cand = proposal.sample(&mut rng);
                let theta_new = prior.with_free_values(&cand);
                let lp_new = log_prior_density(&theta_new, prior);
                let u: f64 = rng.random();
                if lp_new == LOG_ZERO {
                    continue;
                }
                let fresh = run_inner_filter(
                    problem,
                    theta_new,
                    obs,
                    config.engine,
                    config.n_x,
                    &config.enkf,
                    move_stream.child(1),
                )?;
                let lq_new = proposal.logpdf(&cand);
                let log_ratio = acceptance_log_ratio(
                    fresh.cum_loglik,
                    lp_new,
                    lq_new,
                    p.filter.cum_loglik,
                    lp_current,
                    lq_current,
                );
                if u.ln() < log_ratio {
                    p.theta = theta_new;
                    p.filter = fresh;
                    lp_current = lp_new;
                    lq_current = lq_new;
                    accepted += 1;
                }
            }
            Ok(accepted)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    let proposals = particles.len() * moves;
    Ok(if proposals == 0 {
        0.0
    } else {
        accepted as f64 / proposals as f64
    })
}

fn validate_observations(obs: &[f64]) -> Result<()> {
    for (i, &y) in obs.iter().enumerate() {
        if !(y.is_finite() && y >= 0.0 && y.fract() == 0.0) {
            return Err(Error::Domain(format!(
                "observation {} is {y}; counts must be non-negative integers",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Draws the initial parameter population with fresh inner filters.
pub fn initialize(problem: &Problem, config: &Smc2Config, root: RngStream) -> Vec<ThetaParticle> {
    let log_w = -(config.n_theta as f64).ln();
    (0..config.n_theta)
        .into_par_iter()
        .map(|m| {
            let theta = sample_prior(&problem.prior, &mut root.derive(&[purpose::PRIOR, m as u64]).rng());
            let model = problem.model(theta);
            let filter = InnerFilterHandle::new(
                config.engine,
                &model,
                config.n_x,
                root.derive(&[purpose::ASSIMILATE, m as u64, 0]),
            );
            ThetaParticle {
                theta,
                log_weight: log_w,
                filter,
            }
        })
        .collect()
}

/// Runs the sampler over `obs` from the prior.
pub fn run(
    obs: &[f64],
    problem: &Problem,
    config: &Smc2Config,
    seed: u64,
) -> std::result::Result<Smc2Output, Box<Smc2Abort>> {
    let start = Instant::now();
    let mut history = Vec::new();
    let mut diagnostics = RunDiagnostics::default();
    let abort = |error: Error, history: Vec<StepSummary>, mut diagnostics: RunDiagnostics| {
        diagnostics.total_seconds = start.elapsed().as_secs_f64();
        Box::new(Smc2Abort {
            error,
            history,
            diagnostics,
        })
    };
    if let Err(e) = problem
        .validate()
        .and_then(|_| config.validate())
        .and_then(|_| validate_observations(obs))
    {
        return Err(abort(e, history, diagnostics));
    }

    let root = RngStream::new(seed);
    let mut particles = initialize(problem, config, root);
    diagnostics.events.push(Event::Init);
    let mut checkpoints = Vec::new();
    if config.checkpoints.contains(&0) {
        checkpoints.push(checkpoint(0, &particles));
    }

    for (i, &y) in obs.iter().enumerate() {
        let t = i + 1;
        let step_start = Instant::now();
        diagnostics.events.push(Event::Assimilate(t));
        let weights = match assimilate(problem, &mut particles, y, t, &config.enkf) {
            Ok(w) => w,
            Err(e) => {
                diagnostics.filter_failures = count_dead(&particles);
                return Err(abort(e, history, diagnostics));
            }
        };
        let ess_t = ess(&WeightVector::from_weights(&weights).expect("normalized"));
        diagnostics.ess.push(ess_t);
        let rejuvenate = ess_t < config.threshold();
        diagnostics.rejuvenated.push(rejuvenate);
        if rejuvenate {
            diagnostics.events.push(Event::Resample(t));
            resample(&mut particles, &weights, root, t);
            diagnostics.events.push(Event::Rejuvenate(t));
            let points: Vec<Vec<f64>> = particles
                .iter()
                .map(|p| problem.prior.free_values(&p.theta))
                .collect();
            let uniform = vec![1.0; particles.len()];
            let outcome = build_proposal(&points, &uniform, config.proposal_scale).and_then(|q| {
                pmmh_rejuvenate(
                    problem,
                    &mut particles,
                    &obs[..t],
                    &q,
                    config.moves,
                    config,
                    root.derive(&[purpose::PMMH, t as u64]),
                )
            });
            match outcome {
                Ok(rate) => diagnostics.acceptance.push(rate),
                Err(e) => return Err(abort(e, history, diagnostics)),
            }
        }
        match posterior_summary(&particles, &problem.prior) {
            Ok(params) => history.push(StepSummary { t, params }),
            Err(e) => return Err(abort(e, history, diagnostics)),
        }
        if config.checkpoints.contains(&t) {
            checkpoints.push(checkpoint(t, &particles));
        }
        diagnostics.step_seconds.push(step_start.elapsed().as_secs_f64());
    }
    diagnostics.filter_failures = count_dead(&particles);
    diagnostics.total_seconds = start.elapsed().as_secs_f64();
    Ok(Smc2Output {
        particles,
        history,
        diagnostics,
        checkpoints,
    })
}

fn count_dead(particles: &[ThetaParticle]) -> usize {
    particles
        .iter()
        .filter(|p| matches!(p.filter.state, FilterState::Dead))
        .count()
}

fn checkpoint(t: usize, particles: &[ThetaParticle]) -> Checkpoint {
    Checkpoint {
        t,
        thetas: particles.iter().map(|p| p.theta).collect(),
        log_weights: particles.iter().map(|p| p.log_weight).collect(),
    }
}

/// Stratified resampling of whole particles. Copies get fresh filter streams
/// so duplicated filters diverge from the next step on.
fn resample(particles: &mut Vec<ThetaParticle>, weights: &[f64], root: RngStream, t: usize) {
    let w = WeightVector::from_weights(weights).expect("normalized weights");
    let idx = stratified_resample(&w, &mut root.derive(&[purpose::RESAMPLE, t as u64]).rng());
    let log_w = -(particles.len() as f64).ln();
    let mut next: Vec<ThetaParticle> = idx.iter().map(|&a| particles[a].clone()).collect();
    for (m, p) in next.iter_mut().enumerate() {
        p.log_weight = log_w;
        p.filter.stream = root.derive(&[purpose::ASSIMILATE, m as u64, t as u64]);
    }
    *particles = next;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example1;
    use approx::assert_relative_eq;

    fn problem() -> Problem {
        let ex = example1();
        Problem {
            cfg: ex.cfg,
            prior: ex.prior,
            init: ex.init_spec,
        }
    }

    fn tiny(engine: Engine) -> Smc2Config {
        Smc2Config {
            engine,
            n_theta: 20,
            n_x: 10,
            moves: 2,
            ..Smc2Config::default()
        }
    }

    fn data(days: usize) -> Vec<f64> {
        example1().simulate_days(1, days).unwrap().observations
    }

    fn dummy_particles(n: usize) -> Vec<ThetaParticle> {
        let pr = problem();
        initialize(&pr, &tiny(Engine::Enkf), RngStream::new(0))
            .into_iter()
            .take(n)
            .collect()
    }

    #[test]
    fn weight_arithmetic() {
        let mut ps = dummy_particles(2);
        for p in &mut ps {
            p.log_weight = -(2f64).ln();
        }
        let w = apply_increments(&mut ps, &[2f64.ln(), 0.0], 1).unwrap();
        assert_relative_eq!(w[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(w[1], 1.0 / 3.0, epsilon = 1e-12);

        let w = apply_increments(&mut ps, &[LOG_ZERO, 0.0], 2).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
        let r = apply_increments(&mut ps, &[0.0, LOG_ZERO], 3);
        assert!(matches!(r, Err(Error::DegeneratePopulation { t: 3, .. })));
    }

    #[test]
    fn proposal_moments() {
        let pts = vec![vec![0.2], vec![0.4]];
        let q = build_proposal(&pts, &[1.0, 1.0], 1.0).unwrap();
        assert_relative_eq!(q.mean[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(q.cov[(0, 0)], 0.01 * (1.0 + 1e-10), epsilon = 1e-15);
        let q2 = build_proposal(&pts, &[1.0, 1.0], 2.0).unwrap();
        assert_relative_eq!(q2.cov[(0, 0)], 2.0 * q.cov[(0, 0)], epsilon = 1e-15);
        let same = vec![vec![0.3, 1.0]; 5];
        assert!(matches!(
            build_proposal(&same, &[1.0; 5], 1.0),
            Err(Error::SingularProposal(_))
        ));
        // Density of the proposal at its mean in one dimension.
        assert_relative_eq!(
            q.logpdf(&[0.3]),
            -0.5 * (2.0 * std::f64::consts::PI * q.cov[(0, 0)]).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn acceptance_ratio_cases() {
        assert_eq!(acceptance_log_ratio(-10.0, -1.0, -2.0, -10.0, -1.0, -2.0), 0.0);
        assert_eq!(acceptance_log_ratio(-10.0, LOG_ZERO, -2.0, -10.0, -1.0, -2.0), LOG_ZERO);
        assert_relative_eq!(
            acceptance_log_ratio(-9.0, -1.0, -3.0, -10.0, -1.5, -2.0),
            (-9.0 - 1.0 - 2.0) - (-10.0 - 1.5 - 3.0)
        );
    }

    #[test]
    fn no_observations_returns_prior_sample() {
        let pr = problem();
        let cfg = tiny(Engine::Enkf);
        let out = run(&[], &pr, &cfg, 3).unwrap();
        let init = initialize(&pr, &cfg, RngStream::new(3));
        assert!(out.history.is_empty());
        assert_eq!(out.particles.len(), 20);
        for (a, b) in out.particles.iter().zip(&init) {
            assert_eq!(a.theta, b.theta);
            assert_eq!(a.log_weight, b.log_weight);
        }
    }

    #[test]
    fn invalid_observation_aborts() {
        let err = run(&[1.0, -1.0], &problem(), &tiny(Engine::Enkf), 3).unwrap_err();
        assert!(matches!(err.error, Error::Domain(_)));
    }

    #[test]
    fn bookkeeping_trigger_and_uniform_weights() {
        let obs = data(12);
        for engine in [Engine::Enkf, Engine::Bpf] {
            let cfg = tiny(engine);
            let out = run(&obs, &problem(), &cfg, 11).unwrap();
            for p in &out.particles {
                let sum: f64 = p.filter.increments.iter().sum();
                if sum.is_finite() {
                    assert!((p.filter.cum_loglik - sum).abs() <= 1e-9);
                }
                assert_eq!(p.filter.increments.len(), obs.len());
            }
            let d = &out.diagnostics;
            assert_eq!(d.ess.len(), obs.len());
            for (ess_t, rej) in d.ess.iter().zip(&d.rejuvenated) {
                assert!(*ess_t >= 1.0 - 1e-9 && *ess_t <= cfg.n_theta as f64 + 1e-9);
                assert_eq!(*rej, *ess_t < cfg.threshold());
            }
            assert!(d.acceptance.iter().all(|a| (0.0..=1.0).contains(a)));
            if *d.rejuvenated.last().unwrap() {
                let lw = -(cfg.n_theta as f64).ln();
                assert!(out.particles.iter().all(|p| p.log_weight == lw));
            }
            assert_eq!(out.history.len(), obs.len());
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let obs = data(8);
        let cfg = tiny(Engine::Enkf);
        let a = run(&obs, &problem(), &cfg, 5).unwrap();
        let b = run(&obs, &problem(), &cfg, 5).unwrap();
        assert_eq!(a.history, b.history);
        let c = run(&obs, &problem(), &cfg, 6).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn engines_share_the_driver() {
        let obs = data(6);
        let trace = |engine, threshold| {
            let cfg = Smc2Config {
                ess_threshold: Some(threshold),
                ..tiny(engine)
            };
            run(&obs, &problem(), &cfg, 2).unwrap().diagnostics.events
        };
        assert_eq!(trace(Engine::Enkf, 0.0), trace(Engine::Bpf, 0.0));
        let always = trace(Engine::Enkf, 1e9);
        assert_eq!(always, trace(Engine::Bpf, 1e9));
        assert_eq!(always.len(), 1 + 3 * obs.len());
    }

    #[test]
    fn checkpoints_are_kept() {
        let obs = data(5);
        let cfg = Smc2Config {
            checkpoints: vec![0, 3],
            ..tiny(Engine::Enkf)
        };
        let out = run(&obs, &problem(), &cfg, 2).unwrap();
        assert_eq!(out.checkpoints.iter().map(|c| c.t).collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(out.checkpoints[1].thetas.len(), 20);
    }

    #[test]
    fn summary_examples() {
        let mut ps = dummy_particles(2);
        ps[0].theta.alpha = 5.0;
        ps[1].theta.alpha = 99.0;
        ps[0].log_weight = 0.0;
        ps[1].log_weight = LOG_ZERO;
        let s = posterior_summary(&ps, &problem().prior).unwrap();
        let alpha = s.iter().find(|p| p.param == Param::Alpha).unwrap();
        assert_eq!((alpha.mean, alpha.sd), (5.0, 0.0));
        assert!(alpha.quantiles.iter().all(|&q| q == 5.0));
    }
}
