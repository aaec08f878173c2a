//! Liu–West filter: an auxiliary particle filter over the augmented
//! `(state, theta)` space with kernel shrinkage for the static parameters.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{obs_log_density, transition, transition_frozen_beta, LatentState, ParamVector};
use crate::smc2::{summarize, Problem, StepSummary};
use crate::ssm::StateSpaceModel;
use crate::stochastic::{
    log_prior_density, normalize_log_weights, purpose, sample_prior, stratified_resample,
    PriorSpec, RngStream, StreamRng,
};
use crate::LOG_ZERO;

/// Jitter draws outside the prior support are repeated this many times
/// before the last draw is clamped into the support.
const MAX_REDRAWS: usize = 100;

/// `(h^2, lambda)` with `h^2 = 1 - ((3 delta - 1) / (2 delta))^2` and
/// `lambda = sqrt(1 - h^2)`.
pub fn shrinkage_constants(delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("discount must lie in (0, 1], got {delta}")));
    }
    let a = (3.0 * delta - 1.0) / (2.0 * delta);
    let h2 = 1.0 - a * a;
    Ok((h2, (1.0 - h2).max(0.0).sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedParticle {
    pub state: LatentState,
    pub theta: ParamVector,
    pub log_weight: f64,
}

/// Weighted mean and covariance (divide-by-sum) of row vectors.
fn weighted_moments(points: &[Vec<f64>], weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = points[0].len();
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(d);
    for (p, w) in points.iter().zip(weights) {
        mean += DVector::from_column_slice(p) * (w / total);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (p, w) in points.iter().zip(weights) {
        let diff = DVector::from_column_slice(p) - &mean;
        cov += &diff * diff.transpose() * (w / total);
    }
    (mean, cov)
}

/// Shrinkage kernel: locations `lambda theta_i + (1 - lambda) theta_bar` and a
/// Cholesky factor of `h^2 V`, or `None` when the kernel has no spread.
struct Kernel {
    locations: Vec<Vec<f64>>,
    factor: Option<DMatrix<f64>>,
}

impl Kernel {
    fn new(points: &[Vec<f64>], weights: &[f64], h2: f64, lambda: f64) -> Self {
        let (mean, cov) = weighted_moments(points, weights);
        let locations = points
            .iter()
            .map(|p| {
                p.iter()
                    .zip(mean.iter())
                    .map(|(v, m)| lambda * v + (1.0 - lambda) * m)
                    .collect()
            })
            .collect();
        let mut scaled = cov * h2;
        let trace = scaled.trace();
        let factor = if trace > 0.0 && trace.is_finite() {
            for i in 0..scaled.nrows() {
                scaled[(i, i)] += 1e-12 * trace;
            }
            Cholesky::new(scaled).map(|c| c.l())
        } else {
            None
        };
        Self { locations, factor }
    }

    fn draw<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Vec<f64> {
        let loc = &self.locations[i];
        match &self.factor {
            None => loc.clone(),
            Some(l) => {
                let z = DVector::from_fn(loc.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let offset = l * z;
                loc.iter().zip(offset.iter()).map(|(a, b)| a + b).collect()
            }
        }
    }
}

/// Shrinks and jitters a weighted population in place of its members, with
/// no resampling. The result keeps the weighted mean and covariance of
/// `points` in expectation.
pub fn kernel_jitter<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    weights: &[f64],
    delta: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let (h2, lambda) = shrinkage_constants(delta)?;
    let kernel = Kernel::new(points, weights, h2, lambda);
    Ok((0..points.len()).map(|i| kernel.draw(i, rng)).collect())
}

fn jitter_in_support(kernel: &Kernel, i: usize, prior: &PriorSpec, rng: &mut StreamRng) -> ParamVector {
    let mut values = kernel.draw(i, rng);
    for _ in 1..MAX_REDRAWS {
        if log_prior_density(&prior.with_free_values(&values), prior) > LOG_ZERO {
            return prior.with_free_values(&values);
        }
        values = kernel.draw(i, rng);
    }
    for ((_, m), v) in prior.marginals.iter().zip(values.iter_mut()) {
        let (lo, hi) = m.support();
        *v = v.clamp(lo, hi);
    }
    prior.with_free_values(&values)
}

#[derive(Clone, Debug)]
pub struct LiuWestOutput {
    pub history: Vec<StepSummary>,
    /// Weighted mean of the filtered latent state after each step.
    pub state_means: Vec<LatentState>,
    pub particles: Vec<AugmentedParticle>,
}

/// Runs the filter over `obs` with `n_x` augmented particles and discount
/// `delta`. Step `t` draws from the stream `(LIU_WEST, t)` of `seed`.
pub fn liu_west_filter(
    obs: &[f64],
    problem: &Problem,
    n_x: usize,
    delta: f64,
    seed: u64,
) -> Result<LiuWestOutput> {
    problem.validate()?;
    if n_x < 2 {
        return Err(Error::Precondition(format!("need at least 2 particles, got {n_x}")));
    }
    let (h2, lambda) = shrinkage_constants(delta)?;
    let prior = &problem.prior;
    let root = RngStream::new(seed).child(purpose::LIU_WEST);

    let mut rng = root.child(0).rng();
    let mut particles: Vec<AugmentedParticle> = (0..n_x)
        .map(|_| {
            let theta = sample_prior(prior, &mut rng);
            let state = problem.model(theta).sample_initial(&mut rng);
            AugmentedParticle {
                state,
                theta,
                log_weight: 0.0,
            }
        })
        .collect();

    let mut history = Vec::with_capacity(obs.len());
    let mut state_means = Vec::with_capacity(obs.len());
    for (i, &y) in obs.iter().enumerate() {
        let t = i + 1;
        let mut rng = root.child(t as u64).rng();
        let weights = normalize_log_weights(
            &particles.iter().map(|p| p.log_weight).collect::<Vec<_>>(),
        )
        .map_err(|e| Error::ParticleCollapse {
            t,
            detail: e.to_string(),
        })?;
        let points: Vec<Vec<f64>> = particles.iter().map(|p| prior.free_values(&p.theta)).collect();
        let kernel = Kernel::new(&points, weights.as_slice(), h2, lambda);

        // First stage: predictive likelihood at the shrunk parameters and the
        // noise-free propagated state.
        let mut first = Vec::with_capacity(n_x);
        for (k, p) in particles.iter().enumerate() {
            let theta = prior.with_free_values(&kernel.locations[k]);
            let w = weights.as_slice()[k];
            let lg = if w > 0.0 {
                transition_frozen_beta(&p.state, &theta, &problem.cfg)
                    .and_then(|mu| obs_log_density(y, &mu, &theta, &problem.cfg))
                    .unwrap_or(LOG_ZERO)
            } else {
                LOG_ZERO
            };
            first.push((lg, w.ln() + lg));
        }
        let aux = normalize_log_weights(&first.iter().map(|f| f.1).collect::<Vec<_>>())
            .map_err(|e| Error::ParticleCollapse {
                t,
                detail: format!("first-stage weights: {e}"),
            })?;
        let ancestors = stratified_resample(&aux, &mut rng);

        let mut next = Vec::with_capacity(n_x);
        for &k in &ancestors {
            let theta = jitter_in_support(&kernel, k, prior, &mut rng);
            let (state, log_weight) = match transition(&particles[k].state, &theta, &problem.cfg, &mut rng) {
                Ok(x) => {
                    let ll = obs_log_density(y, &x, &theta, &problem.cfg)?;
                    (x, ll - first[k].0)
                }
                Err(Error::InvalidState(_) | Error::Numerical(_)) => (particles[k].state, LOG_ZERO),
                Err(e) => return Err(e),
            };
            next.push(AugmentedParticle {
                state,
                theta,
                log_weight,
            });
        }
        particles = next;

        let w = normalize_log_weights(&particles.iter().map(|p| p.log_weight).collect::<Vec<_>>())
            .map_err(|e| Error::ParticleCollapse {
                t,
                detail: e.to_string(),
            })?;
        let params = prior
            .free_params()
            .into_iter()
            .map(|param| {
                let values: Vec<f64> = particles.iter().map(|p| p.theta.get(param)).collect();
                summarize(param, &values, w.as_slice())
            })
            .collect::<Result<Vec<_>>>()?;
        history.push(StepSummary { t, params });
        let mut mean = [0.0; 6];
        for (p, wi) in particles.iter().zip(w.as_slice()) {
            for (m, c) in mean.iter_mut().zip(p.state.coords()) {
                *m += wi * c;
            }
        }
        state_means.push(LatentState::from_coords(mean));
    }
    Ok(LiuWestOutput {
        history,
        state_means,
        particles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example1, Param};
    use approx::assert_relative_eq;

    fn problem() -> Problem {
        let ex = example1();
        Problem {
            cfg: ex.cfg,
            prior: ex.prior,
            init: ex.init_spec,
        }
    }

    #[test]
    fn constants() {
        let (h2, lambda) = shrinkage_constants(0.99).unwrap();
        assert_relative_eq!(h2, 0.010075, epsilon = 1e-6);
        assert_relative_eq!(lambda, 0.994950, epsilon = 1e-6);
        assert_eq!(shrinkage_constants(1.0).unwrap(), (0.0, 1.0));
        let (h2, lambda) = shrinkage_constants(1.0 / 3.0).unwrap();
        assert_relative_eq!(h2, 1.0, epsilon = 1e-12);
        assert!(lambda.abs() < 1e-6);
        assert!(shrinkage_constants(0.0).is_err());
        assert!(shrinkage_constants(1.5).is_err());
    }

    #[test]
    fn no_discount_keeps_parameters_fixed() {
        let pr = problem();
        let sim = example1().simulate_days(2, 15).unwrap();
        let fixed = PriorSpec::new(
            pr.prior.fixed,
            vec![(Param::Alpha, crate::stochastic::Marginal::Uniform { lower: 0.49, upper: 0.51 })],
        )
        .unwrap();
        let pr = Problem { prior: fixed, ..pr };
        let out = liu_west_filter(&sim.observations, &pr, 200, 1.0, 4).unwrap();
        // Resampling only duplicates existing values.
        let mut rng = RngStream::new(4).child(purpose::LIU_WEST).child(0).rng();
        let initial: Vec<f64> = (0..200)
            .map(|_| {
                let th = sample_prior(&pr.prior, &mut rng);
                pr.model(th).sample_initial(&mut rng);
                th.alpha
            })
            .collect();
        assert!(out.particles.iter().all(|p| initial.contains(&p.theta.alpha)));
    }

    #[test]
    fn runs_on_example_data() {
        let sim = example1().simulate_days(3, 20).unwrap();
        let out = liu_west_filter(&sim.observations, &problem(), 500, 0.99, 1).unwrap();
        assert_eq!(out.history.len(), 20);
        for s in &out.history {
            for p in &s.params {
                assert!(p.quantiles[0] <= p.quantiles[4]);
            }
        }
        assert!(out.particles.iter().all(|p| log_prior_density(&p.theta, &problem().prior) > LOG_ZERO));
    }
}
