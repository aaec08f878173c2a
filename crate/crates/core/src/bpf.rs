//! Bootstrap particle filter with stratified resampling at every step.

use crate::error::{Error, Result};
use crate::ssm::StateSpaceModel;
use crate::stochastic::{log_sum_exp, normalize_log_weights, stratified_resample, RngStream, StreamRng};

/// Weighted particles plus the ancestor indices of the last resampling.
#[derive(Clone, Debug)]
pub struct ParticleCloud<S> {
    pub particles: Vec<S>,
    pub log_weights: Vec<f64>,
    pub ancestors: Vec<usize>,
}

impl<S: Clone> ParticleCloud<S> {
    /// Equally weighted draws from the initial distribution.
    pub fn initial<M: StateSpaceModel<State = S>>(model: &M, n: usize, rng: &mut StreamRng) -> Self {
        Self {
            particles: (0..n).map(|_| model.sample_initial(rng)).collect(),
            log_weights: vec![0.0; n],
            ancestors: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

/// Resample, propagate and reweight. Returns the new cloud and
/// `log((1/N) sum_i w_i)`. `t` only labels errors.
pub fn bpf_step<M: StateSpaceModel>(
    model: &M,
    cloud: &ParticleCloud<M::State>,
    y: f64,
    t: usize,
    rng: &mut StreamRng,
) -> Result<(ParticleCloud<M::State>, f64)> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::Precondition("particle cloud is empty".into()));
    }
    let weights = normalize_log_weights(&cloud.log_weights).map_err(|e| Error::ParticleCollapse {
        t,
        detail: format!("cannot resample: {e}"),
    })?;
    let ancestors = stratified_resample(&weights, rng);
    let mut particles = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for &a in &ancestors {
        let x = model.transition(&cloud.particles[a], rng)?;
        log_weights.push(model.obs_log_density(y, &x)?);
        particles.push(x);
    }
    let lse = log_sum_exp(&log_weights);
    if lse == f64::NEG_INFINITY || lse.is_nan() {
        return Err(Error::ParticleCollapse {
            t,
            detail: format!("all {n} particles have zero likelihood for y = {y}"),
        });
    }
    Ok((
        ParticleCloud {
            particles,
            log_weights,
            ancestors,
        },
        lse - (n as f64).ln(),
    ))
}

#[derive(Clone, Debug)]
pub struct BpfRun<S> {
    /// Clouds after each step, `trace[t - 1]` for step `t`.
    pub trace: Vec<ParticleCloud<S>>,
    pub increments: Vec<f64>,
    pub loglik: f64,
}

/// Runs the filter over `obs`, with the same stream layout as the ensemble
/// filter: `stream.child(0)` initializes and `stream.child(t)` drives step `t`.
pub fn bpf_filter<M: StateSpaceModel>(
    model: &M,
    obs: &[f64],
    n_x: usize,
    stream: RngStream,
    keep_trace: bool,
) -> Result<BpfRun<M::State>> {
    if obs.is_empty() {
        return Err(Error::Precondition("filter needs at least one observation".into()));
    }
    if n_x == 0 {
        return Err(Error::Precondition("filter needs at least one particle".into()));
    }
    let mut cloud = ParticleCloud::initial(model, n_x, &mut stream.child(0).rng());
    let mut trace = Vec::new();
    let mut increments = Vec::with_capacity(obs.len());
    for (i, &y) in obs.iter().enumerate() {
        let t = i + 1;
        let (next, incr) = bpf_step(model, &cloud, y, t, &mut stream.child(t as u64).rng())?;
        increments.push(incr);
        cloud = next;
        if keep_trace {
            trace.push(cloud.clone());
        }
    }
    if !keep_trace {
        trace.push(cloud);
    }
    let loglik = increments.iter().sum();
    Ok(BpfRun {
        trace,
        increments,
        loglik,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example1, LatentState};
    use crate::ssm::{LinearGaussian, SeirModel};

    #[test]
    fn disease_free_zero_count() {
        let ex = example1();
        let model = SeirModel::new(ex.truth, &ex.cfg, &ex.init_spec);
        let x = LatentState {
            s: 500_000.0,
            log_beta: 0.3f64.ln(),
            ..Default::default()
        };
        let cloud = ParticleCloud {
            particles: vec![x; 8],
            log_weights: vec![0.0; 8],
            ancestors: (0..8).collect(),
        };
        let (_, incr) = bpf_step(&model, &cloud, 0.0, 1, &mut RngStream::new(1).rng()).unwrap();
        assert!(incr.abs() < 1e-9);
        let err = bpf_step(&model, &cloud, 5.0, 1, &mut RngStream::new(1).rng());
        assert!(err.unwrap().1 < -100.0);
    }

    #[test]
    fn point_mass_dominates_resampling() {
        let model = LinearGaussian::new(1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        let cloud = ParticleCloud {
            particles: vec![0.0, 1.0, 2.0, 3.0],
            log_weights: vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
            ancestors: (0..4).collect(),
        };
        let (next, _) = bpf_step(&model, &cloud, 1.0, 2, &mut RngStream::new(3).rng()).unwrap();
        assert_eq!(next.ancestors, vec![1, 1, 1, 1]);
        assert!(next.particles.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn collapse_is_reported_with_time() {
        let ex = example1();
        let model = SeirModel::new(ex.truth, &ex.cfg, &ex.init_spec);
        let cloud = ParticleCloud {
            particles: vec![ex.init_state; 4],
            log_weights: vec![f64::NEG_INFINITY; 4],
            ancestors: (0..4).collect(),
        };
        let r = bpf_step(&model, &cloud, 1.0, 7, &mut RngStream::new(1).rng());
        assert!(matches!(r, Err(Error::ParticleCollapse { t: 7, .. })));
    }

    #[test]
    fn filter_bookkeeping() {
        let model = LinearGaussian::new(0.8, 0.5, 1.0, 0.0, 1.0).unwrap();
        let obs = model.simulate(10, &mut RngStream::new(2).rng());
        let run = bpf_filter(&model, &obs, 100, RngStream::new(9), true).unwrap();
        assert_eq!(run.trace.len(), 10);
        assert_eq!(run.loglik, run.increments.iter().sum::<f64>());
        let again = bpf_filter(&model, &obs, 100, RngStream::new(9), false).unwrap();
        assert_eq!(again.loglik, run.loglik);

        let one = bpf_filter(&model, &obs[..1], 100, RngStream::new(9), true).unwrap();
        let init = ParticleCloud::initial(&model, 100, &mut RngStream::new(9).child(0).rng());
        let (_, incr) =
            bpf_step(&model, &init, obs[0], 1, &mut RngStream::new(9).child(1).rng()).unwrap();
        assert_eq!(one.loglik, incr);
    }

    #[test]
    fn larger_clouds_reduce_variance() {
        let model = LinearGaussian::new(0.9, 1.0, 1.0, 0.0, 1.0).unwrap();
        let obs = model.simulate(20, &mut RngStream::new(1).rng());
        let spread = |n: usize| {
            let lls: Vec<f64> = (0..50)
                .map(|s| bpf_filter(&model, &obs, n, RngStream::new(100 + s), false).unwrap().loglik)
                .collect();
            let m = lls.iter().sum::<f64>() / 50.0;
            lls.iter().map(|l| (l - m).powi(2)).sum::<f64>() / 49.0
        };
        assert!(spread(1000) < spread(100));
    }
}
