mod common;

use common::{check_kernel_moments, check_stratified_exact};
use esmc2::bpf::{bpf_filter, ParticleCloud};
use esmc2::enkf::{enkf_filter, forecast_ensemble, EnkfOptions, TraceRetention};
use esmc2::model::{example1, example2, LatentState, ParamVector};
use esmc2::products::{Bands, BAND_LEVELS};
use esmc2::smc2::{self, Engine, Problem, Smc2Config};
use esmc2::ssm::{SeirModel, StateSpaceModel};
use esmc2::stochastic::{ess, normalize_log_weights, RngStream, WeightVector};
use proptest::prelude::*;
use rand::Rng;

const POP: f64 = 500_000.0;

fn conserved(x: &LatentState) -> bool {
    (x.s + x.e + x.i + x.r - POP).abs() <= 1e-6 * POP
}

fn theta_strategy() -> impl Strategy<Value = ParamVector> {
    (0.01f64..3.0, 0.01f64..2.0, 0.0f64..1.0, -6.0f64..1.5).prop_map(|(alpha, gamma, nu_beta, lb)| {
        ParamVector {
            alpha,
            gamma,
            nu_beta,
            phi: 0.0,
            beta0: lb.exp(),
        }
    })
}

fn example_problem() -> Problem {
    let ex = example1();
    Problem {
        cfg: ex.cfg,
        prior: ex.prior,
        init: ex.init_spec,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_across_transitions(theta in theta_strategy(), seed in 0u64..1000, substeps in 1usize..12) {
        let ex = example1();
        let mut cfg = ex.cfg;
        cfg.n_substeps = substeps;
        let model = SeirModel::new(theta, &cfg, &ex.init_spec);
        let mut rng = RngStream::new(seed).rng();
        let mut members: Vec<LatentState> = (0..8).map(|_| model.sample_initial(&mut rng)).collect();
        prop_assert!(members.iter().all(conserved));
        for _ in 0..40 {
            members = forecast_ensemble(&model, &members, &mut rng).unwrap();
            prop_assert!(members.iter().all(conserved));
            prop_assert!(members.iter().all(|x| x.s >= 0.0 && x.e >= 0.0 && x.i >= 0.0 && x.r >= 0.0 && x.z >= 0.0));
        }
    }

    #[test]
    fn conservation_inside_filters(seed in 0u64..500) {
        let ex = example2();
        let obs = ex.simulate_days(seed, 30).unwrap().observations;
        let model = SeirModel::new(ex.truth, &ex.cfg, &ex.init_spec);
        let run = bpf_filter(&model, &obs, 30, RngStream::new(seed), true).unwrap();
        for cloud in &run.trace {
            prop_assert!(cloud.particles.iter().all(conserved));
        }
        let run = enkf_filter(&model, &obs, 20, &EnkfOptions::default(), RngStream::new(seed), TraceRetention::Full).unwrap();
        // Analysis ensembles are projected back onto the simplex by the next transition.
        let mut rng = RngStream::new(seed + 1).rng();
        for members in &run.trace {
            let next = forecast_ensemble(&model, members, &mut rng).unwrap();
            prop_assert!(next.iter().all(conserved));
        }
    }

    #[test]
    fn normalization_and_ess_bounds(lw in prop::collection::vec(-800.0f64..50.0, 1..200), shift in -1e4f64..1e4) {
        let shifted: Vec<f64> = lw.iter().map(|v| v + shift).collect();
        let w = normalize_log_weights(&shifted).unwrap();
        let total: f64 = w.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(w.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
        let e = ess(&w);
        prop_assert!(e >= 1.0 - 1e-12 && e <= lw.len() as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn bands_nest(values in prop::collection::vec(-1e6f64..1e6, 1..300), seed in 0u64..1000) {
        let mut rng = RngStream::new(seed).rng();
        let weights: Vec<f64> = values.iter().map(|_| rng.random::<f64>() + 1e-9).collect();
        let b = Bands::from_weighted(&values, &weights).unwrap();
        prop_assert!(b.is_nested());
        for &level in &BAND_LEVELS {
            let (lo, hi) = b.band(level).unwrap();
            prop_assert!(lo <= b.median && b.median <= hi);
        }
    }
}

#[test]
fn stratified_resampling_exact_by_enumeration() {
    let mut rng = RngStream::new(77).rng();
    for n in 1..=8usize {
        for _ in 0..200 {
            let mut raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            if n > 2 && rng.random::<f64>() < 0.3 {
                raw[rng.random_range(0..n)] = 0.0;
            }
            let w = WeightVector::from_weights(&raw).unwrap();
            check_stratified_exact(w.as_slice()).unwrap();
        }
    }
}

#[test]
fn liu_west_kernel_preserves_moments() {
    check_kernel_moments(5, 0.95).unwrap();
    check_kernel_moments(6, 0.5).unwrap();
}

#[test]
fn sampler_weights_and_diagnostics_stay_in_bounds() {
    let problem = example_problem();
    let obs = example1().simulate_days(3, 25).unwrap().observations;
    for engine in [Engine::Enkf, Engine::Bpf] {
        let config = Smc2Config {
            engine,
            n_theta: 40,
            n_x: 20,
            checkpoints: (1..=obs.len()).collect(),
            ..Smc2Config::default()
        };
        let out = smc2::run(&obs, &problem, &config, 11).unwrap();
        for cp in &out.checkpoints {
            let total: f64 = cp.log_weights.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() <= 1e-12, "{engine} t={} total {total}", cp.t);
        }
        let d = &out.diagnostics;
        assert_eq!(d.ess.len(), obs.len());
        assert!(d.ess.iter().all(|&e| (1.0 - 1e-9..=40.0 + 1e-9).contains(&e)));
        assert!(d.acceptance.iter().all(|a| (0.0..=1.0).contains(a)));
        assert_eq!(d.acceptance.len(), d.rejuvenation_times().len());
    }
}

#[test]
fn bpf_cloud_weights_normalized() {
    let ex = example1();
    let model = SeirModel::new(ex.truth, &ex.cfg, &ex.init_spec);
    let obs = ex.simulate_days(1, 20).unwrap().observations;
    let run = bpf_filter(&model, &obs, 50, RngStream::new(2), true).unwrap();
    for cloud in &run.trace {
        let cloud: &ParticleCloud<LatentState> = cloud;
        let w = normalize_log_weights(&cloud.log_weights).unwrap();
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
