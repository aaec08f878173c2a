use std::f64::consts::PI;

use super::{
    simulate_epidemic, InitialStateSpec, LatentState, ModelConfig, Param, ParamVector,
    SimulatedEpidemic,
};
use crate::error::{Error, Result};
use crate::stochastic::{purpose, Marginal, PriorSpec, RngStream};

/// A synthetic study: true parameters, transmission schedule, priors and the
/// initial-state distribution used by the filters.
#[derive(Clone, Debug)]
pub struct ExampleSpec {
    pub name: &'static str,
    pub cfg: ModelConfig,
    pub truth: ParamVector,
    pub init_state: LatentState,
    pub days: usize,
    pub schedule: fn(f64) -> f64,
    pub prior: PriorSpec,
    pub init_spec: InitialStateSpec,
}

impl ExampleSpec {
    /// Ground truth over the example's full horizon.
    pub fn simulate(&self, seed: u64) -> Result<SimulatedEpidemic> {
        self.simulate_days(seed, self.days)
    }

    pub fn simulate_days(&self, seed: u64, days: usize) -> Result<SimulatedEpidemic> {
        let mut rng = RngStream::new(seed).child(purpose::SIMULATE).rng();
        simulate_epidemic(&self.cfg, &self.truth, &self.init_state, &self.schedule, days, &mut rng)
    }
}

const POPULATION: f64 = 500_000.0;
const I0: f64 = 10.0;

fn half_line(mean: f64, sd: f64) -> Marginal {
    Marginal::TruncNormal {
        mean,
        sd,
        lower: 0.0,
        upper: f64::INFINITY,
    }
}

fn init_spec() -> InitialStateSpec {
    InitialStateSpec {
        s0: half_line(POPULATION, 0.2),
        i0: half_line(I0, 0.2),
        e0: 0.0,
        r0: 0.0,
    }
}

fn init_state(beta0: f64) -> LatentState {
    LatentState {
        s: POPULATION - I0,
        e: 0.0,
        i: I0,
        r: 0.0,
        z: 0.0,
        log_beta: beta0.ln(),
    }
}

fn schedule1(t: f64) -> f64 {
    0.3 * ((2.0 * PI * t / 55.0).sin() - t / 80.0).exp()
}

fn schedule2(t: f64) -> f64 {
    0.5 * (-(t - 15.0).powi(2) / 400.0).exp() + 0.065
}

fn build(
    name: &'static str,
    alpha: f64,
    gamma: f64,
    days: usize,
    schedule: fn(f64) -> f64,
    marginals: Vec<(Param, Marginal)>,
) -> ExampleSpec {
    let truth = ParamVector {
        alpha,
        gamma,
        nu_beta: 0.0,
        phi: 0.0,
        beta0: schedule(0.0),
    };
    let prior = PriorSpec::new(truth, marginals).expect("example priors are valid");
    ExampleSpec {
        name,
        cfg: ModelConfig {
            population: POPULATION,
            ..ModelConfig::default()
        },
        truth,
        init_state: init_state(truth.beta0),
        days,
        schedule,
        prior,
        init_spec: init_spec(),
    }
}

/// Oscillating transmission with a mild resurgence, 60 days.
pub fn example1() -> ExampleSpec {
    build(
        "example1",
        0.5,
        1.0 / 7.0,
        60,
        schedule1,
        vec![
            (Param::Beta0, Marginal::Normal { mean: 0.3, sd: 0.01 }),
            (Param::Alpha, half_line(0.6, 0.3)),
            (Param::Gamma, half_line(0.2, 0.1)),
            (Param::NuBeta, Marginal::Uniform { lower: 0.0, upper: 0.5 }),
        ],
    )
}

/// A single broad transmission peak decaying to a plateau, 100 days.
pub fn example2() -> ExampleSpec {
    build(
        "example2",
        1.0 / 3.0,
        1.0 / 8.0,
        100,
        schedule2,
        vec![
            (Param::Beta0, Marginal::Normal { mean: 0.35, sd: 0.01 }),
            (Param::Alpha, half_line(0.4, 0.2)),
            (Param::Gamma, half_line(0.12, 0.2)),
            (Param::NuBeta, Marginal::Uniform { lower: 0.0, upper: 0.3 }),
        ],
    )
}

pub fn example(name: &str) -> Result<ExampleSpec> {
    match name {
        "example1" => Ok(example1()),
        "example2" => Ok(example2()),
        other => Err(Error::Config(format!(
            "unknown example '{other}' (expected example1 or example2)"
        ))),
    }
}
