use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::model::{Param, ParamVector};
use crate::LOG_ZERO;

/// Truncations keeping less than this much normal mass switch from rejection
/// sampling to inverse-CDF sampling.
const REJECTION_MIN_MASS: f64 = 0.01;

/// One-dimensional prior marginal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    TruncNormal { mean: f64, sd: f64, lower: f64, upper: f64 },
    Uniform { lower: f64, upper: f64 },
}

fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn std_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn std_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

fn std_isf(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Standard normal mass on `[a, b]`, computed on whichever tail keeps precision.
fn std_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        std_sf(a) - std_sf(b)
    } else if b <= 0.0 {
        std_cdf(b) - std_cdf(a)
    } else {
        1.0 - std_cdf(a) - std_sf(b)
    }
}

fn normal_log_kernel(z: f64, sd: f64) -> f64 {
    -0.5 * z * z - sd.ln() - 0.5 * (LN_2 + PI.ln())
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Marginal::TruncNormal {
                mean,
                sd,
                lower,
                upper,
            } => {
                mean.is_finite()
                    && sd.is_finite()
                    && sd > 0.0
                    && !lower.is_nan()
                    && !upper.is_nan()
                    && lower < upper
            }
            Marginal::Uniform { lower, upper } => {
                lower.is_finite() && upper.is_finite() && lower < upper
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior marginal {self}")))
        }
    }

    /// Closed support `(lower, upper)`; infinite ends for unbounded forms.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Marginal::TruncNormal { lower, upper, .. } | Marginal::Uniform { lower, upper } => {
                (lower, upper)
            }
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x >= lo && x <= hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Marginal::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Marginal::TruncNormal {
                mean,
                sd,
                lower,
                upper,
            } => {
                let a = (lower - mean) / sd;
                let b = (upper - mean) / sd;
                let z = if std_mass(a, b) >= REJECTION_MIN_MASS {
                    loop {
                        let z: f64 = rng.sample(StandardNormal);
                        if z >= a && z <= b {
                            break z;
                        }
                    }
                } else {
                    let u: f64 = rng.random();
                    if a >= 0.0 {
                        let (qa, qb) = (std_sf(a), std_sf(b));
                        std_isf(qb + (qa - qb) * u)
                    } else {
                        let (pa, pb) = (std_cdf(a), std_cdf(b));
                        std_quantile(pa + (pb - pa) * u)
                    }
                };
                (mean + sd * z.clamp(a, b)).clamp(lower, upper)
            }
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() || !self.contains(x) {
            return LOG_ZERO;
        }
        match *self {
            Marginal::Normal { mean, sd } => normal_log_kernel((x - mean) / sd, sd),
            Marginal::Uniform { lower, upper } => -(upper - lower).ln(),
            Marginal::TruncNormal {
                mean,
                sd,
                lower,
                upper,
            } => {
                let mass = std_mass((lower - mean) / sd, (upper - mean) / sd);
                normal_log_kernel((x - mean) / sd, sd) - mass.ln()
            }
        }
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Marginal::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
            Marginal::TruncNormal {
                mean,
                sd,
                lower,
                upper,
            } => write!(f, "tnormal({mean}, {sd}, {lower}, {upper})"),
            Marginal::Uniform { lower, upper } => write!(f, "uniform({lower}, {upper})"),
        }
    }
}

/// Independent priors over the free parameters. Parameters without a marginal
/// stay at their value in `fixed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub fixed: ParamVector,
    pub marginals: Vec<(Param, Marginal)>,
}

impl PriorSpec {
    pub fn new(fixed: ParamVector, marginals: Vec<(Param, Marginal)>) -> Result<Self> {
        let spec = Self { fixed, marginals };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (p, m)) in self.marginals.iter().enumerate() {
            m.validate()?;
            if self.marginals[..i].iter().any(|(q, _)| q == p) {
                return Err(Error::Config(format!("duplicate prior for {p}")));
            }
        }
        Ok(())
    }

    /// Free parameters in prior order.
    pub fn free_params(&self) -> Vec<Param> {
        self.marginals.iter().map(|(p, _)| *p).collect()
    }

    pub fn marginal(&self, param: Param) -> Option<&Marginal> {
        self.marginals
            .iter()
            .find(|(p, _)| *p == param)
            .map(|(_, m)| m)
    }

    pub fn is_free(&self, param: Param) -> bool {
        self.marginal(param).is_some()
    }

    /// Free-parameter values of `theta` in prior order.
    pub fn free_values(&self, theta: &ParamVector) -> Vec<f64> {
        self.marginals.iter().map(|(p, _)| theta.get(*p)).collect()
    }

    /// Copy of the fixed template with the free parameters set from `values`.
    pub fn with_free_values(&self, values: &[f64]) -> ParamVector {
        let mut theta = self.fixed;
        for ((p, _), &v) in self.marginals.iter().zip(values) {
            theta.set(*p, v);
        }
        theta
    }
}

/// Independent draw of every free parameter.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> ParamVector {
    let mut theta = spec.fixed;
    for (p, m) in &spec.marginals {
        theta.set(*p, m.sample(rng));
    }
    theta
}

/// Sum of marginal log-densities; log-zero outside the prior support or when
/// `theta` is not a valid model parameter vector.
pub fn log_prior_density(theta: &ParamVector, spec: &PriorSpec) -> f64 {
    if theta.validate().is_err() {
        return LOG_ZERO;
    }
    spec.marginals
        .iter()
        .map(|(p, m)| m.log_density(theta.get(*p)))
        .sum()
}
