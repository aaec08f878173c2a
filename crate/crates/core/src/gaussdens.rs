//! Gaussian predictive densities, including the finite-sample unbiased
//! estimator of a normal density from an ensemble mean and covariance.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::LOG_ZERO;

/// Relative pivot tolerance of the positive-definiteness check.
const PIVOT_TOL: f64 = 1e-12;

/// Predictive mean and covariance of the observation.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPair {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MomentPair {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Domain(format!(
                "covariance is {}x{} but the mean has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("moments must be finite".into()));
        }
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Domain(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `log c(d, v)` with `c(d, v) = 2^{-dv/2} pi^{-d(d-1)/4} / prod_{i=1..d} Gamma((v-i+1)/2)`.
pub fn log_c(d: usize, v: f64) -> Result<f64> {
    let df = d as f64;
    if d == 0 || !(v > df - 1.0) {
        return Err(Error::Domain(format!("log_c needs v > d - 1, got d = {d}, v = {v}")));
    }
    let gammas: f64 = (1..=d).map(|i| ln_gamma(0.5 * (v - i as f64 + 1.0))).sum();
    Ok(-0.5 * df * v * 2f64.ln() - 0.25 * df * (df - 1.0) * PI.ln() - gammas)
}

/// Log-determinant by Cholesky, `None` when a pivot falls below
/// `PIVOT_TOL` times the largest diagonal entry.
fn cholesky_logdet(a: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = PIVOT_TOL * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut logdet = 0.0;
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > tol) {
            return None;
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        logdet += 2.0 * ljj.ln();
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(logdet)
}

fn check_ensemble_size(d: usize, n: usize) -> Result<()> {
    if n <= d + 3 {
        return Err(Error::Precondition(format!(
            "unbiased estimator needs ensemble size > d + 3 = {}, got {n}",
            d + 3
        )));
    }
    Ok(())
}

/// Terms of the log-estimator that depend only on `(d, n)`.
fn unbiased_constant(d: usize, n: usize) -> f64 {
    let (df, nf) = (d as f64, n as f64);
    -0.5 * df * (2.0 * PI).ln()
        + log_c(d, nf - 2.0).expect("n > d + 3")
        - log_c(d, nf - 1.0).expect("n > d + 3")
        - 0.5 * df * (1.0 - 1.0 / nf).ln()
}

/// Log of the unbiased estimator of `N(y; mu, Sigma)` computed from an
/// ensemble of size `n` with sample moments `moments`. Returns log-zero when
/// `M - (y - mean)(y - mean)^T / (1 - 1/n)` is not positive definite.
pub fn unbiased_gaussian_logpdf(y: &DVector<f64>, moments: &MomentPair, n: usize) -> Result<f64> {
    let d = moments.dim();
    check_ensemble_size(d, n)?;
    if y.len() != d {
        return Err(Error::Domain(format!(
            "observation has length {} but the moments have dimension {d}",
            y.len()
        )));
    }
    let nf = n as f64;
    let m = &moments.cov * (nf - 1.0);
    let diff = y - &moments.mean;
    let a = &m - &diff * diff.transpose() / (1.0 - 1.0 / nf);
    let Some(logdet_a) = cholesky_logdet(&a) else {
        return Ok(LOG_ZERO);
    };
    let Some(logdet_m) = cholesky_logdet(&m) else {
        return Ok(LOG_ZERO);
    };
    let df = d as f64;
    Ok(unbiased_constant(d, n) - 0.5 * (nf - df - 2.0) * logdet_m
        + 0.5 * (nf - df - 3.0) * logdet_a)
}

/// Precomputed scalar form of [`unbiased_gaussian_logpdf`] for a fixed ensemble size.
#[derive(Clone, Copy, Debug)]
pub struct ScalarUnbiased {
    n: f64,
    constant: f64,
}

impl ScalarUnbiased {
    pub fn new(n: usize) -> Result<Self> {
        check_ensemble_size(1, n)?;
        Ok(Self {
            n: n as f64,
            constant: unbiased_constant(1, n),
        })
    }

    pub fn logpdf(&self, y: f64, mean: f64, var: f64) -> f64 {
        let n = self.n;
        let m = (n - 1.0) * var;
        let a = m - (y - mean).powi(2) / (1.0 - 1.0 / n);
        if !(m > 0.0 && a > PIVOT_TOL * m) {
            return LOG_ZERO;
        }
        self.constant - 0.5 * (n - 3.0) * m.ln() + 0.5 * (n - 4.0) * a.ln()
    }
}

/// Exact normal log-density at plug-in moments.
pub fn standard_gaussian_logpdf(y: &DVector<f64>, moments: &MomentPair) -> Result<f64> {
    let d = moments.dim();
    if y.len() != d {
        return Err(Error::Domain(format!(
            "observation has length {} but the moments have dimension {d}",
            y.len()
        )));
    }
    let chol = nalgebra::Cholesky::new(moments.cov.clone())
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
    let diff = y - &moments.mean;
    let z = chol.l().solve_lower_triangular(&diff).expect("Cholesky factor is invertible");
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    Ok(-0.5 * (d as f64 * (2.0 * PI).ln() + logdet + z.norm_squared()))
}

/// Scalar normal log-density; `-inf` for non-positive variance is not
/// representable, so such input is a domain error.
pub fn standard_gaussian_logpdf_scalar(y: f64, mean: f64, var: f64) -> Result<f64> {
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Domain(format!("variance must be positive, got {var}")));
    }
    Ok(-0.5 * ((2.0 * PI * var).ln() + (y - mean).powi(2) / var))
}
