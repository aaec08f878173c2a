use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

use super::{LatentState, ModelConfig, ObsModel, ParamVector};
use crate::error::{Error, Result};

/// Floor on the observation mean `rho * Z` so the count density stays defined
/// when no incidence is expected.
pub const MU_FLOOR: f64 = 1e-10;

fn check_count(y: f64) -> Result<()> {
    if !(y.is_finite() && y >= 0.0 && y.fract() == 0.0) {
        return Err(Error::Domain(format!(
            "observation must be a non-negative integer count, got {y}"
        )));
    }
    Ok(())
}

fn obs_mean(state: &LatentState, cfg: &ModelConfig) -> f64 {
    (cfg.rho * state.z).max(MU_FLOOR)
}

fn poisson_log_pmf(y: f64, mu: f64) -> f64 {
    y * mu.ln() - mu - ln_gamma(y + 1.0)
}

/// `ln Gamma(y + r) - ln Gamma(r) - y ln r`, accurate for any size `r`.
fn ln_rising_ratio(y: f64, r: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    if y / r < 1e-3 {
        // sum_{k<y} ln(1 + k/r) expanded to third order in k/r.
        let s1 = y * (y - 1.0) / 2.0;
        let s2 = (y - 1.0) * y * (2.0 * y - 1.0) / 6.0;
        let s3 = s1 * s1;
        s1 / r - s2 / (2.0 * r * r) + s3 / (3.0 * r * r * r)
    } else {
        ln_gamma(y + r) - ln_gamma(r) - y * r.ln()
    }
}

/// Negative-binomial log-pmf with mean `mu` and variance `mu + phi mu^2`,
/// i.e. size `r = 1/phi` and success probability `r / (r + mu)`.
fn negbin_log_pmf(y: f64, mu: f64, phi: f64) -> f64 {
    if phi == 0.0 {
        return poisson_log_pmf(y, mu);
    }
    let r = 1.0 / phi;
    let ratio = mu / r;
    ln_rising_ratio(y, r) - r * ratio.ln_1p() + y * mu.ln() - y * ratio.ln_1p() - ln_gamma(y + 1.0)
}

/// `log p(y | x, theta)` under the configured count model.
pub fn obs_log_density(
    y: f64,
    state: &LatentState,
    theta: &ParamVector,
    cfg: &ModelConfig,
) -> Result<f64> {
    check_count(y)?;
    let mu = obs_mean(state, cfg);
    Ok(match cfg.obs_model {
        ObsModel::Poisson => poisson_log_pmf(y, mu),
        ObsModel::NegBin => negbin_log_pmf(y, mu, theta.phi),
    })
}

/// `Var[y | x]`: `rho Z` for Poisson, `rho Z + phi (rho Z)^2` for NegBin.
pub fn obs_conditional_variance(state: &LatentState, theta: &ParamVector, cfg: &ModelConfig) -> f64 {
    let mu = cfg.rho * state.z;
    match cfg.obs_model {
        ObsModel::Poisson => mu,
        ObsModel::NegBin => mu + theta.phi * mu * mu,
    }
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng),
        Err(_) => mean.round(),
    }
}

/// Draws a count; the negative binomial is a Gamma-Poisson mixture with shape `1/phi`.
pub fn obs_sample<R: Rng + ?Sized>(
    state: &LatentState,
    theta: &ParamVector,
    cfg: &ModelConfig,
    rng: &mut R,
) -> f64 {
    let mu = obs_mean(state, cfg);
    match cfg.obs_model {
        ObsModel::NegBin if theta.phi > 0.0 => {
            let shape = 1.0 / theta.phi;
            let lambda = Gamma::new(shape, mu / shape)
                .map(|g| g.sample(rng))
                .unwrap_or(mu);
            sample_poisson(lambda, rng)
        }
        _ => sample_poisson(mu, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn state_with_z(z: f64) -> LatentState {
        LatentState {
            s: 1000.0,
            z,
            log_beta: 0.0,
            ..Default::default()
        }
    }

    fn cfg(obs_model: ObsModel, rho: f64) -> ModelConfig {
        ModelConfig {
            obs_model,
            rho,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn poisson_examples() {
        let theta = ParamVector::default();
        let c = cfg(ObsModel::Poisson, 1.0);
        let lp = obs_log_density(0.0, &state_with_z(1.0), &theta, &c).unwrap();
        assert_relative_eq!(lp, -1.0, epsilon = 1e-14);
        let lp = obs_log_density(3.0, &state_with_z(2.0), &theta, &c).unwrap();
        assert_relative_eq!(lp, 3.0 * 2f64.ln() - 2.0 - 6f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn negbin_matches_direct_pmf() {
        // mu = 10, phi = 0.02: r = 50, p = 5/6, variance 12.
        let theta = ParamVector {
            phi: 0.02,
            ..Default::default()
        };
        let c = cfg(ObsModel::NegBin, 1.0);
        let x = state_with_z(10.0);
        assert_relative_eq!(obs_conditional_variance(&x, &theta, &c), 12.0, epsilon = 1e-12);
        let (r, p) = (50.0f64, 5.0f64 / 6.0);
        let mut total = 0.0;
        for y in 0..200u32 {
            let y = y as f64;
            let direct = ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0)
                + r * p.ln()
                + y * (1.0 - p).ln();
            let lp = obs_log_density(y, &x, &theta, &c).unwrap();
            assert_relative_eq!(lp, direct, epsilon = 1e-9);
            total += lp.exp();
        }
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_incidence_density() {
        let theta = ParamVector::default();
        let c = cfg(ObsModel::Poisson, 1.0);
        let lp0 = obs_log_density(0.0, &state_with_z(0.0), &theta, &c).unwrap();
        assert!(lp0.abs() < 1e-9);
        let lp5 = obs_log_density(5.0, &state_with_z(0.0), &theta, &c).unwrap();
        assert!(lp5 < -100.0 && lp5.is_finite());
    }

    #[test]
    fn negative_or_fractional_count_rejected() {
        let theta = ParamVector::default();
        let c = cfg(ObsModel::Poisson, 1.0);
        for y in [-1.0, 0.5, f64::NAN] {
            assert!(matches!(
                obs_log_density(y, &state_with_z(1.0), &theta, &c),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn conditional_variance_examples() {
        let theta = ParamVector {
            phi: 0.02,
            ..Default::default()
        };
        let x = state_with_z(100.0);
        assert_eq!(obs_conditional_variance(&x, &theta, &cfg(ObsModel::Poisson, 1.0)), 100.0);
        let x = state_with_z(200.0);
        assert_relative_eq!(
            obs_conditional_variance(&x, &theta, &cfg(ObsModel::NegBin, 0.5)),
            300.0,
            epsilon = 1e-12
        );
        assert_eq!(
            obs_conditional_variance(&state_with_z(0.0), &theta, &cfg(ObsModel::NegBin, 0.5)),
            0.0
        );
    }

    #[test]
    fn sampling_moments() {
        let mut rng = RngStream::new(11).rng();
        assert_eq!(
            obs_sample(&state_with_z(0.0), &ParamVector::default(), &cfg(ObsModel::NegBin, 1.0), &mut rng),
            0.0
        );

        let n = 100_000;
        let theta = ParamVector::default();
        let c = cfg(ObsModel::Poisson, 1.0);
        let x = state_with_z(1000.0);
        let mean = (0..n).map(|_| obs_sample(&x, &theta, &c, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1000.0).abs() < 5.0 * (1000.0 / n as f64).sqrt(), "mean {mean}");

        let theta = ParamVector {
            phi: 0.05,
            ..Default::default()
        };
        let c = cfg(ObsModel::NegBin, 1.0);
        let x = state_with_z(50.0);
        let draws: Vec<f64> = (0..n).map(|_| obs_sample(&x, &theta, &c, &mut rng)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((v - 175.0).abs() < 17.5, "variance {v}");
    }

    proptest! {
        // At phi = 1e-12 the exact gap to Poisson is phi/2 ((y - mu)^2 - y) to first
        // order, which reaches 5e-5 at mu = 1e4; the check is against that gap.
        #[test]
        fn negbin_tends_to_poisson(y in 0u32..=1000, mu in 1e-3f64..1e4) {
            let phi = 1e-12;
            let theta = ParamVector { phi, ..Default::default() };
            let x = state_with_z(mu);
            let nb = obs_log_density(y as f64, &x, &theta, &cfg(ObsModel::NegBin, 1.0)).unwrap();
            let po = obs_log_density(y as f64, &x, &theta, &cfg(ObsModel::Poisson, 1.0)).unwrap();
            let y = y as f64;
            let gap = 0.5 * phi * ((y - mu).powi(2) - y);
            prop_assert!((nb - po - gap).abs() <= 1e-6, "nb {} po {}", nb, po);
            prop_assert!((nb - po).abs() <= 1e-6 * po.abs().max(1.0));
        }
    }
}
