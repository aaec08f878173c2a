use rand::Rng;

use crate::error::{Error, Result};

/// Normalized importance weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    /// Equal weights over `n` entries.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Normalizes non-negative linear weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::DegenerateWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights("all weights are zero".into()));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `log(sum(exp(x)))`, log-zero for an empty or all-log-zero input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Exponentiates after subtracting the maximum, then normalizes.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<WeightVector> {
    if log_weights.is_empty() {
        return Err(Error::DegenerateWeights("empty weight vector".into()));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::DegenerateWeights(
            "log-weights contain NaN or +inf".into(),
        ));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights("all log-weights are log-zero".into()));
    }
    let unnorm: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(WeightVector {
        weights: unnorm.into_iter().map(|w| w / total).collect(),
    })
}

/// Effective sample size `1 / sum(w^2)`.
pub fn ess(weights: &WeightVector) -> f64 {
    1.0 / weights.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Stratified resampling with one uniform per stratum `[(k-1)/n, k/n)`.
/// Returns zero-based ancestor indices.
pub fn stratified_resample<R: Rng + ?Sized>(weights: &WeightVector, rng: &mut R) -> Vec<usize> {
    stratified_resample_n(weights, weights.len(), rng)
}

/// Stratified resampling producing `n` draws from the weighted set.
pub fn stratified_resample_n<R: Rng + ?Sized>(
    weights: &WeightVector,
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let uniforms: Vec<f64> = (0..n)
        .map(|k| (k as f64 + rng.random::<f64>()) / n as f64)
        .collect();
    stratified_indices(weights.as_slice(), &uniforms)
}

/// Inverts the cumulative weights at sorted points `uniforms`, one per
/// stratum. Zero-weight entries are never selected.
pub fn stratified_indices(weights: &[f64], uniforms: &[f64]) -> Vec<usize> {
    let last = weights.len() - 1;
    let mut out = Vec::with_capacity(uniforms.len());
    let mut i = 0;
    let mut cum = weights[0];
    for &u in uniforms {
        while i < last && (u > cum || weights[i] == 0.0) {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    // Rounding in the cumulative sum may leave the final stratum past the end;
    // such draws fell on the last positive-weight entry.
    if weights[last] == 0.0 {
        let fallback = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for a in out.iter_mut().filter(|a| **a == last) {
            *a = fallback;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn normalize_examples() {
        let w = normalize_log_weights(&[0.0, 0.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = normalize_log_weights(&[-1000.0, -1001.0]).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(w.as_slice()[0], e / (1.0 + e), epsilon = 1e-12);
        assert_relative_eq!(w.as_slice()[1], 1.0 / (1.0 + e), epsilon = 1e-12);
        assert_eq!(normalize_log_weights(&[-3.0]).unwrap().as_slice(), &[1.0]);
        assert!(matches!(
            normalize_log_weights(&[f64::NEG_INFINITY; 3]),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn ess_examples() {
        assert_relative_eq!(ess(&WeightVector::uniform(1000)), 1000.0, epsilon = 1e-9);
        let point = WeightVector::from_weights(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ess(&point), 1.0);
        let w = WeightVector::from_weights(&[0.75, 0.25]).unwrap();
        assert_relative_eq!(ess(&w), 1.6, epsilon = 1e-12);
    }

    #[test]
    fn equal_weights_give_identity() {
        let w = WeightVector::uniform(4);
        for seed in 0..50 {
            let mut rng = RngStream::new(seed).rng();
            assert_eq!(stratified_resample(&w, &mut rng), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn point_mass() {
        let w = WeightVector::from_weights(&[1.0, 0.0, 0.0]).unwrap();
        let mut rng = RngStream::new(1).rng();
        assert_eq!(stratified_resample(&w, &mut rng), vec![0, 0, 0]);
        let w = WeightVector::from_weights(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(stratified_resample(&w, &mut rng), vec![2, 2, 2]);
    }

    #[test]
    fn zero_weight_entries_are_skipped_at_boundaries() {
        assert_eq!(stratified_indices(&[0.0, 1.0], &[0.0, 0.5]), vec![1, 1]);
        assert_eq!(stratified_indices(&[0.5, 0.5, 0.0], &[0.25, 1.0]), vec![0, 1]);
    }

    #[test]
    fn two_strata_draw_each_once() {
        let w = WeightVector::from_weights(&[0.5, 0.5]).unwrap();
        let mut rng = RngStream::new(8).rng();
        for _ in 0..100_000 {
            assert_eq!(stratified_resample(&w, &mut rng), vec![0, 1]);
        }
    }
}
