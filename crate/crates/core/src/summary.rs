//! Weighted sample statistics.

use crate::error::{Error, Result};

/// Levels reported in every parameter summary.
pub const SUMMARY_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Weighted mean and standard deviation, weights normalized by their sum.
pub fn weighted_mean_sd(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum::<f64>()
        / total;
    (mean, var.max(0.0).sqrt())
}

/// Sorts `(value, weight)` pairs by value and returns them with cumulative
/// normalized weights, ready for repeated quantile queries.
#[derive(Clone, Debug)]
pub struct WeightedEcdf {
    values: Vec<f64>,
    cum: Vec<f64>,
}

impl WeightedEcdf {
    pub fn new(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return Err(Error::Domain(format!(
                "weighted sample needs matching non-empty inputs, got {} values and {} weights",
                values.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights("all weights are zero".into()));
        }
        let mut acc = 0.0;
        let mut cum = Vec::with_capacity(order.len());
        for &i in &order {
            acc += weights[i] / total;
            cum.push(acc);
        }
        Ok(Self {
            values: order.iter().map(|&i| values[i]).collect(),
            cum,
        })
    }

    /// `inf { x : F(x) >= p }`.
    pub fn quantile(&self, p: f64) -> f64 {
        // A relative slack keeps exact-boundary levels such as 0.5 on the
        // lower atom despite rounding in the cumulative sum.
        let target = p * (1.0 - 1e-12);
        let idx = self.cum.partition_point(|&c| c < target);
        self.values[idx.min(self.values.len() - 1)]
    }
}

pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> Result<f64> {
    Ok(WeightedEcdf::new(values, weights)?.quantile(p))
}
