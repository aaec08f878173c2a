//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use esmc2::ssm::{LinearGaussian, StateSpaceModel};
use esmc2::stochastic::StreamRng;
use esmc2::Result;
use rand::Rng;

/// Exact log-likelihood of a scalar linear-Gaussian model by the Kalman filter.
pub fn kalman_loglik(m: &LinearGaussian, obs: &[f64]) -> f64 {
    let (mut mean, mut var) = (m.m0, m.s0 * m.s0);
    let r2 = m.r * m.r;
    let mut ll = 0.0;
    for &y in obs {
        mean *= m.a;
        var = m.a * m.a * var + m.q * m.q;
        let s = var + r2;
        let e = y - mean;
        ll += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + e * e / s);
        let k = var / s;
        mean += k * e;
        var *= 1.0 - k;
    }
    ll
}

/// Two-state hidden Markov chain with Gaussian emissions.
#[derive(Clone, Copy, Debug)]
pub struct TwoStateHmm {
    /// `p_stay[k]`: probability of staying in state k.
    pub p_stay: [f64; 2],
    pub init: f64,
    pub means: [f64; 2],
    pub sd: f64,
}

impl TwoStateHmm {
    fn emission(&self, y: f64, k: usize) -> f64 {
        let z = (y - self.means[k]) / self.sd;
        -0.5 * z * z - (self.sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }

    /// Exact log-likelihood by the forward recursion.
    pub fn forward_loglik(&self, obs: &[f64]) -> f64 {
        let mut p = [self.init, 1.0 - self.init];
        let mut ll = 0.0;
        for &y in obs {
            let pred = [
                p[0] * self.p_stay[0] + p[1] * (1.0 - self.p_stay[1]),
                p[0] * (1.0 - self.p_stay[0]) + p[1] * self.p_stay[1],
            ];
            let joint = [
                pred[0] * self.emission(y, 0).exp(),
                pred[1] * self.emission(y, 1).exp(),
            ];
            let c = joint[0] + joint[1];
            ll += c.ln();
            p = [joint[0] / c, joint[1] / c];
        }
        ll
    }

    pub fn simulate(&self, t: usize, rng: &mut StreamRng) -> Vec<f64> {
        let mut x = self.sample_initial(rng);
        (0..t)
            .map(|_| {
                x = self.transition(&x, rng).unwrap();
                self.sample_obs(&x, rng)
            })
            .collect()
    }
}

impl StateSpaceModel for TwoStateHmm {
    type State = usize;

    fn sample_initial(&self, rng: &mut StreamRng) -> usize {
        usize::from(rng.random::<f64>() >= self.init)
    }

    fn transition(&self, x: &usize, rng: &mut StreamRng) -> Result<usize> {
        let stay = rng.random::<f64>() < self.p_stay[*x];
        Ok(if stay { *x } else { 1 - *x })
    }

    fn obs_log_density(&self, y: f64, x: &usize) -> Result<f64> {
        Ok(self.emission(y, *x))
    }

    fn sample_obs(&self, x: &usize, rng: &mut StreamRng) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        self.means[*x] + self.sd * z
    }
}

/// Sigma level of a single two-sided test whose error rate is shared by a family.
pub const MC_SIGMAS_FAMILY: f64 = 3.0;

/// Per-test z threshold that splits the two-sided error rate of a `sigmas`
/// test evenly over `k` tests.
pub fn family_z(sigmas: f64, k: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let std = Normal::standard();
    let alpha = 2.0 * std.cdf(-sigmas);
    -std.inverse_cdf(alpha / (2.0 * k as f64))
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Exact law of the stratified resampler: stratum k is uniform on
/// `[k/n, (k+1)/n)`, so its outcome probabilities are the overlaps of that
/// interval with each index's cumulative-weight cell. Returns
/// `(index, probability, midpoint of the overlap)`.
fn stratum_law(weights: &[f64], k: usize) -> Vec<(usize, f64, f64)> {
    let n = weights.len() as f64;
    let (a, b) = (k as f64 / n, (k + 1) as f64 / n);
    let mut out = Vec::new();
    let mut lo = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        let hi = lo + w;
        let (l, h) = (lo.max(a), hi.min(b));
        if h > l {
            out.push((j, (h - l) * n, 0.5 * (l + h)));
        }
        lo = hi;
    }
    out
}

/// Enumerates the joint law of copy counts for normalized weights `w` and
/// checks the resampler against it: each stratum lands where its uniform
/// falls, expected copies are exactly `n w_j`, counts stay within one of
/// `n w_j` and zero weights are never drawn.
pub fn check_stratified_exact(w: &[f64]) -> std::result::Result<(), String> {
    use esmc2::stochastic::stratified_indices;
    let n = w.len();
    let mut dist: Vec<(Vec<usize>, f64)> = vec![(vec![0; n], 1.0)];
    for k in 0..n {
        let law = stratum_law(w, k);
        let total: f64 = law.iter().map(|o| o.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("stratum {k} law sums to {total}"));
        }
        for &(j, _, mid) in &law {
            let u: Vec<f64> = (0..n)
                .map(|m| match m.cmp(&k) {
                    std::cmp::Ordering::Less => m as f64 / n as f64,
                    std::cmp::Ordering::Equal => mid,
                    std::cmp::Ordering::Greater => (m as f64 + 0.5) / n as f64,
                })
                .collect();
            let got = stratified_indices(w, &u)[k];
            if got != j {
                return Err(format!("w={w:?}: stratum {k} at {mid} drew {got}, expected {j}"));
            }
        }
        let mut next = Vec::with_capacity(dist.len() * law.len());
        for (counts, p) in &dist {
            for &(j, q, _) in &law {
                let mut c = counts.clone();
                c[j] += 1;
                next.push((c, p * q));
            }
        }
        dist = next;
    }
    for j in 0..n {
        let nw = n as f64 * w[j];
        let expected: f64 = dist.iter().map(|(c, p)| c[j] as f64 * p).sum();
        if (expected - nw).abs() > 1e-9 {
            return Err(format!("w={w:?}: E[copies of {j}] = {expected}, n w = {nw}"));
        }
        let (lo, hi) = ((nw.floor() - 1.0).max(0.0), nw.ceil() + 1.0);
        for (c, p) in dist.iter().filter(|(_, p)| *p > 0.0) {
            let cj = c[j] as f64;
            if cj < lo || cj > hi || (w[j] == 0.0 && c[j] > 0) {
                return Err(format!("w={w:?}: {} copies of {j} with probability {p}", c[j]));
            }
        }
    }
    Ok(())
}

/// Jitters a correlated weighted cloud with the shrinkage kernel and checks
/// that its weighted mean and covariance are unchanged in expectation. The
/// 12 moments share the two-sided error rate of a single 3-sigma test.
pub fn check_kernel_moments(seed: u64, delta: f64) -> std::result::Result<(), String> {
    use esmc2::liuwest::kernel_jitter;
    use esmc2::stochastic::RngStream;
    let mut rng = RngStream::new(seed).rng();
    let (n, d, reps) = (400, 3, 400u64);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a: f64 = rng.random::<f64>() * 2.0;
            vec![a, 0.5 * a + rng.random::<f64>(), rng.random::<f64>().powi(3)]
        })
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let moments = |pts: &[Vec<f64>]| {
        let mean: Vec<f64> = (0..d).map(|k| pts.iter().zip(&w).map(|(p, w)| w * p[k]).sum()).collect();
        let mut flat = mean.clone();
        for a in 0..d {
            for b in 0..d {
                flat.push(pts.iter().zip(&w).map(|(p, w)| w * (p[a] - mean[a]) * (p[b] - mean[b])).sum());
            }
        }
        flat
    };
    let mut target = moments(&points);
    // The jittered mean carries kernel noise, which shrinks the weighted
    // covariance about it by h^2 V sum(w^2).
    let (h2, _) = esmc2::liuwest::shrinkage_constants(delta).map_err(|e| e.to_string())?;
    let sum_w2: f64 = w.iter().map(|v| v * v).sum();
    for v in target.iter_mut().skip(d) {
        *v *= 1.0 - h2 * sum_w2;
    }
    let z_max = family_z(MC_SIGMAS_FAMILY, target.len());
    let mut draws = vec![Vec::with_capacity(reps as usize); target.len()];
    for r in 0..reps {
        let jittered = kernel_jitter(&points, &w, delta, &mut RngStream::new(seed).derive(&[1, r]).rng())
            .map_err(|e| e.to_string())?;
        for (slot, v) in draws.iter_mut().zip(moments(&jittered)) {
            slot.push(v);
        }
    }
    for (k, (xs, &t)) in draws.iter().zip(&target).enumerate() {
        let (mean, se) = mean_se(xs);
        if (mean - t).abs() > z_max * se + 1e-12 {
            return Err(format!("moment {k}: {mean} vs {t} (se {se}, limit {z_max:.2} se)"));
        }
    }
    Ok(())
}
