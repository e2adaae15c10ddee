//! Differential entropy of scalar samples.
//!
//! Both estimators work on order statistics `y(1) <= ... <= y(N)` and the
//! m-spacings `y(i+m) - y(i-m)`, with indices clamped to `[1, N]`. Vasicek
//! uses a constant coefficient of 2 in the denominator; Ebrahimi replaces it
//! near the boundaries with `1 + (i-1)/m` and `1 + (N-i)/m`. All values are
//! in nats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("spacing m = {m} is invalid for {n} samples (need 1 <= m < n/2)")]
    InvalidSpacing { m: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Vasicek,
    Ebrahimi,
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vasicek" => Ok(Self::Vasicek),
            "ebrahimi" => Ok(Self::Ebrahimi),
            other => Err(format!("unknown entropy estimator `{other}` (expected vasicek or ebrahimi)")),
        }
    }
}

/// Estimator choice plus an optional fixed spacing. With `m = None` the
/// spacing is `round(sqrt(N))` clamped to `[1, (N-1)/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyEstimator {
    pub kind: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl Default for EntropyEstimator {
    fn default() -> Self {
        Self { kind: EstimatorKind::Ebrahimi, m: None }
    }
}

impl EntropyEstimator {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, m: None }
    }

    pub fn with_spacing(kind: EstimatorKind, m: usize) -> Self {
        Self { kind, m: Some(m) }
    }

    pub fn spacing_for(&self, n: usize) -> usize {
        match self.m {
            Some(m) => m,
            None => default_spacing(n),
        }
    }

    /// Sorts a copy of `samples` and estimates its entropy.
    pub fn estimate(&self, samples: &[f64]) -> Result<f64, EntropyError> {
        check_samples(samples)?;
        let mut sorted = samples.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        self.estimate_sorted(&sorted)
    }

    /// Estimate from samples already in ascending order.
    pub fn estimate_sorted(&self, sorted: &[f64]) -> Result<f64, EntropyError> {
        let n = sorted.len();
        if n < 4 {
            return Err(EntropyError::TooFewSamples(n));
        }
        let m = self.spacing_for(n);
        if m == 0 || 2 * m >= n {
            return Err(EntropyError::InvalidSpacing { m, n });
        }
        let range = sorted[n - 1] - sorted[0];
        if !range.is_finite() {
            let index = sorted.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(EntropyError::NonFinite { index });
        }
        let floor = 1e-12 * (range + f64::MIN_POSITIVE);
        let nf = n as f64;
        let mf = m as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let hi = sorted[(i + m).min(n - 1)];
            let lo = sorted[i.saturating_sub(m)];
            let mut spacing = hi - lo;
            if spacing <= 0.0 {
                spacing = floor;
            }
            let coeff = match self.kind {
                EstimatorKind::Vasicek => 2.0,
                EstimatorKind::Ebrahimi => {
                    // 1-based position i + 1
                    if i < m {
                        1.0 + i as f64 / mf
                    } else if i >= n - m {
                        1.0 + (n - 1 - i) as f64 / mf
                    } else {
                        2.0
                    }
                }
            };
            acc += (nf / (coeff * mf) * spacing).ln();
        }
        Ok(acc / nf)
    }
}

fn check_samples(samples: &[f64]) -> Result<(), EntropyError> {
    if samples.len() < 4 {
        return Err(EntropyError::TooFewSamples(samples.len()));
    }
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(EntropyError::NonFinite { index });
    }
    Ok(())
}

/// `round(sqrt(n))`, clamped to `[1, (n-1)/2]`.
pub fn default_spacing(n: usize) -> usize {
    let m = (n as f64).sqrt().round() as usize;
    m.clamp(1, ((n.saturating_sub(1)) / 2).max(1))
}

/// Entropy of a normal distribution, `0.5 ln(2 pi e variance)`.
pub fn normal_entropy(variance: f64) -> Result<f64, EntropyError> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(EntropyError::NonPositiveVariance(variance));
    }
    Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * variance).ln())
}

/// Variance of the normal distribution whose entropy is `h`.
pub fn entropy_to_variance(h: f64) -> f64 {
    (2.0 * h).exp() / (2.0 * std::f64::consts::PI * std::f64::consts::E)
}

pub fn spacing_entropy(samples: &[f64], est: &EntropyEstimator) -> Result<f64, EntropyError> {
    est.estimate(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const HALF_LN_2PIE: f64 = 1.418_938_533_204_672_7;

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn normal_entropy_values() {
        assert!((normal_entropy(1.0).unwrap() - HALF_LN_2PIE).abs() < 1e-15);
        assert!((normal_entropy(1.0).unwrap() - 1.418939).abs() < 1e-6);
        let v = 0.37;
        let e2 = std::f64::consts::E.powi(2);
        assert!((normal_entropy(e2 * v).unwrap() - normal_entropy(v).unwrap() - 1.0).abs() < 1e-12);
        let direct = 0.5 * ((2.0 * std::f64::consts::PI).ln() + 1.0 + 1e6f64.ln());
        assert!((normal_entropy(1e6).unwrap() - direct).abs() < 1e-12);
        assert!((normal_entropy(1e6).unwrap() - 8.32671).abs() < 5e-5);
        assert!(normal_entropy(0.0).is_err());
        assert!(normal_entropy(-2.0).is_err());
        assert!((entropy_to_variance(normal_entropy(3.3).unwrap()) - 3.3).abs() < 1e-12);
    }

    #[test]
    fn spacing_defaults() {
        assert_eq!(default_spacing(100_000), 316);
        assert_eq!(default_spacing(1000), 32);
        assert_eq!(default_spacing(4), 1);
        assert_eq!(default_spacing(5), 2);
        assert_eq!(default_spacing(6), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let est = EntropyEstimator::default();
        assert_eq!(est.estimate(&[1.0, 2.0, 3.0]), Err(EntropyError::TooFewSamples(3)));
        assert_eq!(est.estimate(&[1.0, f64::NAN, 3.0, 4.0]), Err(EntropyError::NonFinite { index: 1 }));
        let wide = EntropyEstimator::with_spacing(EstimatorKind::Vasicek, 2);
        assert_eq!(wide.estimate(&[1.0, 2.0, 3.0, 4.0]), Err(EntropyError::InvalidSpacing { m: 2, n: 4 }));
    }

    #[test]
    fn hand_computed_small_case() {
        // N = 5, m = 1, samples already sorted: 0, 1, 3, 4, 8.
        let s = [0.0, 1.0, 3.0, 4.0, 8.0];
        let v = EntropyEstimator::with_spacing(EstimatorKind::Vasicek, 1).estimate(&s).unwrap();
        let spacings: [f64; 5] = [1.0 - 0.0, 3.0 - 0.0, 4.0 - 1.0, 8.0 - 3.0, 8.0 - 4.0];
        let expect_v: f64 = spacings.iter().map(|d| (5.0 / 2.0 * d).ln()).sum::<f64>() / 5.0;
        assert!((v - expect_v).abs() < 1e-14);
        let e = EntropyEstimator::with_spacing(EstimatorKind::Ebrahimi, 1).estimate(&s).unwrap();
        let coeffs: [f64; 5] = [1.0, 2.0, 2.0, 2.0, 1.0];
        let expect_e: f64 = spacings.iter().zip(coeffs).map(|(d, c)| (5.0 / c * d).ln()).sum::<f64>() / 5.0;
        assert!((e - expect_e).abs() < 1e-14);
    }

    #[test]
    fn normal_oracle() {
        let x = normal_draws(100_000, 11);
        for kind in [EstimatorKind::Vasicek, EstimatorKind::Ebrahimi] {
            let h = EntropyEstimator::new(kind).estimate(&x).unwrap();
            assert!((h - HALF_LN_2PIE).abs() < 0.02, "{kind:?}: {h}");
        }
    }

    #[test]
    fn uniform_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        for kind in [EstimatorKind::Vasicek, EstimatorKind::Ebrahimi] {
            let h = EntropyEstimator::new(kind).estimate(&x).unwrap();
            assert!(h.abs() < 0.02, "{kind:?}: {h}");
        }
    }

    #[test]
    fn ties_use_floor() {
        let x = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let h = EntropyEstimator::default().estimate(&x).unwrap();
        assert!(h.is_finite());
        assert!(entropy_to_variance(h) < 1e-300);
        let some_ties = [0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(EntropyEstimator::default().estimate(&some_ties).unwrap().is_finite());
    }

    #[test]
    fn error_shrinks_with_sample_count() {
        let mut medians = Vec::new();
        for (k, n) in [100usize, 1000, 10_000, 100_000].into_iter().enumerate() {
            let trials = if n == 100_000 { 10 } else { 50 };
            let mut errs: Vec<f64> = (0..trials)
                .map(|t| {
                    let x = normal_draws(n, 1000 * k as u64 + t);
                    (EntropyEstimator::default().estimate(&x).unwrap() - HALF_LN_2PIE).abs()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            medians.push(errs[errs.len() / 2]);
        }
        assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn affine_equivariance(seed in 0u64..10_000, a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], b in -1e3f64..1e3, n in 8usize..400) {
            let x = normal_draws(n, seed);
            for kind in [EstimatorKind::Vasicek, EstimatorKind::Ebrahimi] {
                let est = EntropyEstimator::new(kind);
                let h = est.estimate(&x).unwrap();
                let shifted: Vec<f64> = x.iter().map(|v| v + b).collect();
                let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
                prop_assert!((est.estimate(&shifted).unwrap() - h).abs() < 1e-9);
                prop_assert!((est.estimate(&scaled).unwrap() - h - a.abs().ln()).abs() < 1e-9);
            }
        }

        #[test]
        fn ebrahimi_not_below_vasicek(seed in 0u64..10_000, n in 4usize..300) {
            let x = normal_draws(n, seed);
            let v = EntropyEstimator::new(EstimatorKind::Vasicek).estimate(&x).unwrap();
            let e = EntropyEstimator::new(EstimatorKind::Ebrahimi).estimate(&x).unwrap();
            prop_assert!(e >= v);
        }
    }
}
