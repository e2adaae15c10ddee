#![allow(dead_code)]

use seqdesign::MeasurementModel;

/// `y = theta * d`, for which a normal prior is conjugate.
pub struct LinearModel;

impl MeasurementModel for LinearModel {
    fn param_dim(&self) -> usize {
        1
    }

    fn setting_dim(&self) -> usize {
        1
    }

    fn eval(&self, theta: &[f64], setting: &[f64]) -> f64 {
        theta[0] * setting[0]
    }
}

/// Always NaN; every Bayes update with it is degenerate.
pub struct BrokenModel;

impl MeasurementModel for BrokenModel {
    fn param_dim(&self) -> usize {
        1
    }

    fn setting_dim(&self) -> usize {
        1
    }

    fn eval(&self, _theta: &[f64], _setting: &[f64]) -> f64 {
        f64::NAN
    }
}

/// Posterior mean and variance of `theta` for `y_i = theta d_i + N(0, s^2)`
/// under a `N(m0, v0)` prior.
pub fn conjugate_posterior(m0: f64, v0: f64, noise_var: f64, data: &[(f64, f64)]) -> (f64, f64) {
    let mut precision = 1.0 / v0;
    let mut shift = m0 / v0;
    for &(d, y) in data {
        precision += d * d / noise_var;
        shift += d * y / noise_var;
    }
    (shift / precision, 1.0 / precision)
}

/// Upper `p` quantile of chi-square with `k` degrees of freedom
/// (Wilson-Hilferty), given the standard normal quantile `z_p`.
pub fn chi2_upper(k: f64, z_p: f64) -> f64 {
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + z_p * a.sqrt()).powi(3)
}
