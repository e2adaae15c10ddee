//! Measurement models, the Gaussian noise likelihood and closed-form
//! Cramér-Rao reference bounds for the two built-in experiments.
//!
//! A model maps a parameter vector `theta` and a setting vector `d` to the
//! mean measurement value. Everything here is a pure function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::utility::DesignSpace;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model constant `{name}`: {reason}")]
    InvalidConstant { name: &'static str, reason: String },
    #[error("sample count must be at least 1")]
    ZeroCount,
}

/// Deterministic mean-value model `f(theta, d)`.
pub trait MeasurementModel: Send + Sync {
    /// Number of unknown parameters.
    fn param_dim(&self) -> usize;
    /// Number of components in one setting vector.
    fn setting_dim(&self) -> usize;
    fn eval(&self, theta: &[f64], setting: &[f64]) -> f64;

    fn param_names(&self) -> Vec<String> {
        (0..self.param_dim()).map(|k| format!("p{k}")).collect()
    }

    fn setting_names(&self) -> Vec<String> {
        (0..self.setting_dim()).map(|k| format!("d{k}")).collect()
    }
}

/// Gaussian measurement noise with a known standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Result<Self, ModelError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::InvalidConstant {
                name: "sigma",
                reason: format!("noise standard deviation must be positive and finite, got {sigma}"),
            });
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub b: f64,
    pub a: f64,
    pub delta: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyParams {
    pub h: f64,
    pub c: f64,
    pub omega0: f64,
    pub t2: f64,
}

/// `b + a / (((x - x0) / delta)^2 + 1)`
#[inline]
pub fn lorentzian_eval(p: &LorentzianParams, x: f64) -> f64 {
    let u = (x - p.x0) / p.delta;
    p.b + p.a / (u * u + 1.0)
}

/// `h + c sin(omega0 tau) exp(-(tau / t2)^2)`
#[inline]
pub fn ramsey_eval(p: &RamseyParams, tau: f64) -> f64 {
    let r = tau / p.t2;
    p.h + p.c * (p.omega0 * tau).sin() * (-(r * r)).exp()
}

/// Log of the normal density of `y` around `mean`. Callers exponentiate
/// after subtracting a running maximum.
#[inline]
pub fn gaussian_log_likelihood(y: f64, mean: f64, noise: &NoiseSpec) -> f64 {
    let r = (y - mean) / noise.sigma;
    -0.5 * r * r - ((2.0 * std::f64::consts::PI).sqrt() * noise.sigma).ln()
}

/// Lower bound on the standard deviation of the peak center after `n`
/// measurements at the optimal offsets `x0 +- delta / sqrt(3)`.
pub fn lorentzian_cramer_rao(p: &LorentzianParams, noise: &NoiseSpec, n: u64) -> Result<f64, ModelError> {
    if p.a == 0.0 || !p.a.is_finite() {
        return Err(ModelError::InvalidConstant {
            name: "a",
            reason: "amplitude must be nonzero".into(),
        });
    }
    if n == 0 {
        return Err(ModelError::ZeroCount);
    }
    let k = 8.0 / (3.0 * 3f64.sqrt());
    Ok(k * (p.delta / p.a.abs()) * noise.sigma / (n as f64).sqrt())
}

/// Lower bound on the standard deviation of `omega0` for `n` repeated
/// measurements at `tau = t2 / sqrt(2)` on a zero crossing.
pub fn ramsey_cramer_rao(p: &RamseyParams, noise: &NoiseSpec, n: u64) -> Result<f64, ModelError> {
    if p.c == 0.0 || !p.c.is_finite() {
        return Err(ModelError::InvalidConstant {
            name: "c",
            reason: "contrast must be nonzero".into(),
        });
    }
    if !(p.t2 > 0.0) {
        return Err(ModelError::InvalidConstant {
            name: "t2",
            reason: "dephasing time must be positive".into(),
        });
    }
    if n == 0 {
        return Err(ModelError::ZeroCount);
    }
    Ok((2.0 * std::f64::consts::E).sqrt() / (p.c.abs() * p.t2) * noise.sigma / (n as f64).sqrt())
}

/// Lorentzian dip with fixed background, amplitude and half-width; the
/// single unknown parameter is the center `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianModel {
    pub b: f64,
    pub a: f64,
    pub delta: f64,
}

impl LorentzianModel {
    pub fn new(b: f64, a: f64, delta: f64) -> Result<Self, ModelError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(ModelError::InvalidConstant {
                name: "delta",
                reason: format!("half-width must be positive, got {delta}"),
            });
        }
        if !b.is_finite() || !a.is_finite() {
            return Err(ModelError::InvalidConstant {
                name: "a",
                reason: "background and amplitude must be finite".into(),
            });
        }
        Ok(Self { b, a, delta })
    }

    pub fn params(&self, x0: f64) -> LorentzianParams {
        LorentzianParams { b: self.b, a: self.a, delta: self.delta, x0 }
    }
}

impl MeasurementModel for LorentzianModel {
    fn param_dim(&self) -> usize {
        1
    }

    fn setting_dim(&self) -> usize {
        1
    }

    #[inline]
    fn eval(&self, theta: &[f64], setting: &[f64]) -> f64 {
        let u = (setting[0] - theta[0]) / self.delta;
        self.b + self.a / (u * u + 1.0)
    }

    fn param_names(&self) -> Vec<String> {
        vec!["x0".into()]
    }

    fn setting_names(&self) -> Vec<String> {
        vec!["x".into()]
    }
}

/// Decaying sinusoid with all four parameters `{h, c, omega0, t2}` unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RamseyModel;

impl MeasurementModel for RamseyModel {
    fn param_dim(&self) -> usize {
        4
    }

    fn setting_dim(&self) -> usize {
        1
    }

    #[inline]
    fn eval(&self, theta: &[f64], setting: &[f64]) -> f64 {
        let tau = setting[0];
        let r = tau / theta[3];
        theta[0] + theta[1] * (theta[2] * tau).sin() * (-(r * r)).exp()
    }

    fn param_names(&self) -> Vec<String> {
        vec!["h".into(), "c".into(), "omega0".into(), "t2".into()]
    }

    fn setting_names(&self) -> Vec<String> {
        vec!["tau".into()]
    }
}

/// Row-major matrix of simulated outcomes: one row per candidate design,
/// one column per parameter sample.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMatrix {
    n_designs: usize,
    n_samples: usize,
    data: Vec<f64>,
}

impl OutcomeMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_designs = rows.len();
        let n_samples = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_samples), "ragged outcome rows");
        Self { n_designs, n_samples, data: rows.into_iter().flatten().collect() }
    }

    pub(crate) fn from_flat(n_designs: usize, n_samples: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n_designs * n_samples);
        Self { n_designs, n_samples, data }
    }

    pub fn n_designs(&self) -> usize {
        self.n_designs
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_samples.max(1)).take(self.n_designs)
    }

    pub fn get(&self, design: usize, sample: usize) -> f64 {
        self.data[design * self.n_samples + sample]
    }

    pub(crate) fn rows_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.data.chunks_exact_mut(self.n_samples.max(1))
    }
}

/// Parameter samples stored row-major, `dim` values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSamples {
    dim: usize,
    data: Vec<f64>,
}

impl ParamSamples {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "sample buffer does not match dimension");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

const PAR_GRID_MIN: usize = 1 << 16;

/// Model means for every (design, parameter sample) pair.
pub fn eval_grid<M: MeasurementModel + ?Sized>(model: &M, thetas: &ParamSamples, designs: &DesignSpace) -> OutcomeMatrix {
    let n_s = thetas.len();
    let n_d = designs.len();
    let mut data = vec![0.0; n_s * n_d];
    let fill = |(i, row): (usize, &mut [f64])| {
        let d = designs.get(i);
        for (out, theta) in row.iter_mut().zip(thetas.rows()) {
            *out = model.eval(theta, d);
        }
    };
    if n_s == 0 {
        return OutcomeMatrix::from_flat(n_d, 0, data);
    }
    if n_s * n_d >= PAR_GRID_MIN {
        data.par_chunks_mut(n_s).enumerate().for_each(fill);
    } else {
        data.chunks_mut(n_s).enumerate().for_each(fill);
    }
    OutcomeMatrix::from_flat(n_d, n_s, data)
}
