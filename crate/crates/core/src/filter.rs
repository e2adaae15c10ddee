//! Particle-filter representation of a parameter distribution.
//!
//! Weights are updated in log space, renormalized, and the ensemble is
//! resampled (multinomially, with Gaussian jitter of covariance `alpha * C`)
//! whenever the effective sample size drops below `threshold * N_p`.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{EntropyError, EntropyEstimator};
use crate::models::{gaussian_log_likelihood, MeasurementModel, NoiseSpec, ParamSamples};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("a particle filter needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("prior sampler returned {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid filter setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("degenerate update: no particle has a finite posterior weight (y = {y})")]
    DegenerateUpdate { y: f64 },
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Resample when `N_eff < resample_threshold * N_p`.
    pub resample_threshold: f64,
    /// Jitter covariance scale relative to the ensemble covariance.
    pub jitter_alpha: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { resample_threshold: 0.5, jitter_alpha: 0.01 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(FilterError::InvalidConfig {
                name: "resample_ratio",
                reason: format!("must lie in (0, 1], got {}", self.resample_threshold),
            });
        }
        if !(self.jitter_alpha.is_finite() && self.jitter_alpha > 0.0) {
            return Err(FilterError::InvalidConfig {
                name: "alpha",
                reason: format!("must be positive, got {}", self.jitter_alpha),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    /// Row-major `D x D`.
    pub covariance: Vec<f64>,
    pub marginal_std: Vec<f64>,
    pub marginal_entropy: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateReport {
    pub resampled: bool,
    pub reweight_time: Duration,
    pub resample_time: Duration,
}

#[derive(Debug, Clone)]
pub struct ParticleFilter {
    dim: usize,
    particles: Vec<f64>,
    weights: Vec<f64>,
    config: FilterConfig,
    scale: Vec<f64>,
    rng: ChaCha8Rng,
}

/// Largest supported parameter dimension; covariance storage is `dim^2`.
pub const MAX_DIM: usize = 256;

impl ParticleFilter {
    /// Draws `n_particles` independent samples from `prior` with uniform
    /// weights. `rng` supplies the initial draws and afterwards drives
    /// resampling and jitter.
    pub fn from_prior<F>(
        dim: usize,
        n_particles: usize,
        config: FilterConfig,
        mut rng: ChaCha8Rng,
        mut prior: F,
    ) -> Result<Self, FilterError>
    where
        F: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    {
        if n_particles < 2 {
            return Err(FilterError::TooFewParticles(n_particles));
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(FilterError::DimensionMismatch { expected: MAX_DIM, got: dim });
        }
        config.validate()?;
        let mut particles = Vec::with_capacity(n_particles * dim);
        for _ in 0..n_particles {
            let theta = prior(&mut rng);
            if theta.len() != dim {
                return Err(FilterError::DimensionMismatch { expected: dim, got: theta.len() });
            }
            particles.extend_from_slice(&theta);
        }
        let weights = vec![1.0 / n_particles as f64; n_particles];
        Self::assemble(dim, particles, weights, config, rng)
    }

    /// Builds a filter from explicit particles and (unnormalized) weights.
    pub fn from_particles(
        dim: usize,
        particles: Vec<f64>,
        weights: Vec<f64>,
        config: FilterConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self, FilterError> {
        config.validate()?;
        if dim > MAX_DIM {
            return Err(FilterError::InvalidSnapshot(format!("at most {MAX_DIM} parameters are supported, got {dim}")));
        }
        if dim == 0 || particles.len() % dim != 0 {
            return Err(FilterError::DimensionMismatch { expected: dim, got: particles.len() });
        }
        let n = particles.len() / dim;
        if n < 2 {
            return Err(FilterError::TooFewParticles(n));
        }
        if weights.len() != n {
            return Err(FilterError::DimensionMismatch { expected: n, got: weights.len() });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FilterError::InvalidSnapshot("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(FilterError::InvalidSnapshot("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::assemble(dim, particles, weights, config, rng)
    }

    fn assemble(
        dim: usize,
        particles: Vec<f64>,
        weights: Vec<f64>,
        config: FilterConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self, FilterError> {
        if particles.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::InvalidSnapshot("particles must be finite".into()));
        }
        let mut filter = Self { dim, particles, weights, config, scale: vec![1.0; dim], rng };
        let mean = filter.weighted_mean();
        let cov = filter.weighted_covariance();
        filter.scale = (0..dim)
            .map(|k| {
                let s = cov[k * dim + k].sqrt().max(mean[k].abs());
                if s > 0.0 && s.is_finite() { s } else { 1.0 }
            })
            .collect();
        Ok(filter)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.particles.chunks_exact(self.dim)
    }

    /// `1 / sum(w_i^2)`
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn needs_resample(&self) -> bool {
        self.effective_sample_size() < self.config.resample_threshold * self.len() as f64
    }

    /// Multiplies each weight by the likelihood of `y` and renormalizes.
    pub fn reweight<M: MeasurementModel + ?Sized>(
        &mut self,
        y: f64,
        setting: &[f64],
        model: &M,
        noise: &NoiseSpec,
    ) -> Result<(), FilterError> {
        let mut log_w: Vec<f64> = self
            .particles
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(theta, &w)| w.ln() + gaussian_log_likelihood(y, model.eval(theta, setting), noise))
            .collect();
        let max = log_w.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(FilterError::DegenerateUpdate { y });
        }
        let mut total = 0.0;
        for lw in log_w.iter_mut() {
            *lw = if lw.is_nan() { 0.0 } else { (*lw - max).exp() };
            total += *lw;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(FilterError::DegenerateUpdate { y });
        }
        for (w, u) in self.weights.iter_mut().zip(log_w) {
            *w = u / total;
        }
        Ok(())
    }

    /// Bayes update followed by the resampling check.
    pub fn bayes_update<M: MeasurementModel + ?Sized>(
        &mut self,
        y: f64,
        setting: &[f64],
        model: &M,
        noise: &NoiseSpec,
    ) -> Result<UpdateReport, FilterError> {
        let start = Instant::now();
        self.reweight(y, setting, model, noise)?;
        let reweight_time = start.elapsed();
        let mut report = UpdateReport { resampled: false, reweight_time, resample_time: Duration::ZERO };
        if self.needs_resample() {
            let start = Instant::now();
            self.resample();
            report.resampled = true;
            report.resample_time = start.elapsed();
        }
        Ok(report)
    }

    /// Multinomial resampling with multivariate-normal jitter of covariance
    /// `alpha * C`, where `C` is the weighted covariance before resampling.
    pub fn resample(&mut self) {
        let dim = self.dim;
        let n = self.len();
        let cov = self.weighted_covariance();
        let chol = self.jitter_factor(&cov);

        let index = WeightedIndex::new(&self.weights).expect("weights are normalized");
        let mut fresh = Vec::with_capacity(self.particles.len());
        let mut z = vec![0.0; dim];
        for _ in 0..n {
            let src = index.sample(&mut self.rng);
            for zk in z.iter_mut() {
                *zk = StandardNormal.sample(&mut self.rng);
            }
            let base = &self.particles[src * dim..(src + 1) * dim];
            for r in 0..dim {
                let mut delta = 0.0;
                for c in 0..=r {
                    delta += chol[r * dim + c] * z[c];
                }
                fresh.push(base[r] + delta);
            }
        }
        self.particles = fresh;
        self.weights.fill(1.0 / n as f64);
    }

    /// Lower-triangular factor `L` with `L L^T = alpha C`, falling back to a
    /// floored diagonal when `C` is not positive definite.
    fn jitter_factor(&self, cov: &[f64]) -> Vec<f64> {
        let dim = self.dim;
        let alpha = self.config.jitter_alpha;
        let scaled = DMatrix::from_row_slice(dim, dim, cov).map(|v| v * alpha);
        if let Some(chol) = scaled.clone().cholesky() {
            let l = chol.l();
            if l.iter().all(|v| v.is_finite()) {
                let mut out = vec![0.0; dim * dim];
                for r in 0..dim {
                    for c in 0..=r {
                        out[r * dim + c] = l[(r, c)];
                    }
                }
                return out;
            }
        }
        let mut out = vec![0.0; dim * dim];
        for k in 0..dim {
            // sqrt(alpha * max(C_kk, eps^2)), kept in std units to avoid overflow
            let eps = 1e-9 * self.scale[k];
            out[k * dim + k] = alpha.sqrt() * cov[k * dim + k].max(0.0).sqrt().max(eps);
        }
        out
    }

    /// `n` independent weighted draws (with replacement) of whole parameter vectors.
    pub fn sample_parameters<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> ParamSamples {
        let index = WeightedIndex::new(&self.weights).expect("weights are normalized");
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            data.extend_from_slice(self.particle(index.sample(rng)));
        }
        ParamSamples::new(self.dim, data)
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (theta, w) in self.particles.chunks_exact(self.dim).zip(&self.weights) {
            for (m, t) in mean.iter_mut().zip(theta) {
                *m += w * t;
            }
        }
        mean
    }

    /// Weighted second central moment, row-major `D x D`, no bias correction.
    pub fn weighted_covariance(&self) -> Vec<f64> {
        let dim = self.dim;
        // Deviations are taken about the first particle, then about their
        // own mean, so identical particles give an exactly zero result.
        let origin = &self.particles[..dim];
        let mut shift = vec![0.0; dim];
        for (theta, w) in self.particles.chunks_exact(dim).zip(&self.weights) {
            for k in 0..dim {
                shift[k] += w * (theta[k] - origin[k]);
            }
        }
        let mut cov = vec![0.0; dim * dim];
        let mut dev = vec![0.0; dim];
        for (theta, w) in self.particles.chunks_exact(dim).zip(&self.weights) {
            for k in 0..dim {
                dev[k] = (theta[k] - origin[k]) - shift[k];
            }
            for r in 0..dim {
                for c in 0..=r {
                    cov[r * dim + c] += w * dev[r] * dev[c];
                }
            }
        }
        for r in 0..dim {
            for c in 0..r {
                cov[c * dim + r] = cov[r * dim + c];
            }
        }
        cov
    }

    /// Mean, covariance and per-parameter standard deviations, plus the
    /// spacing-estimator entropy of `n_draws` weighted draws per parameter.
    pub fn summarize<R: Rng + ?Sized>(
        &self,
        estimator: &EntropyEstimator,
        n_draws: usize,
        rng: &mut R,
    ) -> Result<PosteriorSummary, FilterError> {
        let mean = self.weighted_mean();
        let covariance = self.weighted_covariance();
        let marginal_std = (0..self.dim).map(|k| covariance[k * self.dim + k].max(0.0).sqrt()).collect();
        let mut marginal_entropy = Vec::with_capacity(self.dim);
        let mut draws = Vec::with_capacity(n_draws);
        for k in 0..self.dim {
            self.sorted_marginal_draws(k, n_draws, rng, &mut draws);
            marginal_entropy.push(estimator.estimate_sorted(&draws)?);
        }
        Ok(PosteriorSummary { mean, covariance, marginal_std, marginal_entropy })
    }

    /// Fills `out` with `n` weighted draws of parameter `k`, in ascending
    /// order. Sorted uniforms come from normalized exponential spacings, so
    /// the draws never need sorting themselves.
    pub fn sorted_marginal_draws<R: Rng + ?Sized>(&self, k: usize, n: usize, rng: &mut R, out: &mut Vec<f64>) {
        let mut pairs: Vec<(f64, f64)> = self
            .particles
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(theta, &w)| (theta[k], w))
            .collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut gaps: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = gaps.iter().sum();
        gaps.pop();

        out.clear();
        let mut u = 0.0;
        let mut cum = 0.0;
        let mut idx = 0;
        let last = pairs.len() - 1;
        for g in gaps {
            u += g / total;
            while idx < last && cum + pairs[idx].1 < u {
                cum += pairs[idx].1;
                idx += 1;
            }
            out.push(pairs[idx].0);
        }
    }

    pub fn snapshot(&self) -> FilterSnapshot {
        FilterSnapshot {
            dim: self.dim,
            particles: self.particles.clone(),
            weights: self.weights.clone(),
            config: self.config,
            scale: self.scale.clone(),
            rng: RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
        }
    }

    pub fn from_snapshot(snap: FilterSnapshot) -> Result<Self, FilterError> {
        let word_pos: u128 = snap
            .rng
            .word_pos
            .parse()
            .map_err(|_| FilterError::InvalidSnapshot(format!("bad rng word position `{}`", snap.rng.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(snap.rng.seed);
        rng.set_stream(snap.rng.stream);
        rng.set_word_pos(word_pos);
        if snap.scale.len() != snap.dim || snap.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(FilterError::InvalidSnapshot("scale must hold one positive value per parameter".into()));
        }
        let mut filter = Self::from_particles(snap.dim, snap.particles, snap.weights, snap.config, rng)?;
        filter.scale = snap.scale;
        Ok(filter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal `u128`; JSON numbers cannot hold it exactly.
    pub word_pos: String,
}

/// Serializable filter state: particles, weights and the resampling RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSnapshot {
    pub dim: usize,
    pub particles: Vec<f64>,
    pub weights: Vec<f64>,
    pub config: FilterConfig,
    pub scale: Vec<f64>,
    pub rng: RngState,
}

impl FilterSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    /// Parses and validates a snapshot document.
    pub fn decode(bytes: &[u8]) -> Result<ParticleFilter, FilterError> {
        let snap: FilterSnapshot =
            serde_json::from_slice(bytes).map_err(|e| FilterError::InvalidSnapshot(e.to_string()))?;
        ParticleFilter::from_snapshot(snap)
    }
}

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
