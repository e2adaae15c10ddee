//! Utility algorithms over a finite design space.
//!
//! Every algorithm scores a candidate by how much the spread of predicted
//! outcomes (over parameter draws from the current posterior) exceeds the
//! measurement noise. One set of parameter draws, and for KLD one set of
//! noise draws, is reused across all candidates.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{entropy_to_variance, normal_entropy, EntropyError, EntropyEstimator};
use crate::filter::ParticleFilter;
use crate::models::{eval_grid, MeasurementModel, NoiseSpec, OutcomeMatrix, ParamSamples};

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("design space is empty")]
    EmptyDesignSpace,
    #[error("design setting {index} is duplicated or not finite")]
    InvalidSetting { index: usize },
    #[error("design values do not match setting dimension {dim}")]
    DimensionMismatch { dim: usize },
    #[error("`n_samples` must be at least {min} for {algorithm}, got {got}")]
    TooFewSamples { algorithm: &'static str, min: usize, got: usize },
    #[error("unknown utility algorithm `{0}` (expected kld, variance, pseudo, maxmin or random)")]
    UnknownAlgorithm(String),
    #[error("non-finite utility at design {index}")]
    NonFinite { index: usize },
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

/// Ordered list of distinct candidate settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    dim: usize,
    values: Vec<f64>,
}

impl DesignSpace {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self, UtilityError> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(UtilityError::DimensionMismatch { dim });
        }
        if values.is_empty() {
            return Err(UtilityError::EmptyDesignSpace);
        }
        let n = values.len() / dim;
        if let Some(i) = (0..values.len()).find(|&i| !values[i].is_finite()) {
            return Err(UtilityError::InvalidSetting { index: i / dim });
        }
        // Sort indices to find duplicates in O(n log n).
        let mut order: Vec<usize> = (0..n).collect();
        let row = |i: usize| &values[i * dim..(i + 1) * dim];
        order.sort_by(|&a, &b| {
            row(a).iter().zip(row(b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        if let Some(w) = order.windows(2).find(|w| row(w[0]) == row(w[1])) {
            return Err(UtilityError::InvalidSetting { index: w[0].max(w[1]) });
        }
        Ok(Self { dim, values })
    }

    pub fn from_scalars(values: Vec<f64>) -> Result<Self, UtilityError> {
        Self::new(1, values)
    }

    /// `count` evenly spaced scalar settings from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Self, UtilityError> {
        if count == 0 {
            return Err(UtilityError::EmptyDesignSpace);
        }
        if count == 1 {
            return Self::from_scalars(vec![start]);
        }
        let step = (stop - start) / (count - 1) as f64;
        Self::from_scalars((0..count).map(|i| start + step * i as f64).collect())
    }

    /// Settings `start, start + step, ...` not exceeding `stop`, computed by
    /// index to avoid accumulated rounding.
    pub fn stepped(start: f64, stop: f64, step: f64) -> Result<Self, UtilityError> {
        if !(step > 0.0) || stop < start {
            return Err(UtilityError::EmptyDesignSpace);
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::from_scalars((0..count).map(|i| start + step * i as f64).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityAlgorithm {
    Kld,
    Variance,
    Pseudo,
    #[serde(rename = "maxmin")]
    MaxMin,
    Random,
}

impl UtilityAlgorithm {
    pub const ALL: [UtilityAlgorithm; 5] = [Self::Kld, Self::Variance, Self::Pseudo, Self::MaxMin, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kld => "kld",
            Self::Variance => "variance",
            Self::Pseudo => "pseudo",
            Self::MaxMin => "maxmin",
            Self::Random => "random",
        }
    }

    pub fn default_samples(self) -> usize {
        match self {
            Self::MaxMin => 2,
            _ => 1000,
        }
    }

    fn min_samples(self) -> usize {
        match self {
            Self::Kld | Self::Pseudo => 4,
            _ => 2,
        }
    }

    pub fn is_adaptive(self) -> bool {
        self != Self::Random
    }
}

impl std::fmt::Display for UtilityAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for UtilityAlgorithm {
    type Err = UtilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kld" | "kl" => Ok(Self::Kld),
            "variance" | "var" => Ok(Self::Variance),
            "pseudo" | "psu" => Ok(Self::Pseudo),
            "maxmin" | "max-min" | "mm" => Ok(Self::MaxMin),
            "random" => Ok(Self::Random),
            _ => Err(UtilityError::UnknownAlgorithm(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub algorithm: UtilityAlgorithm,
    pub n_samples: usize,
    pub estimator: EntropyEstimator,
    pub reuse_samples: bool,
}

impl UtilityConfig {
    pub fn new(algorithm: UtilityAlgorithm) -> Self {
        Self {
            algorithm,
            n_samples: algorithm.default_samples(),
            estimator: EntropyEstimator::default(),
            reuse_samples: true,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        let min = self.algorithm.min_samples();
        if self.algorithm != UtilityAlgorithm::Random && self.n_samples < min {
            return Err(UtilityError::TooFewSamples { algorithm: self.algorithm.name(), min, got: self.n_samples });
        }
        Ok(())
    }

    /// Parses `name` or `name@N_s`, e.g. `maxmin@2`.
    pub fn parse_label(label: &str) -> Result<Self, UtilityError> {
        let (name, samples) = match label.split_once('@') {
            Some((name, n)) => {
                let n: usize = n.trim().parse().map_err(|_| UtilityError::UnknownAlgorithm(label.to_string()))?;
                (name, Some(n))
            }
            None => (label, None),
        };
        let mut cfg = Self::new(name.parse()?);
        if let Some(n) = samples {
            cfg.n_samples = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        match self.algorithm {
            UtilityAlgorithm::Random => "random".into(),
            a => format!("{}@{}", a.name(), self.n_samples),
        }
    }
}

/// Wall time spent in each part of one design computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignTiming {
    pub sampling: Duration,
    pub model_eval: Duration,
    /// Variance, range, or the final utility transform.
    pub statistic: Duration,
    /// Entropy estimation, sorting included.
    pub entropy: Duration,
    /// The sorting part of `entropy`.
    pub sort: Duration,
    pub argmax: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityResult {
    /// Empty for random design.
    pub utilities: Vec<f64>,
    pub best_index: usize,
    pub timing: DesignTiming,
}

/// Simulated outcomes `f(theta_j, d_i) [+ eta_j]` for every candidate.
/// With `reuse_samples` one parameter set (and one noise set) is shared by
/// all rows; otherwise every row gets fresh draws.
#[allow(clippy::too_many_arguments)]
pub fn simulate_outcomes<M, R>(
    model: &M,
    filter: &ParticleFilter,
    noise: &NoiseSpec,
    designs: &DesignSpace,
    n_samples: usize,
    reuse_samples: bool,
    with_noise: bool,
    rng: &mut R,
) -> OutcomeMatrix
where
    M: MeasurementModel + ?Sized,
    R: Rng + ?Sized,
{
    simulate_outcomes_with(model, designs, noise, n_samples, reuse_samples, with_noise, rng, |n, rng| {
        filter.sample_parameters(n, rng)
    })
}

/// [`simulate_outcomes`] with parameter draws supplied by `sampler`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_outcomes_with<M, R, S>(
    model: &M,
    designs: &DesignSpace,
    noise: &NoiseSpec,
    n_samples: usize,
    reuse_samples: bool,
    with_noise: bool,
    rng: &mut R,
    sampler: S,
) -> OutcomeMatrix
where
    M: MeasurementModel + ?Sized,
    R: Rng + ?Sized,
    S: FnMut(usize, &mut R) -> ParamSamples,
{
    simulate_with(designs, n_samples, reuse_samples, with_noise, noise, rng, sampler, model, &mut DesignTiming::default())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn simulate_with<M, R, S>(
    designs: &DesignSpace,
    n_samples: usize,
    reuse_samples: bool,
    with_noise: bool,
    noise: &NoiseSpec,
    rng: &mut R,
    mut sampler: S,
    model: &M,
    timing: &mut DesignTiming,
) -> OutcomeMatrix
where
    M: MeasurementModel + ?Sized,
    R: Rng + ?Sized,
    S: FnMut(usize, &mut R) -> ParamSamples,
{
    let eta_dist = Normal::new(0.0, noise.sigma()).expect("sigma is positive");
    if reuse_samples {
        let t = Instant::now();
        let thetas = sampler(n_samples, rng);
        let eta: Vec<f64> = if with_noise { (0..n_samples).map(|_| eta_dist.sample(rng)).collect() } else { Vec::new() };
        timing.sampling += t.elapsed();

        let t = Instant::now();
        let mut out = eval_grid(model, &thetas, designs);
        if with_noise {
            for row in out.rows_mut() {
                for (y, e) in row.iter_mut().zip(&eta) {
                    *y += e;
                }
            }
        }
        timing.model_eval += t.elapsed();
        out
    } else {
        let mut data = Vec::with_capacity(designs.len() * n_samples);
        for d in designs.iter() {
            let t = Instant::now();
            let thetas = sampler(n_samples, rng);
            let eta: Vec<f64> =
                if with_noise { (0..n_samples).map(|_| eta_dist.sample(rng)).collect() } else { vec![0.0; n_samples] };
            timing.sampling += t.elapsed();
            let t = Instant::now();
            data.extend(thetas.rows().zip(&eta).map(|(theta, e)| model.eval(theta, d) + e));
            timing.model_eval += t.elapsed();
        }
        OutcomeMatrix::from_flat(designs.len(), n_samples, data)
    }
}

/// Estimated entropy of each noisy outcome row minus the noise entropy.
pub fn utility_kld(outcomes: &OutcomeMatrix, noise: &NoiseSpec, est: &EntropyEstimator) -> Result<Vec<f64>, UtilityError> {
    let mut timing = DesignTiming::default();
    kld_timed(outcomes, noise, est, &mut timing)
}

fn kld_timed(
    outcomes: &OutcomeMatrix,
    noise: &NoiseSpec,
    est: &EntropyEstimator,
    timing: &mut DesignTiming,
) -> Result<Vec<f64>, UtilityError> {
    let h_eta = normal_entropy(noise.variance())?;
    let entropies = row_entropies(outcomes, est, timing)?;
    let t = Instant::now();
    let u = entropies.into_iter().map(|h| h - h_eta).collect();
    timing.statistic += t.elapsed();
    Ok(u)
}

fn row_entropies(outcomes: &OutcomeMatrix, est: &EntropyEstimator, timing: &mut DesignTiming) -> Result<Vec<f64>, UtilityError> {
    let t_all = Instant::now();
    let mut sort = Duration::ZERO;
    let mut scratch = Vec::with_capacity(outcomes.n_samples());
    let mut out = Vec::with_capacity(outcomes.n_designs());
    for row in outcomes.rows() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(EntropyError::NonFinite { index: j }.into());
        }
        let t = Instant::now();
        scratch.clear();
        scratch.extend_from_slice(row);
        scratch.sort_unstable_by(f64::total_cmp);
        sort += t.elapsed();
        out.push(est.estimate_sorted(&scratch)?);
    }
    timing.entropy += t_all.elapsed();
    timing.sort += sort;
    Ok(out)
}

/// Population variance of each row.
fn row_variance(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `0.5 ln(1 + Var(row) / v_eta)` per row, outcomes noise free.
pub fn utility_variance(outcomes: &OutcomeMatrix, noise: &NoiseSpec) -> Vec<f64> {
    let v_eta = noise.variance();
    outcomes.rows().map(|row| 0.5 * (row_variance(row) / v_eta).ln_1p()).collect()
}

/// Variance utility with the variance replaced by the entropy-matched
/// normal variance `exp(2 H) / (2 pi e)`.
pub fn utility_pseudo(outcomes: &OutcomeMatrix, noise: &NoiseSpec, est: &EntropyEstimator) -> Result<Vec<f64>, UtilityError> {
    pseudo_timed(outcomes, noise, est, &mut DesignTiming::default())
}

fn pseudo_timed(
    outcomes: &OutcomeMatrix,
    noise: &NoiseSpec,
    est: &EntropyEstimator,
    timing: &mut DesignTiming,
) -> Result<Vec<f64>, UtilityError> {
    let entropies = row_entropies(outcomes, est, timing)?;
    let t = Instant::now();
    let v_eta = noise.variance();
    let u = entropies.into_iter().map(|h| 0.5 * (entropy_to_variance(h) / v_eta).ln_1p()).collect();
    timing.statistic += t.elapsed();
    Ok(u)
}

/// `0.5 ln(1 + t^2 / v_eta)` with `t` the range of each noise-free row.
pub fn utility_maxmin(outcomes: &OutcomeMatrix, noise: &NoiseSpec) -> Vec<f64> {
    let v_eta = noise.variance();
    outcomes
        .rows()
        .map(|row| {
            let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let t = hi - lo;
            0.5 * (t * t / v_eta).ln_1p()
        })
        .collect()
}

/// Index of the largest utility; exact ties are broken uniformly at random.
pub fn select_design<R: Rng + ?Sized>(utilities: &[f64], rng: &mut R) -> usize {
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = utilities.iter().enumerate().filter(|(_, u)| **u == best).map(|(i, _)| i).collect();
    match ties.len() {
        0 => 0,
        1 => ties[0],
        n => ties[rng.random_range(0..n)],
    }
}

pub fn random_design<R: Rng + ?Sized>(designs: &DesignSpace, rng: &mut R) -> usize {
    rng.random_range(0..designs.len())
}

/// Runs one complete design computation: draws, model grid, statistic and
/// argmax. `sample_rng` feeds parameter/noise draws; `choice_rng` is used
/// only for tie-breaking or the random design.
pub fn evaluate<M, R1, R2>(
    model: &M,
    filter: &ParticleFilter,
    noise: &NoiseSpec,
    designs: &DesignSpace,
    cfg: &UtilityConfig,
    sample_rng: &mut R1,
    choice_rng: &mut R2,
) -> Result<UtilityResult, UtilityError>
where
    M: MeasurementModel + ?Sized,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut timing = DesignTiming::default();
    if cfg.algorithm == UtilityAlgorithm::Random {
        let t = Instant::now();
        let best_index = random_design(designs, choice_rng);
        timing.argmax = t.elapsed();
        timing.total = start.elapsed();
        return Ok(UtilityResult { utilities: Vec::new(), best_index, timing });
    }

    let with_noise = cfg.algorithm == UtilityAlgorithm::Kld;
    let outcomes = simulate_with(
        designs,
        cfg.n_samples,
        cfg.reuse_samples,
        with_noise,
        noise,
        sample_rng,
        |n, rng| filter.sample_parameters(n, rng),
        model,
        &mut timing,
    );
    let utilities = match cfg.algorithm {
        UtilityAlgorithm::Kld => kld_timed(&outcomes, noise, &cfg.estimator, &mut timing)?,
        UtilityAlgorithm::Pseudo => pseudo_timed(&outcomes, noise, &cfg.estimator, &mut timing)?,
        UtilityAlgorithm::Variance | UtilityAlgorithm::MaxMin => {
            let t = Instant::now();
            let u = if cfg.algorithm == UtilityAlgorithm::Variance {
                utility_variance(&outcomes, noise)
            } else {
                utility_maxmin(&outcomes, noise)
            };
            timing.statistic += t.elapsed();
            u
        }
        UtilityAlgorithm::Random => unreachable!(),
    };
    if let Some(index) = utilities.iter().position(|u| !u.is_finite()) {
        return Err(UtilityError::NonFinite { index });
    }
    let t = Instant::now();
    let best_index = select_design(&utilities, choice_rng);
    timing.argmax = t.elapsed();
    timing.total = start.elapsed();
    Ok(UtilityResult { utilities, best_index, timing })
}
