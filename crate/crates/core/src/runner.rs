//! Design-measure-analyze loop and batches of independent runs.
//!
//! Each run owns separate RNG streams for particle initialization and
//! resampling, utility draws, simulated measurement noise, design choice
//! (tie-breaks and random design) and posterior metrics. Changing the
//! utility sample count therefore never perturbs the simulated noise
//! sequence.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{ExperimentSpec, SpecError};
use crate::filter::{seeded_rng, FilterError, ParticleFilter, FilterSnapshot};
use crate::metrics::{summarize_batch, BatchSummary};
use crate::utility::{evaluate, DesignTiming, UtilityError};

const STREAM_FILTER: u64 = 1;
const STREAM_UTILITY: u64 = 2;
const STREAM_MEASUREMENT: u64 = 3;
const STREAM_CHOICE: u64 = 4;
const STREAM_METRICS: u64 = 5;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error("a batch needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub design: DesignTiming,
    pub update: Duration,
    pub resample: Duration,
    /// Posterior metrics; not part of the design task.
    pub summary: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    /// 1-based.
    pub epoch: usize,
    pub design_index: usize,
    pub setting: Vec<f64>,
    pub y: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub entropy: Vec<f64>,
    pub resampled: bool,
    pub timing: EpochTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed { epoch: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub rows: Vec<EpochRow>,
    pub status: RunStatus,
    pub final_snapshot: Option<FilterSnapshot>,
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Deterministic part of the trace (everything except timings).
    pub fn trace_eq(&self, other: &Self) -> bool {
        self.status == other.status
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.design_index == b.design_index
                    && a.setting == b.setting
                    && a.y.to_bits() == b.y.to_bits()
                    && a.mean == b.mean
                    && a.std == b.std
                    && a.entropy == b.entropy
                    && a.resampled == b.resampled
            })
    }
}

/// Mutable state of one run in progress.
pub struct RunState {
    pub filter: ParticleFilter,
    utility_rng: ChaCha8Rng,
    measurement_rng: ChaCha8Rng,
    choice_rng: ChaCha8Rng,
    metrics_rng: ChaCha8Rng,
    noise_dist: Normal<f64>,
    epoch: usize,
}

impl RunState {
    pub fn new(spec: &ExperimentSpec, seed: u64) -> Result<Self, RunError> {
        spec.validate()?;
        let filter = ParticleFilter::from_prior(
            spec.model.param_dim(),
            spec.n_particles,
            spec.filter,
            seeded_rng(seed, STREAM_FILTER),
            |rng| spec.prior.sample(rng),
        )?;
        Ok(Self {
            filter,
            utility_rng: seeded_rng(seed, STREAM_UTILITY),
            measurement_rng: seeded_rng(seed, STREAM_MEASUREMENT),
            choice_rng: seeded_rng(seed, STREAM_CHOICE),
            metrics_rng: seeded_rng(seed, STREAM_METRICS),
            noise_dist: Normal::new(0.0, spec.noise.sigma()).expect("sigma is positive"),
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }
}

/// One epoch: choose a design, simulate `y = f(theta*, d) + eta`, update
/// the posterior and record its summary.
pub fn run_epoch(state: &mut RunState, spec: &ExperimentSpec) -> Result<EpochRow, RunError> {
    let model = spec.model.as_ref();
    let choice = evaluate(
        model,
        &state.filter,
        &spec.noise,
        &spec.designs,
        &spec.utility,
        &mut state.utility_rng,
        &mut state.choice_rng,
    )?;
    let setting = spec.designs.get(choice.best_index).to_vec();
    let y = model.eval(&spec.true_params, &setting) + state.noise_dist.sample(&mut state.measurement_rng);

    let report = state.filter.bayes_update(y, &setting, model, &spec.noise)?;

    let t = Instant::now();
    let summary = state.filter.summarize(&spec.utility.estimator, spec.summary_draws, &mut state.metrics_rng)?;
    let summary_time = t.elapsed();

    state.epoch += 1;
    Ok(EpochRow {
        epoch: state.epoch,
        design_index: choice.best_index,
        setting,
        y,
        mean: summary.mean,
        std: summary.marginal_std,
        entropy: summary.marginal_entropy,
        resampled: report.resampled,
        timing: EpochTiming {
            design: choice.timing,
            update: report.reweight_time,
            resample: report.resample_time,
            summary: summary_time,
        },
    })
}

/// Runs `spec.n_epochs` epochs from a fresh prior using `spec.seed`.
pub fn run(spec: &ExperimentSpec) -> Result<RunRecord, RunError> {
    run_seeded(spec, 0, spec.seed)
}

/// Like [`run`] with an explicit run index and seed. Precondition failures
/// are returned as errors; a failure mid-run yields a record with the
/// completed epochs and a `Failed` status.
pub fn run_seeded(spec: &ExperimentSpec, run_index: usize, seed: u64) -> Result<RunRecord, RunError> {
    let mut state = RunState::new(spec, seed)?;
    let mut rows = Vec::with_capacity(spec.n_epochs);
    let mut status = RunStatus::Completed;
    for _ in 0..spec.n_epochs {
        match run_epoch(&mut state, spec) {
            Ok(row) => rows.push(row),
            Err(e) => {
                status = RunStatus::Failed { epoch: state.epoch + 1, message: e.to_string() };
                break;
            }
        }
    }
    Ok(RunRecord { run_index, seed, rows, status, final_snapshot: Some(state.filter.snapshot()) })
}

/// SplitMix64 finalizer; maps `base + index` to well-separated run seeds.
pub fn split_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Batch {
    /// Sorted by run index.
    pub records: Vec<RunRecord>,
    pub summary: BatchSummary,
}

/// `n_runs` independent runs in parallel, aggregated in run order.
pub fn run_batch(spec: &ExperimentSpec, n_runs: usize, base_seed: u64) -> Result<Batch, RunError> {
    if n_runs < 2 {
        return Err(RunError::TooFewRuns(n_runs));
    }
    run_batch_unchecked(spec, n_runs, base_seed)
}

/// [`run_batch`] without the two-run minimum, for single-run traces.
pub fn run_batch_unchecked(spec: &ExperimentSpec, n_runs: usize, base_seed: u64) -> Result<Batch, RunError> {
    spec.validate()?;
    let records: Vec<RunRecord> = (0..n_runs)
        .into_par_iter()
        .map(|i| run_seeded(spec, i, split_seed(base_seed, i as u64)))
        .collect::<Result<_, _>>()?;
    let summary = summarize_batch(&spec.name, &spec.utility.label(), &spec.param_names(), &spec.true_params, spec.n_epochs, &records);
    Ok(Batch { records, summary })
}
