//! Aggregates over batches of run records.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::runner::{RunRecord, RunStatus};

/// Linear-interpolation quantile of ascending `sorted` data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-epoch statistics over all completed runs, one entry per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochAggregate {
    pub epoch: usize,
    pub std_mean: Vec<f64>,
    pub std_q05: Vec<f64>,
    pub std_q95: Vec<f64>,
    pub entropy_mean: Vec<f64>,
    pub entropy_q05: Vec<f64>,
    pub entropy_q95: Vec<f64>,
    /// `sqrt(mean over runs of (posterior mean - true value)^2)`
    pub rms_error: Vec<f64>,
}

/// Summed subtask durations, in microseconds, over all epochs of all
/// completed runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub epochs: u64,
    pub sampling_us: u64,
    pub model_eval_us: u64,
    pub statistic_us: u64,
    pub entropy_us: u64,
    pub sort_us: u64,
    pub argmax_us: u64,
    pub design_total_us: u64,
    pub update_us: u64,
    pub resample_us: u64,
    pub summary_us: u64,
}

impl TimingTable {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Self {
        #[derive(Default)]
        struct Acc {
            n: u64,
            sampling: Duration,
            model: Duration,
            stat: Duration,
            entropy: Duration,
            sort: Duration,
            argmax: Duration,
            total: Duration,
            update: Duration,
            resample: Duration,
            summary: Duration,
        }
        let mut a = Acc::default();
        for row in records.into_iter().flat_map(|r| &r.rows) {
            let t = &row.timing;
            a.n += 1;
            a.sampling += t.design.sampling;
            a.model += t.design.model_eval;
            a.stat += t.design.statistic;
            a.entropy += t.design.entropy;
            a.sort += t.design.sort;
            a.argmax += t.design.argmax;
            a.total += t.design.total;
            a.update += t.update;
            a.resample += t.resample;
            a.summary += t.summary;
        }
        let us = |d: Duration| d.as_micros() as u64;
        Self {
            epochs: a.n,
            sampling_us: us(a.sampling),
            model_eval_us: us(a.model),
            statistic_us: us(a.stat),
            entropy_us: us(a.entropy),
            sort_us: us(a.sort),
            argmax_us: us(a.argmax),
            design_total_us: us(a.total),
            update_us: us(a.update),
            resample_us: us(a.resample),
            summary_us: us(a.summary),
        }
    }

    /// `(subtask, total microseconds)` rows for tabular output.
    pub fn rows(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("sampling", self.sampling_us),
            ("model_eval", self.model_eval_us),
            ("statistic", self.statistic_us),
            ("entropy", self.entropy_us),
            ("sort", self.sort_us),
            ("argmax", self.argmax_us),
            ("design_total", self.design_total_us),
            ("bayes_update", self.update_us),
            ("resample", self.resample_us),
            ("summary", self.summary_us),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub epoch: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub experiment: String,
    pub utility: String,
    pub param_names: Vec<String>,
    pub n_runs: usize,
    pub n_completed: usize,
    pub failures: Vec<RunFailure>,
    pub epochs: Vec<EpochAggregate>,
    pub timing: TimingTable,
}

impl BatchSummary {
    pub fn final_epoch(&self) -> Option<&EpochAggregate> {
        self.epochs.last()
    }

    /// Mean posterior std of parameter `k` at 1-based `epoch`.
    pub fn std_mean_at(&self, epoch: usize, k: usize) -> f64 {
        self.epochs[epoch - 1].std_mean[k]
    }
}

pub fn summarize_batch(
    experiment: &str,
    utility: &str,
    param_names: &[String],
    true_params: &[f64],
    n_epochs: usize,
    records: &[RunRecord],
) -> BatchSummary {
    let failures: Vec<RunFailure> = records
        .iter()
        .filter_map(|r| match &r.status {
            RunStatus::Completed => None,
            RunStatus::Failed { epoch, message } => Some(RunFailure { run: r.run_index, epoch: *epoch, message: message.clone() }),
        })
        .collect();
    let done: Vec<&RunRecord> = records.iter().filter(|r| r.is_complete()).collect();
    let dim = param_names.len();
    let mut epochs = Vec::new();
    if !done.is_empty() {
        let mut std_v = vec![0.0; done.len()];
        let mut ent_v = vec![0.0; done.len()];
        for e in 0..n_epochs {
            let mut agg = EpochAggregate {
                epoch: e + 1,
                std_mean: Vec::with_capacity(dim),
                std_q05: Vec::with_capacity(dim),
                std_q95: Vec::with_capacity(dim),
                entropy_mean: Vec::with_capacity(dim),
                entropy_q05: Vec::with_capacity(dim),
                entropy_q95: Vec::with_capacity(dim),
                rms_error: Vec::with_capacity(dim),
            };
            for k in 0..dim {
                let mut sq = 0.0;
                for (j, r) in done.iter().enumerate() {
                    let row = &r.rows[e];
                    std_v[j] = row.std[k];
                    ent_v[j] = row.entropy[k];
                    sq += (row.mean[k] - true_params[k]).powi(2);
                }
                std_v.sort_by(f64::total_cmp);
                ent_v.sort_by(f64::total_cmp);
                agg.std_mean.push(mean(&std_v));
                agg.std_q05.push(quantile_sorted(&std_v, 0.05));
                agg.std_q95.push(quantile_sorted(&std_v, 0.95));
                agg.entropy_mean.push(mean(&ent_v));
                agg.entropy_q05.push(quantile_sorted(&ent_v, 0.05));
                agg.entropy_q95.push(quantile_sorted(&ent_v, 0.95));
                agg.rms_error.push((sq / done.len() as f64).sqrt());
            }
            epochs.push(agg);
        }
    }
    BatchSummary {
        experiment: experiment.to_string(),
        utility: utility.to_string(),
        param_names: param_names.to_vec(),
        n_runs: records.len(),
        n_completed: done.len(),
        failures,
        epochs,
        timing: TimingTable::from_records(done.iter().copied()),
    }
}

/// `|setting[0] - center|` for every completed run over 1-based epochs
/// `first..=last`.
pub fn setting_offsets(records: &[RunRecord], center: f64, first: usize, last: usize) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.is_complete())
        .flat_map(|r| r.rows.iter().filter(move |row| row.epoch >= first && row.epoch <= last))
        .map(|row| (row.setting[0] - center).abs())
        .collect()
}

/// Trailing moving average with window `w`; entry `i` covers `i+1-w..=i`.
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || values.len() < w {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - w + 1);
    let mut acc: f64 = values[..w].iter().sum();
    out.push(acc / w as f64);
    for i in w..values.len() {
        acc += values[i] - values[i - w];
        out.push(acc / w as f64);
    }
    out
}
