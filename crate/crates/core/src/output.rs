//! CSV and JSON result files.
//!
//! `trace.csv` holds only deterministic columns so identical seeds give
//! byte-identical files; wall-clock subtask timings go to `timing.csv`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::OutputFormat;
use crate::experiments::ExperimentSpec;
use crate::metrics::BatchSummary;
use crate::reuse::ReuseDemoOutput;
use crate::runner::{Batch, RunRecord};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, OutputError> {
    csv::Writer::from_path(path).map_err(|source| OutputError::Csv { path: path.to_path_buf(), source })
}

fn put<W: Write>(w: &mut csv::Writer<W>, path: &Path, rec: &[String]) -> Result<(), OutputError> {
    w.write_record(rec).map_err(|source| OutputError::Csv { path: path.to_path_buf(), source })
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), OutputError> {
    w.flush().map_err(io_err(path))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| OutputError::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

/// `run, epoch, <settings>, y, mean_<p>, std_<p>, entropy_<p>, resampled`
pub fn write_trace_csv(
    path: &Path,
    records: &[RunRecord],
    param_names: &[String],
    setting_names: &[String],
) -> Result<(), OutputError> {
    let mut w = csv_writer(path)?;
    let mut header = vec![s("run"), s("epoch")];
    header.extend(setting_names.iter().cloned());
    header.push(s("y"));
    for prefix in ["mean", "std", "entropy"] {
        header.extend(param_names.iter().map(|p| format!("{prefix}_{p}")));
    }
    header.push(s("resampled"));
    put(&mut w, path, &header)?;
    for r in records {
        for row in &r.rows {
            let mut rec = vec![s(r.run_index), s(row.epoch)];
            rec.extend(row.setting.iter().map(s));
            rec.push(s(row.y));
            rec.extend(row.mean.iter().map(s));
            rec.extend(row.std.iter().map(s));
            rec.extend(row.entropy.iter().map(s));
            rec.push(s(u8::from(row.resampled)));
            put(&mut w, path, &rec)?;
        }
    }
    finish(w, path)
}

/// Per-epoch subtask durations in microseconds.
pub fn write_timing_csv(path: &Path, records: &[RunRecord]) -> Result<(), OutputError> {
    let mut w = csv_writer(path)?;
    let header = [
        "run", "epoch", "t_sampling_us", "t_model_us", "t_stat_us", "t_entropy_us", "t_sort_us", "t_argmax_us", "t_design_us",
        "t_update_us", "t_resample_us", "t_summary_us",
    ];
    put(&mut w, path, &header.map(s))?;
    let us = |d: std::time::Duration| s(d.as_micros());
    for r in records {
        for row in &r.rows {
            let t = &row.timing;
            put(
                &mut w,
                path,
                &[
                    s(r.run_index),
                    s(row.epoch),
                    us(t.design.sampling),
                    us(t.design.model_eval),
                    us(t.design.statistic),
                    us(t.design.entropy),
                    us(t.design.sort),
                    us(t.design.argmax),
                    us(t.design.total),
                    us(t.update),
                    us(t.resample),
                    us(t.summary),
                ],
            )?;
        }
    }
    finish(w, path)
}

pub fn write_summary_json(path: &Path, summary: &BatchSummary) -> Result<(), OutputError> {
    write_json(path, summary)
}

/// Writes the requested formats for one batch into `dir`; returns the
/// created files.
pub fn write_batch(dir: &Path, spec: &ExperimentSpec, batch: &Batch, formats: &[OutputFormat]) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let params = spec.param_names();
    let settings = spec.model.setting_names();
    if formats.contains(&OutputFormat::Csv) {
        let p = dir.join("trace.csv");
        write_trace_csv(&p, &batch.records, &params, &settings)?;
        written.push(p);
        let p = dir.join("timing.csv");
        write_timing_csv(&p, &batch.records)?;
        written.push(p);
    }
    if formats.contains(&OutputFormat::Json) {
        let p = dir.join("summary.json");
        write_summary_json(&p, &batch.summary)?;
        written.push(p);
        let p = dir.join("timing.json");
        write_json(&p, &batch.summary.timing)?;
        written.push(p);
    }
    if formats.contains(&OutputFormat::Snapshot) {
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps).map_err(io_err(&snaps))?;
        for r in &batch.records {
            if let Some(snap) = &r.final_snapshot {
                let p = snaps.join(format!("run_{:04}.json", r.run_index));
                write_json(&p, snap)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Cross-algorithm tables: posterior statistics per epoch, timing
/// decomposition, and the chosen settings of every run.
pub fn write_comparison(dir: &Path, spec: &ExperimentSpec, batches: &[(String, Batch)]) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let params = spec.param_names();

    let stats = dir.join("compare_stats.csv");
    let mut w = csv_writer(&stats)?;
    let header = [
        "algorithm", "epoch", "param", "std_mean", "std_q05", "std_q95", "entropy_mean", "entropy_q05", "entropy_q95", "rms_error",
    ];
    put(&mut w, &stats, &header.map(s))?;
    for (label, b) in batches {
        for e in &b.summary.epochs {
            for (k, p) in params.iter().enumerate() {
                put(
                    &mut w,
                    &stats,
                    &[
                        label.clone(),
                        s(e.epoch),
                        p.clone(),
                        s(e.std_mean[k]),
                        s(e.std_q05[k]),
                        s(e.std_q95[k]),
                        s(e.entropy_mean[k]),
                        s(e.entropy_q05[k]),
                        s(e.entropy_q95[k]),
                        s(e.rms_error[k]),
                    ],
                )?;
            }
        }
    }
    finish(w, &stats)?;

    let timing = dir.join("compare_timing.csv");
    let mut w = csv_writer(&timing)?;
    put(&mut w, &timing, &["algorithm", "subtask", "total_us", "per_epoch_us"].map(s))?;
    for (label, b) in batches {
        let t = &b.summary.timing;
        for (name, us) in t.rows() {
            let per = us.checked_div(t.epochs).unwrap_or(0);
            put(&mut w, &timing, &[label.clone(), s(name), s(us), s(per)])?;
        }
    }
    finish(w, &timing)?;

    let settings = dir.join("compare_settings.csv");
    let mut w = csv_writer(&settings)?;
    let mut header = vec![s("algorithm"), s("run"), s("epoch"), s("design_index")];
    header.extend(spec.model.setting_names());
    put(&mut w, &settings, &header)?;
    for (label, b) in batches {
        for r in &b.records {
            for row in &r.rows {
                let mut rec = vec![label.clone(), s(r.run_index), s(row.epoch), s(row.design_index)];
                rec.extend(row.setting.iter().map(s));
                put(&mut w, &settings, &rec)?;
            }
        }
    }
    finish(w, &settings)?;

    Ok(vec![stats, timing, settings])
}

fn mode(out: &ReuseDemoOutput) -> &'static str {
    if out.reuse {
        "reuse"
    } else {
        "fresh"
    }
}

/// `fig1_outcomes.csv` (mode, design_index, x, sample, y) and
/// `fig1_utility.csv` (mode, design_index, x, utility).
pub fn write_fig1(dir: &Path, outputs: &[&ReuseDemoOutput]) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let outcomes = dir.join("fig1_outcomes.csv");
    let mut w = csv_writer(&outcomes)?;
    put(&mut w, &outcomes, &["mode", "design_index", "x", "sample", "y"].map(s))?;
    for out in outputs {
        for (i, row) in out.outcomes.rows().enumerate() {
            let x = out.designs.get(i)[0];
            for (j, y) in row.iter().enumerate() {
                put(&mut w, &outcomes, &[s(mode(out)), s(i), s(x), s(j), s(y)])?;
            }
        }
    }
    finish(w, &outcomes)?;

    let utility = dir.join("fig1_utility.csv");
    let mut w = csv_writer(&utility)?;
    put(&mut w, &utility, &["mode", "design_index", "x", "utility"].map(s))?;
    for out in outputs {
        for (i, u) in out.utilities.iter().enumerate() {
            put(&mut w, &utility, &[s(mode(out)), s(i), s(out.designs.get(i)[0]), s(u)])?;
        }
    }
    finish(w, &utility)?;
    Ok(vec![outcomes, utility])
}
