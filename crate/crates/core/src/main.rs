use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use seqdesign::config::{Overrides, Resolved, RunConfigFile};
use seqdesign::output::{write_batch, write_comparison, write_fig1};
use seqdesign::reuse::reuse_pair;
use seqdesign::runner::{run_batch_unchecked, Batch};
use seqdesign::utility::UtilityConfig;

/// Sequential Bayesian experiment design simulations.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch with one utility algorithm.
    Run(Common),
    /// Run matched batches for several utility algorithms.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated labels, e.g. `kld,variance,pseudo,maxmin@2,random`.
        #[arg(long, value_delimiter = ',', required = true)]
        algorithms: Vec<String>,
    },
    /// Sample-reuse demonstration tables.
    Fig1(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["lorentzian", "ramsey"])]
    preset: Option<String>,
    #[arg(long)]
    utility: Option<String>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_epochs: Option<usize>,
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_reuse: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "SEQDESIGN_THREADS")]
    threads: Option<usize>,
}

impl Common {
    /// `fig1` does not use the experiment section, so it may be omitted.
    fn resolve(&self, experiment_optional: bool) -> Result<Resolved> {
        let mut file = match &self.config {
            Some(p) => RunConfigFile::load(p)?,
            None => RunConfigFile::default(),
        };
        if experiment_optional && file.experiment.preset.is_none() && file.experiment.model.is_none() {
            file.experiment.preset = Some("lorentzian".into());
        }
        Ok(file.resolve(&self.overrides())?)
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset.clone(),
            utility: self.utility.clone(),
            n_samples: self.n_samples,
            n_epochs: self.n_epochs,
            n_runs: self.n_runs,
            seed: self.seed,
            out: self.out.clone(),
            no_reuse: self.no_reuse,
        }
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
        }
        Ok(())
    }
}

fn print_summary(label: &str, batch: &Batch, param_names: &[String], secs: f64) {
    let s = &batch.summary;
    let stds = match s.final_epoch() {
        Some(e) => param_names
            .iter()
            .zip(&e.std_mean)
            .map(|(p, v)| format!("{p}={v:.4e}"))
            .collect::<Vec<_>>()
            .join(" "),
        None => "n/a".into(),
    };
    println!("{label}: {}/{} runs completed, final mean std {stds}, wall {secs:.2}s", s.n_completed, s.n_runs);
    for f in &s.failures {
        eprintln!("{label}: run {} failed at epoch {}: {}", f.run, f.epoch, f.message);
    }
}

fn cmd_run(c: &Common) -> Result<bool> {
    let r = c.resolve(false)?;
    let t = Instant::now();
    let batch = run_batch_unchecked(&r.spec, r.n_runs, r.base_seed)?;
    write_batch(&r.output_dir, &r.spec, &batch, &r.formats)?;
    print_summary(&r.spec.utility.label(), &batch, &r.spec.param_names(), t.elapsed().as_secs_f64());
    Ok(batch.summary.n_completed == batch.summary.n_runs)
}

fn cmd_compare(c: &Common, algorithms: &[String]) -> Result<bool> {
    if algorithms.len() < 2 {
        bail!("invalid `--algorithms`: compare needs at least 2 algorithms, got {}", algorithms.len());
    }
    let base = c.resolve(false)?;
    let mut batches = Vec::new();
    let mut ok = true;
    for label in algorithms {
        let utility = UtilityConfig::parse_label(label).with_context(|| format!("invalid `--algorithms` entry `{label}`"))?;
        let mut spec = base.spec.clone();
        spec.utility = UtilityConfig { estimator: base.spec.utility.estimator, reuse_samples: base.spec.utility.reuse_samples, ..utility };
        if let (Some(n), false) = (c.n_samples, label.contains('@')) {
            spec.utility.n_samples = n;
        }
        spec.utility.validate().with_context(|| format!("invalid `--n-samples` for `{label}`"))?;
        let t = Instant::now();
        let batch = run_batch_unchecked(&spec, base.n_runs, base.base_seed)?;
        let label = spec.utility.label();
        write_batch(&base.output_dir.join(&label), &spec, &batch, &base.formats)?;
        print_summary(&label, &batch, &spec.param_names(), t.elapsed().as_secs_f64());
        ok &= batch.summary.n_completed == batch.summary.n_runs;
        batches.push((label, batch));
    }
    write_comparison(&base.output_dir, &base.spec, &batches)?;
    Ok(ok)
}

fn cmd_fig1(c: &Common) -> Result<bool> {
    let r = c.resolve(true)?;
    let mut cfg = r.fig1;
    if let Some(n) = c.n_samples {
        cfg.n_samples = n;
    }
    let (on, off) = reuse_pair(&cfg, 0)?;
    write_fig1(&r.output_dir, &[&on, &off])?;
    println!(
        "fig1: argmax reuse={:.4} fresh={:.4}, roughness reuse={:.4e} fresh={:.4e}",
        on.argmax_setting(),
        off.argmax_setting(),
        on.roughness(),
        off.roughness()
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Fig1(c) => c,
        Command::Compare { common, .. } => common,
    };
    let result = common.init_threads().and_then(|_| match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Compare { common, algorithms } => cmd_compare(common, algorithms),
        Command::Fig1(c) => cmd_fig1(c),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
