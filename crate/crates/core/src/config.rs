//! JSON run-configuration files and command-line overrides.
//!
//! ```json
//! {
//!   "experiment": { "preset": "lorentzian" },
//!   "filter":     { "n_particles": 5000, "resample_ratio": 0.5, "alpha": 0.01 },
//!   "utility":    { "algorithm": "maxmin", "n_samples": 2, "estimator": "ebrahimi", "reuse": true },
//!   "run":        { "n_epochs": 1000, "n_runs": 100, "base_seed": 1 },
//!   "output":     { "directory": "out", "formats": ["csv", "json"] }
//! }
//! ```
//!
//! Unknown keys are rejected. Every section is optional; an inline
//! experiment replaces the preset with `model`, `true_params`, `prior`,
//! `designs` and `noise`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{EntropyEstimator, EstimatorKind};
use crate::experiments::{ExperimentSpec, ModelSpec, PriorSpec, ReuseDemoConfig, SpecError};
use crate::models::NoiseSpec;
use crate::utility::{DesignSpace, UtilityConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.to_string() }
}

impl From<SpecError> for ConfigError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Invalid { field, reason } => ConfigError::Invalid { field, reason },
            SpecError::UnknownPreset(p) => invalid("experiment.preset", format!("unknown preset `{p}`")),
            other => invalid("experiment", other),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub utility: UtilitySection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig1: Option<ReuseDemoConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub preset: Option<String>,
    pub model: Option<ModelSpec>,
    pub true_params: Option<Vec<f64>>,
    pub prior: Option<PriorSpec>,
    pub designs: Option<DesignsSection>,
    pub noise: Option<NoiseSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DesignsSection {
    /// `count` evenly spaced values from `start` to `stop`.
    Linspace { start: f64, stop: f64, count: usize },
    /// `start, start + step, ...` up to `stop`.
    Step { start: f64, stop: f64, step: f64 },
    Values { values: Vec<f64> },
}

/// Upper bound on generated design grids.
pub const MAX_DESIGNS: usize = 1_000_000;

impl DesignsSection {
    pub fn build(&self) -> Result<DesignSpace, ConfigError> {
        let r = match self {
            DesignsSection::Linspace { start, stop, count } => {
                if *count > MAX_DESIGNS {
                    return Err(invalid("experiment.designs", "too many settings"));
                }
                if !(start.is_finite() && stop.is_finite() && start < stop) && *count > 1 {
                    return Err(invalid("experiment.designs", "need finite start < stop"));
                }
                DesignSpace::linspace(*start, *stop, *count)
            }
            DesignsSection::Step { start, stop, step } => {
                if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
                    return Err(invalid("experiment.designs", "values must be finite"));
                }
                if (stop - start) / step > MAX_DESIGNS as f64 {
                    return Err(invalid("experiment.designs", "too many settings"));
                }
                DesignSpace::stepped(*start, *stop, *step)
            }
            DesignsSection::Values { values } => DesignSpace::from_scalars(values.clone()),
        };
        r.map_err(|e| invalid("experiment.designs", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub n_particles: Option<usize>,
    pub resample_ratio: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    /// `kld`, `variance`, `pseudo`, `maxmin`, `random`, optionally `name@N_s`.
    pub algorithm: Option<String>,
    pub n_samples: Option<usize>,
    pub estimator: Option<String>,
    /// Fixed spacing `m` for the entropy estimator.
    pub spacing: Option<usize>,
    pub reuse: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_epochs: Option<usize>,
    pub n_runs: Option<usize>,
    pub base_seed: Option<u64>,
    /// Weighted posterior draws for the per-epoch entropy metric.
    pub summary_draws: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Snapshot,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub formats: Option<Vec<OutputFormat>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<String>,
    pub utility: Option<String>,
    pub n_samples: Option<usize>,
    pub n_epochs: Option<usize>,
    pub n_runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub no_reuse: bool,
}

/// A validated configuration ready to run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ExperimentSpec,
    pub n_runs: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub fig1: ReuseDemoConfig,
}

pub const DEFAULT_RUNS: usize = 100;

impl RunConfigFile {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        serde_json::from_slice(bytes).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&bytes)
    }

    /// Parses and fully validates a document.
    pub fn parse_validated(bytes: &[u8]) -> Result<(Self, Resolved), ConfigError> {
        let file = Self::from_json(bytes)?;
        let resolved = file.resolve(&Overrides::default())?;
        Ok((file, resolved))
    }

    pub fn resolve(&self, ov: &Overrides) -> Result<Resolved, ConfigError> {
        let exp = &self.experiment;
        let preset = ov.preset.as_ref().or(exp.preset.as_ref());
        let mut spec = match (preset, exp.model) {
            (Some(name), _) => ExperimentSpec::preset(name)?,
            (None, Some(model)) => {
                let missing = |f: &str| invalid(&format!("experiment.{f}"), "required for an inline model");
                let model_arc = model.build()?;
                ExperimentSpec {
                    name: match model {
                        ModelSpec::Lorentzian { .. } => "lorentzian".into(),
                        ModelSpec::Ramsey {} => "ramsey".into(),
                    },
                    model_spec: model,
                    model: model_arc,
                    true_params: exp.true_params.clone().ok_or_else(|| missing("true_params"))?,
                    noise: NoiseSpec::new(exp.noise.ok_or_else(|| missing("noise"))?.sigma)
                        .map_err(|e| invalid("experiment.noise.sigma", e))?,
                    designs: exp.designs.as_ref().ok_or_else(|| missing("designs"))?.build()?,
                    prior: exp.prior.clone().ok_or_else(|| missing("prior"))?,
                    ..crate::experiments::lorentzian_preset()
                }
            }
            (None, None) => return Err(invalid("experiment.preset", "specify a preset or an inline model")),
        };
        if preset.is_some() {
            if let Some(model) = exp.model {
                spec.model = model.build()?;
                spec.model_spec = model;
            }
            if let Some(t) = &exp.true_params {
                spec.true_params = t.clone();
            }
            if let Some(n) = exp.noise {
                spec.noise = NoiseSpec::new(n.sigma).map_err(|e| invalid("experiment.noise.sigma", e))?;
            }
            if let Some(d) = &exp.designs {
                spec.designs = d.build()?;
            }
            if let Some(p) = &exp.prior {
                spec.prior = p.clone();
            }
        }

        if let Some(n) = self.filter.n_particles {
            spec.n_particles = n;
        }
        if let Some(r) = self.filter.resample_ratio {
            spec.filter.resample_threshold = r;
        }
        if let Some(a) = self.filter.alpha {
            spec.filter.jitter_alpha = a;
        }

        let label = ov.utility.as_ref().or(self.utility.algorithm.as_ref());
        let mut utility = match label {
            Some(l) => UtilityConfig::parse_label(l).map_err(|e| invalid("utility.algorithm", e))?,
            None => spec.utility,
        };
        let label_has_samples = label.is_some_and(|l| l.contains('@'));
        if let Some(n) = ov.n_samples.or(if label_has_samples && ov.utility.is_some() { None } else { self.utility.n_samples }) {
            utility.n_samples = n;
        }
        let kind = match &self.utility.estimator {
            Some(s) => s.parse::<EstimatorKind>().map_err(|e| invalid("utility.estimator", e))?,
            None => utility.estimator.kind,
        };
        utility.estimator = EntropyEstimator { kind, m: self.utility.spacing };
        if self.utility.spacing == Some(0) {
            return Err(invalid("utility.spacing", "must be at least 1"));
        }
        if let Some(r) = self.utility.reuse {
            utility.reuse_samples = r;
        }
        if ov.no_reuse {
            utility.reuse_samples = false;
        }
        utility.validate().map_err(|e| invalid("utility.n_samples", e))?;
        spec.utility = utility;

        if let Some(n) = ov.n_epochs.or(self.run.n_epochs) {
            spec.n_epochs = n;
        }
        if let Some(n) = self.run.summary_draws {
            spec.summary_draws = n;
        }
        if spec.n_epochs == 0 {
            return Err(invalid("run.n_epochs", "need at least one epoch"));
        }
        let n_runs = ov.n_runs.or(self.run.n_runs).unwrap_or(DEFAULT_RUNS);
        if n_runs == 0 {
            return Err(invalid("run.n_runs", "need at least one run"));
        }
        let base_seed = ov.seed.or(self.run.base_seed).unwrap_or(0);
        spec.seed = base_seed;
        if spec.n_particles < 2 {
            return Err(invalid("filter.n_particles", "need at least 2 particles"));
        }
        if !(spec.filter.resample_threshold > 0.0 && spec.filter.resample_threshold <= 1.0) {
            return Err(invalid("filter.resample_ratio", "must lie in (0, 1]"));
        }
        if !(spec.filter.jitter_alpha.is_finite() && spec.filter.jitter_alpha > 0.0) {
            return Err(invalid("filter.alpha", "must be positive"));
        }
        spec.validate()?;

        // `--n-samples` is applied by the fig1 command itself, since it
        // would otherwise also constrain the utility sample count.
        let mut fig1 = self.fig1.unwrap_or_default();
        if let Some(s) = ov.seed.or(self.run.base_seed) {
            fig1.seed = s;
        }
        if self.fig1.is_some() {
            fig1.validate()?;
        }

        Ok(Resolved {
            spec,
            n_runs,
            base_seed,
            output_dir: ov.out.clone().or_else(|| self.output.directory.clone()).unwrap_or_else(|| PathBuf::from("out")),
            formats: self.output.formats.clone().unwrap_or_else(|| vec![OutputFormat::Csv, OutputFormat::Json]),
            fig1,
        })
    }
}
