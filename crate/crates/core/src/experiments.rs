//! Built-in experiment presets and prior definitions.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::EntropyEstimator;
use crate::filter::FilterConfig;
use crate::models::{LorentzianModel, MeasurementModel, ModelError, NoiseSpec, RamseyModel};
use crate::utility::{DesignSpace, UtilityAlgorithm, UtilityConfig, UtilityError};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("unknown preset `{0}` (expected lorentzian or ramsey)")]
    UnknownPreset(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

fn invalid(field: &str, reason: impl Into<String>) -> SpecError {
    SpecError::Invalid { field: field.to_string(), reason: reason.into() }
}

/// Independent normal prior on one parameter, optionally truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalPrior {
    pub mean: f64,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl NormalPrior {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std, lower: None, upper: None }
    }

    fn admits(&self, v: f64) -> bool {
        self.lower.is_none_or(|lo| v > lo) && self.upper.is_none_or(|hi| v < hi)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Rejection sampling; validation guarantees the window overlaps the bulk.
        for _ in 0..100_000 {
            let z: f64 = StandardNormal.sample(rng);
            let v = self.mean + self.std * z;
            if self.admits(v) {
                return v;
            }
        }
        let lo = self.lower.unwrap_or(f64::NEG_INFINITY);
        let hi = self.upper.unwrap_or(f64::INFINITY);
        self.mean.clamp(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub components: Vec<NormalPrior>,
}

impl PriorSpec {
    pub fn new(components: Vec<NormalPrior>) -> Self {
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for (k, c) in self.components.iter().enumerate() {
            let field = format!("prior[{k}]");
            if !c.mean.is_finite() || !(c.std.is_finite() && c.std > 0.0) {
                return Err(invalid(&field, "mean must be finite and std positive"));
            }
            let lo = c.lower.unwrap_or(f64::NEG_INFINITY);
            let hi = c.upper.unwrap_or(f64::INFINITY);
            if !(lo < hi) {
                return Err(invalid(&field, "lower bound must be below upper bound"));
            }
            // Reject windows that miss the distribution by more than 5 sigma.
            if lo > c.mean + 5.0 * c.std || hi < c.mean - 5.0 * c.std {
                return Err(invalid(&field, "truncation window has negligible prior mass"));
            }
        }
        Ok(())
    }
}

/// Serializable choice of measurement model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Lorentzian { b: f64, a: f64, delta: f64 },
    Ramsey {},
}

impl ModelSpec {
    pub fn build(&self) -> Result<Arc<dyn MeasurementModel>, SpecError> {
        Ok(match *self {
            ModelSpec::Lorentzian { b, a, delta } => Arc::new(LorentzianModel::new(b, a, delta)?),
            ModelSpec::Ramsey {} => Arc::new(RamseyModel),
        })
    }
}

/// Everything needed to simulate one measurement run.
#[derive(Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub model_spec: ModelSpec,
    pub model: Arc<dyn MeasurementModel>,
    pub true_params: Vec<f64>,
    pub noise: NoiseSpec,
    pub designs: DesignSpace,
    pub prior: PriorSpec,
    pub n_particles: usize,
    pub filter: FilterConfig,
    pub n_epochs: usize,
    pub utility: UtilityConfig,
    /// Weighted posterior draws per parameter for the entropy metric.
    pub summary_draws: usize,
    pub seed: u64,
}

impl std::fmt::Debug for ExperimentSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentSpec")
            .field("name", &self.name)
            .field("model", &self.model_spec)
            .field("true_params", &self.true_params)
            .field("noise", &self.noise)
            .field("n_designs", &self.designs.len())
            .field("prior", &self.prior)
            .field("n_particles", &self.n_particles)
            .field("filter", &self.filter)
            .field("n_epochs", &self.n_epochs)
            .field("utility", &self.utility)
            .field("seed", &self.seed)
            .finish()
    }
}

pub const DEFAULT_PARTICLES: usize = 5000;
pub const DEFAULT_SUMMARY_DRAWS: usize = 10_000;

impl ExperimentSpec {
    pub fn preset(name: &str) -> Result<Self, SpecError> {
        match name.to_ascii_lowercase().as_str() {
            "lorentzian" => Ok(lorentzian_preset()),
            "ramsey" => Ok(ramsey_preset()),
            other => Err(SpecError::UnknownPreset(other.to_string())),
        }
    }

    pub fn with_utility(mut self, utility: UtilityConfig) -> Self {
        self.utility = utility;
        self
    }

    pub fn with_epochs(mut self, n_epochs: usize) -> Self {
        self.n_epochs = n_epochs;
        self
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.n_particles = n;
        self
    }

    pub fn param_names(&self) -> Vec<String> {
        self.model.param_names()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let dim = self.model.param_dim();
        if self.true_params.len() != dim {
            return Err(invalid("true_params", format!("expected {dim} values, got {}", self.true_params.len())));
        }
        if self.true_params.iter().any(|v| !v.is_finite()) {
            return Err(invalid("true_params", "values must be finite"));
        }
        if self.prior.dim() != dim {
            return Err(invalid("prior", format!("expected {dim} components, got {}", self.prior.dim())));
        }
        self.prior.validate()?;
        if self.designs.dim() != self.model.setting_dim() {
            return Err(invalid("designs", format!("settings must have dimension {}", self.model.setting_dim())));
        }
        if self.n_particles < 2 {
            return Err(invalid("n_particles", "need at least 2 particles"));
        }
        self.filter.validate().map_err(|e| invalid("filter", e.to_string()))?;
        if self.n_epochs == 0 {
            return Err(invalid("n_epochs", "need at least one epoch"));
        }
        if self.summary_draws < 4 {
            return Err(invalid("summary_draws", "need at least 4 draws"));
        }
        self.utility.validate()?;
        Ok(())
    }
}

/// Lorentzian dip: `b = 50000`, `a = -1000`, `delta = 0.1`, true center
/// 2.6, noise 1000, prior N(3.0, 0.5), 200 settings on [1.5, 4.5].
pub fn lorentzian_preset() -> ExperimentSpec {
    let model_spec = ModelSpec::Lorentzian { b: 50000.0, a: -1000.0, delta: 0.1 };
    ExperimentSpec {
        name: "lorentzian".into(),
        model: model_spec.build().expect("preset constants are valid"),
        model_spec,
        true_params: vec![2.6],
        noise: NoiseSpec::new(1000.0).expect("positive"),
        designs: DesignSpace::linspace(1.5, 4.5, 200).expect("valid grid"),
        prior: PriorSpec::new(vec![NormalPrior::new(3.0, 0.5)]),
        n_particles: DEFAULT_PARTICLES,
        filter: FilterConfig::default(),
        n_epochs: 1000,
        utility: UtilityConfig::new(UtilityAlgorithm::Kld),
        summary_draws: DEFAULT_SUMMARY_DRAWS,
        seed: 0,
    }
}

/// Decaying sinusoid: true `{h, c, omega0, t2} = {0.8, 0.13, 9.4, 10}`,
/// noise 0.13, settings 0.1..=20 in steps of 0.01.
pub fn ramsey_preset() -> ExperimentSpec {
    let model_spec = ModelSpec::Ramsey {};
    ExperimentSpec {
        name: "ramsey".into(),
        model: model_spec.build().expect("preset constants are valid"),
        model_spec,
        true_params: vec![0.8, 0.13, 9.4, 10.0],
        noise: NoiseSpec::new(0.13).expect("positive"),
        designs: DesignSpace::stepped(0.1, 20.0, 0.01).expect("valid grid"),
        prior: PriorSpec::new(vec![
            NormalPrior::new(0.8, 0.2),
            NormalPrior::new(0.13, 0.05),
            NormalPrior::new(9.5, 1.0),
            NormalPrior { mean: 10.0, std: 3.0, lower: Some(0.5), upper: None },
        ]),
        n_particles: DEFAULT_PARTICLES,
        filter: FilterConfig::default(),
        n_epochs: 1000,
        utility: UtilityConfig::new(UtilityAlgorithm::Kld),
        summary_draws: DEFAULT_SUMMARY_DRAWS,
        seed: 0,
    }
}

/// Settings for the sample-reuse demonstration: a unit-amplitude
/// Lorentzian `1 / (((x - x0) / width)^2 + 1) + eta` with normally
/// distributed center and noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReuseDemoConfig {
    pub n_samples: usize,
    pub n_designs: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub width: f64,
    pub center_mean: f64,
    pub center_std: f64,
    pub noise_sigma: f64,
    pub estimator: EntropyEstimator,
    pub seed: u64,
}

impl Default for ReuseDemoConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            n_designs: 200,
            x_min: 2.0,
            x_max: 4.0,
            width: 0.1,
            center_mean: 2.6,
            center_std: 0.2,
            noise_sigma: 0.05,
            estimator: EntropyEstimator::default(),
            seed: 0,
        }
    }
}

impl ReuseDemoConfig {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.n_samples < 4 {
            return Err(invalid("fig1.n_samples", "need at least 4 samples"));
        }
        if self.n_designs < 2 {
            return Err(invalid("fig1.n_designs", "need at least 2 designs"));
        }
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(invalid("fig1.x_min", "x_min must be below x_max"));
        }
        if !(self.width > 0.0) || !(self.center_std > 0.0) || !self.center_mean.is_finite() {
            return Err(invalid("fig1.width", "width and center_std must be positive"));
        }
        NoiseSpec::new(self.noise_sigma)?;
        Ok(())
    }
}
