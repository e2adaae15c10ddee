//! Sequential Bayesian experiment design.
//!
//! A particle filter tracks the posterior over model parameters; each epoch
//! the next measurement setting is picked by maximizing a utility computed
//! from simulated outcomes (KLD, variance, pseudo-utility or max-min), or
//! uniformly at random as a control.

pub mod config;
pub mod entropy;
pub mod experiments;
pub mod filter;
pub mod metrics;
pub mod models;
pub mod output;
pub mod reuse;
pub mod runner;
pub mod utility;

pub use entropy::{normal_entropy, spacing_entropy, EntropyEstimator, EstimatorKind};
pub use experiments::{lorentzian_preset, ramsey_preset, ExperimentSpec};
pub use filter::{FilterConfig, ParticleFilter, PosteriorSummary};
pub use models::{MeasurementModel, NoiseSpec};
pub use runner::{run, run_batch, RunRecord};
pub use utility::{DesignSpace, UtilityAlgorithm, UtilityConfig, UtilityResult};
