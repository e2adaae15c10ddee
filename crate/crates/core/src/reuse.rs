//! Sample-reuse demonstration: KLD utility of a unit Lorentzian computed
//! with one shared set of center/noise draws versus fresh draws per setting.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::experiments::{ReuseDemoConfig, SpecError};
use crate::filter::seeded_rng;
use crate::models::{LorentzianModel, NoiseSpec, OutcomeMatrix, ParamSamples};
use crate::utility::{simulate_outcomes_with, utility_kld, DesignSpace};

#[derive(Debug, Clone)]
pub struct ReuseDemoOutput {
    pub reuse: bool,
    pub designs: DesignSpace,
    /// Noisy simulated outcomes, one row per setting.
    pub outcomes: OutcomeMatrix,
    pub utilities: Vec<f64>,
}

impl ReuseDemoOutput {
    pub fn argmax_setting(&self) -> f64 {
        let best = self
            .utilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.designs.get(best)[0]
    }

    pub fn roughness(&self) -> f64 {
        mean_abs_successive_diff(&self.utilities)
    }
}

pub fn mean_abs_successive_diff(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (values.len() - 1) as f64
}

pub fn reuse_demo<R: Rng + ?Sized>(cfg: &ReuseDemoConfig, reuse: bool, rng: &mut R) -> Result<ReuseDemoOutput, SpecError> {
    cfg.validate()?;
    let model = LorentzianModel::new(0.0, 1.0, cfg.width)?;
    let noise = NoiseSpec::new(cfg.noise_sigma)?;
    let designs = DesignSpace::linspace(cfg.x_min, cfg.x_max, cfg.n_designs)?;
    let center = Normal::new(cfg.center_mean, cfg.center_std).expect("validated");
    let outcomes = simulate_outcomes_with(&model, &designs, &noise, cfg.n_samples, reuse, true, rng, |n, rng| {
        ParamSamples::new(1, (0..n).map(|_| center.sample(rng)).collect())
    });
    let utilities = utility_kld(&outcomes, &noise, &cfg.estimator)?;
    Ok(ReuseDemoOutput { reuse, designs, outcomes, utilities })
}

/// Both modes from independent streams of `cfg.seed` (trial `trial`).
pub fn reuse_pair(cfg: &ReuseDemoConfig, trial: u64) -> Result<(ReuseDemoOutput, ReuseDemoOutput), SpecError> {
    let seed = crate::runner::split_seed(cfg.seed, trial);
    let on = reuse_demo(cfg, true, &mut seeded_rng(seed, 10))?;
    let off = reuse_demo(cfg, false, &mut seeded_rng(seed, 11))?;
    Ok((on, off))
}
