mod common;

use common::{conjugate_posterior, LinearModel};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use seqdesign::filter::seeded_rng;
use seqdesign::{FilterConfig, NoiseSpec, ParticleFilter};

fn linear_filter(n: usize, m0: f64, s0: f64, seed: u64) -> ParticleFilter {
    let prior = Normal::new(m0, s0).unwrap();
    ParticleFilter::from_prior(1, n, FilterConfig::default(), seeded_rng(seed, 1), |rng| vec![prior.sample(rng)]).unwrap()
}

#[test]
fn matches_conjugate_gaussian_posterior() {
    let (m0, s0, sigma, truth) = (0.0, 1.0, 0.5, 0.7);
    let noise = NoiseSpec::new(sigma).unwrap();
    let mut data_rng = seeded_rng(11, 0);
    let eta = Normal::new(0.0, sigma).unwrap();
    let mut f = linear_filter(100_000, m0, s0, 3);
    let mut data = Vec::new();
    let mut resamples = 0;
    for _ in 0..8 {
        let d: f64 = data_rng.random_range(0.2..1.5);
        let y = truth * d + eta.sample(&mut data_rng);
        data.push((d, y));
        resamples += f.bayes_update(y, &[d], &LinearModel, &noise).unwrap().resampled as usize;
        let total: f64 = f.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);

        let (mean, var) = conjugate_posterior(m0, s0 * s0, sigma * sigma, &data);
        let sd = var.sqrt();
        let got_mean = f.weighted_mean()[0];
        let got_sd = f.weighted_covariance()[0].sqrt();
        // Monte Carlo error of the mean is sd / sqrt(N_eff); jitter inflates
        // the variance by at most (1 + alpha) per resample.
        assert!((got_mean - mean).abs() < 0.03 * sd, "mean {got_mean} vs {mean}");
        let inflation = (1.0 + FilterConfig::default().jitter_alpha).powi(resamples as i32).sqrt();
        assert!(got_sd > sd * 0.97 && got_sd < sd * inflation * 1.03, "sd {got_sd} vs {sd}");
    }
    assert!(resamples > 0, "the scenario should exercise resampling");
}

#[test]
fn weights_stay_normalized() {
    let noise = NoiseSpec::new(0.1).unwrap();
    let mut f = linear_filter(2000, 0.0, 1.0, 9);
    let mut rng = seeded_rng(4, 0);
    for _ in 0..30 {
        let d: f64 = rng.random_range(-2.0..2.0);
        f.bayes_update(0.3 * d + 0.1 * rng.random::<f64>(), &[d], &LinearModel, &noise).unwrap();
        let total: f64 = f.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(f.weights().iter().all(|w| *w >= 0.0 && w.is_finite()));
        f.resample();
        let total: f64 = f.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
