//! Coverage of Wald intervals built from the asymptotic covariance `Σ₀`.

use std::fs;
use std::path::Path;

use carma_renewal::asymptotics::{
    monte_carlo_covariance, series_covariance, AsymptoticCovariance, MonteCarloSettings, SeriesSettings,
};
use carma_renewal::whittle::SpectralContext;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::harness::{run_experiment, RowStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageOptions {
    /// Nominal level of each interval.
    pub level: f64,
    /// Used when the inter-arrival times are exponential.
    pub series: SeriesSettings,
    /// Used otherwise.
    pub monte_carlo: MonteCarloSettings,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self { level: 0.95, series: SeriesSettings::default(), monte_carlo: MonteCarloSettings::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCoverage {
    pub name: String,
    pub truth: f64,
    /// Replications with a usable estimate.
    pub count: usize,
    pub covered: usize,
    pub coverage: f64,
    /// `√(c(1−c)/count)`.
    pub binomial_se: f64,
    /// Moments of `z = √n(θ̂ − θ₀)/√Σ₀,ii`.
    pub residual_mean: f64,
    pub residual_variance: f64,
    pub residual_skew: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    pub mode: carma_renewal::SamplingMode,
    pub covariance: AsymptoticCovariance,
    pub params: Vec<ParamCoverage>,
}

/// `Σ₀` at the configured truth: the truncated series for exponential
/// sampling, simulation otherwise.
pub fn sigma0_for(config: &ExperimentConfig, opts: &CoverageOptions) -> Result<AsymptoticCovariance> {
    let config = config.materialize()?;
    let ctx = SpectralContext::new(config.model.p, config.model.q, config.sampling.clone(), config.quadrature)?;
    let theta0 = &config.model.theta0;
    let cov = if config.sampling.is_exponential() {
        series_covariance(&ctx, theta0, &config.noise, &opts.series)
    } else {
        monte_carlo_covariance(&ctx, theta0, &config.noise, &opts.monte_carlo)
    };
    cov.map_err(|e| HarnessError::Config(format!("Σ₀ is unavailable at θ₀: {e}")))
}

fn moments(z: &[f64]) -> (f64, f64, f64) {
    let n = z.len() as f64;
    let m = z.iter().sum::<f64>() / n;
    let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m3 = z.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    (m, v, m3 / v.powf(1.5))
}

/// Runs the experiment and checks `θ̂_i ± z_{(1+level)/2} √(Σ₀,ii / n)` against
/// `θ₀`, with `n` the number of observations of each replication.
pub fn coverage_study(
    config: &ExperimentConfig,
    opts: &CoverageOptions,
    out_dir: Option<&Path>,
) -> Result<CoverageReport> {
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(HarnessError::Config(format!("level must lie in (0, 1), got {}", opts.level)));
    }
    let cov = sigma0_for(config, opts)?;
    let report = run_experiment(config, out_dir)?;
    let z_crit = Normal::standard().inverse_cdf(0.5 + opts.level / 2.0);
    let good: Vec<_> = report.rows.iter().filter(|r| r.status != RowStatus::Failed && r.n_obs > 0).collect();
    let params = report
        .header
        .parameter_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let truth = report.header.config.model.theta0[i];
            let s = cov.sigma0[(i, i)].sqrt();
            let z: Vec<f64> = good.iter().map(|r| (r.n_obs as f64).sqrt() * (r.theta_hat[i] - truth) / s).collect();
            let covered = z.iter().filter(|v| v.abs() <= z_crit).count();
            let count = z.len();
            let c = covered as f64 / count as f64;
            let (m, v, sk) = moments(&z);
            ParamCoverage {
                name: name.clone(),
                truth,
                count,
                covered,
                coverage: c,
                binomial_se: (c * (1.0 - c) / count as f64).sqrt(),
                residual_mean: m,
                residual_variance: v,
                residual_skew: sk,
            }
        })
        .collect();
    let out = CoverageReport { level: opts.level, mode: report.header.config.mode, covariance: cov, params };
    if let Some(dir) = out_dir {
        fs::write(dir.join("coverage.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    }
    Ok(out)
}
