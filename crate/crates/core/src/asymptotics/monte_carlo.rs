//! Monte Carlo estimate of `Q` as `n·Cov(J_n(G_1), …, J_n(G_d))` across replications.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::weight::WeightFunction;
use crate::error::{ensure, Result};
use crate::model::CarmaModel;
use crate::noise::NoiseSpec;
use crate::sampling::{SamplingMode, SamplingSpec};
use crate::simulate::{simulate_series, InitPolicy, DEFAULT_STEP};
use crate::whittle::periodogram::integrated_time_domain;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSettings {
    pub n: usize,
    pub reps: usize,
    pub h: f64,
    pub seed: u64,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        Self { n: 500, reps: 1000, h: DEFAULT_STEP, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloQ {
    #[serde(with = "super::rows")]
    pub q: DMatrix<f64>,
    /// Jackknife standard errors of the entries of `q`.
    #[serde(with = "super::rows")]
    pub se: DMatrix<f64>,
    /// Average of `√n·J_n(G_i)`.
    pub mean: Vec<f64>,
    pub n: usize,
    pub reps: usize,
}

/// Sample covariance of the rows of `x` with leave-one-out jackknife errors.
pub fn covariance_with_jackknife(x: &[Vec<f64>]) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let r = x.len();
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|i| x.iter().map(|v| v[i]).sum::<f64>() / r as f64).collect();
    let c: Vec<Vec<f64>> = x.iter().map(|v| v.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let mut s2 = DMatrix::<f64>::zeros(d, d);
    for v in &c {
        for i in 0..d {
            for j in 0..d {
                s2[(i, j)] += v[i] * v[j];
            }
        }
    }
    let cov = &s2 / (r as f64 - 1.0);
    // Centered sums are zero, so the leave-one-out sum of x is −v.
    let m = r as f64 - 1.0;
    let loo: Vec<DMatrix<f64>> = c
        .iter()
        .map(|v| DMatrix::from_fn(d, d, |i, j| (s2[(i, j)] - v[i] * v[j] - v[i] * v[j] / m) / (m - 1.0)))
        .collect();
    let loo_mean = loo.iter().fold(DMatrix::zeros(d, d), |acc, a| acc + a) / r as f64;
    let var = loo.iter().fold(DMatrix::<f64>::zeros(d, d), |acc, a| acc + (a - &loo_mean).map(|e| e * e));
    let se = (var * (m / r as f64)).map(f64::sqrt);
    (cov, se, mean)
}

/// `n·Cov(J_n(G_i), J_n(G_j))` from `reps` simulated series of `n` observations.
///
/// Replication `r` uses ChaCha8 seeded with `seed` on stream `r`, and `J_n`
/// is evaluated in the time domain.
pub fn monte_carlo_q_weights(
    model: &CarmaModel,
    noise: &NoiseSpec,
    sampling: &SamplingSpec,
    weights: &[&dyn WeightFunction],
    settings: &MonteCarloSettings,
) -> Result<MonteCarloQ> {
    ensure(settings.reps >= 100, || format!("at least 100 replications are needed, got {}", settings.reps))?;
    ensure(settings.n >= 2, || "n must be at least 2".into())?;
    ensure(!weights.is_empty(), || "no weights given".into())?;
    let init = InitPolicy::default_for(model, noise);
    let scale = (settings.n as f64).sqrt();
    let mut rows = Vec::with_capacity(settings.reps);
    for r in 0..settings.reps {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(r as u64);
        let series =
            simulate_series(model, noise, sampling, SamplingMode::Count { n: settings.n }, settings.h, init, &mut rng)?;
        rows.push(weights.iter().map(|w| scale * integrated_time_domain(&series, *w)).collect::<Vec<f64>>());
    }
    let (cov, se, mean) = covariance_with_jackknife(&rows);
    Ok(MonteCarloQ { q: cov, se, mean, n: settings.n, reps: settings.reps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jackknife_matches_brute_force() {
        let x: Vec<Vec<f64>> =
            (0..12).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos() + 0.1 * i as f64]).collect();
        let (cov, se, _) = covariance_with_jackknife(&x);
        let r = x.len();
        let loo: Vec<DMatrix<f64>> = (0..r)
            .map(|k| {
                let sub: Vec<Vec<f64>> =
                    x.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v.clone()).collect();
                covariance_with_jackknife_plain(&sub)
            })
            .collect();
        let full = covariance_with_jackknife_plain(&x);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(cov[(i, j)], full[(i, j)], epsilon = 1e-12);
                let m: f64 = loo.iter().map(|c| c[(i, j)]).sum::<f64>() / r as f64;
                let v: f64 = loo.iter().map(|c| (c[(i, j)] - m).powi(2)).sum::<f64>() * (r as f64 - 1.0) / r as f64;
                assert_abs_diff_eq!(se[(i, j)], v.sqrt(), epsilon = 1e-12);
            }
        }
    }

    fn covariance_with_jackknife_plain(x: &[Vec<f64>]) -> DMatrix<f64> {
        let r = x.len() as f64;
        let d = x[0].len();
        let mean: Vec<f64> = (0..d).map(|i| x.iter().map(|v| v[i]).sum::<f64>() / r).collect();
        DMatrix::from_fn(d, d, |i, j| x.iter().map(|v| (v[i] - mean[i]) * (v[j] - mean[j])).sum::<f64>() / (r - 1.0))
    }
}
