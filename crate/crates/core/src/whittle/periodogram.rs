//! Periodogram of an irregularly sampled series and integrated periodograms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::asymptotics::weight::WeightFunction;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::series::SampledSeries;

/// Re-anchor the rotation recurrence this often to bound drift.
const REANCHOR: usize = 256;

/// `I_{Z,n}(u) = (1/2πn) |Σ_k e^{−iuτ_k} Y(τ_k)|²`.
pub fn periodogram(series: &SampledSeries, u: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (&t, &y) in series.times.iter().zip(&series.values) {
        let (s, c) = (u * t).sin_cos();
        re += y * c;
        im -= y * s;
    }
    (re * re + im * im) / (2.0 * PI * series.len() as f64)
}

/// Periodogram on the half grid of a [`QuadratureRule`].
///
/// Above `U_max` the periodogram is replaced by its average level
/// `(1/2πn) Σ Y²`, the counterpart of the flat limit of `φ_Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodogramGrid {
    pub values: Vec<f64>,
    pub high_level: f64,
    pub n: usize,
}

impl PeriodogramGrid {
    pub fn new(series: &SampledSeries, rule: &QuadratureRule) -> Self {
        let m = rule.m();
        let mut re = vec![0.0; m + 1];
        let mut im = vec![0.0; m + 1];
        for (&t, &y) in series.times.iter().zip(&series.values) {
            let (ds, dc) = (rule.du * t).sin_cos();
            let (mut s, mut c) = (0.0f64, 1.0f64);
            for j in 0..=m {
                if j % REANCHOR == 0 && j > 0 {
                    let (s0, c0) = (j as f64 * rule.du * t).sin_cos();
                    s = s0;
                    c = c0;
                }
                re[j] += y * c;
                im[j] += y * s;
                let ns = s * dc + c * ds;
                c = c * dc - s * ds;
                s = ns;
            }
        }
        let n = series.len();
        let norm = 1.0 / (2.0 * PI * n as f64);
        let values = re.iter().zip(&im).map(|(a, b)| (a * a + b * b) * norm).collect();
        let high_level = series.values.iter().map(|y| y * y).sum::<f64>() * norm;
        Self { values, high_level, n }
    }

    pub fn is_zero(&self) -> bool {
        self.high_level == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    Frequency,
    TimeDomain,
}

/// `J_n = ∫ G(u) I_{Z,n}(u) du`.
pub fn integrated_periodogram(
    series: &SampledSeries,
    weight: &dyn WeightFunction,
    rule: &QuadratureRule,
    method: IntegrationMethod,
) -> Result<f64> {
    match method {
        IntegrationMethod::Frequency => {
            let grid = PeriodogramGrid::new(series, rule);
            Ok(integrated_on_grid(&grid, weight, rule))
        }
        IntegrationMethod::TimeDomain => Ok(integrated_time_domain(series, weight)),
    }
}

/// Frequency-domain `J_n` from a precomputed periodogram grid.
pub fn integrated_on_grid(grid: &PeriodogramGrid, weight: &dyn WeightFunction, rule: &QuadratureRule) -> f64 {
    let body: f64 =
        rule.weights().iter().enumerate().map(|(m, w)| w * weight.value(m as f64 * rule.du) * grid.values[m]).sum();
    body + grid.high_level * weight.tail_integral(rule.upper())
}

/// `(1/n) Σ_k Σ_j Ĝ_R(τ_k − τ_j) Y(τ_k) Y(τ_j)`, truncated where `Ĝ_R` is negligible.
pub fn integrated_time_domain(series: &SampledSeries, weight: &dyn WeightFunction) -> f64 {
    let cutoff = weight.transform_cutoff();
    let (t, y) = (&series.times, &series.values);
    let n = t.len();
    let g0 = weight.cos_transform(0.0);
    let mut diag = 0.0;
    let mut off = 0.0;
    for k in 0..n {
        diag += y[k] * y[k];
        let mut acc = 0.0;
        for j in k + 1..n {
            let d = t[j] - t[k];
            if d > cutoff {
                break;
            }
            acc += weight.cos_transform(d) * y[j];
        }
        off += y[k] * acc;
    }
    (g0 * diag + 2.0 * off) / n as f64
}

/// Checks that the two `J_n` evaluations agree within `rel_tol`.
pub fn check_duality(
    series: &SampledSeries,
    weight: &dyn WeightFunction,
    rule: &QuadratureRule,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let f = integrated_periodogram(series, weight, rule, IntegrationMethod::Frequency)?;
    let t = integrated_periodogram(series, weight, rule, IntegrationMethod::TimeDomain)?;
    let gap = (f - t).abs() / f.abs().max(t.abs()).max(f64::MIN_POSITIVE);
    if gap > rel_tol {
        return Err(Error::Quadrature(format!(
            "frequency ({f:e}) and time-domain ({t:e}) integrated periodograms differ by {gap:e} relative"
        )));
    }
    Ok((f, t))
}
