//! Objectives `K̂_n` and `K`, the estimator and the noise-variance estimator.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::optimize::{nelder_mead, scan_golden, LocalResult, SimplexSettings};
use super::periodogram::PeriodogramGrid;
use super::spectrum::{DensityGrid, SpectralContext};
use crate::error::{ensure, Error, Result};
use crate::model::ParamBox;
use crate::quadrature::{compensated_sum, QuadratureRule};
use crate::sampling::SamplingMode;
use crate::series::SampledSeries;

/// `K̂_n(θ) = ∫ log g(u,θ)/(1+u²) I_{Z,n}(u) du` for one series.
///
/// The periodogram is computed once; each `θ` costs one pass over the grid.
pub struct WhittleObjective<'a> {
    ctx: &'a SpectralContext,
    pgram: PeriodogramGrid,
    weighted: Vec<f64>,
}

impl<'a> WhittleObjective<'a> {
    pub fn new(ctx: &'a SpectralContext, series: &SampledSeries) -> Self {
        let pgram = PeriodogramGrid::new(series, ctx.rule());
        let weighted =
            ctx.weights().iter().zip(ctx.nodes()).zip(&pgram.values).map(|((w, u), i)| w * i / (1.0 + u * u)).collect();
        Self { ctx, pgram, weighted }
    }

    pub fn periodogram(&self) -> &PeriodogramGrid {
        &self.pgram
    }

    pub fn khat(&self, theta: &[f64]) -> Result<f64> {
        let model = self.ctx.model(theta, 1.0)?;
        let grid = self.ctx.density_grid(&model)?;
        Ok(self.khat_from_grid(&grid))
    }

    fn khat_from_grid(&self, grid: &DensityGrid) -> f64 {
        let ln_s2 = grid.s2.ln();
        let body = compensated_sum(self.weighted.iter().zip(&grid.phi).map(|(w, phi)| w * (phi.ln() - ln_s2)));
        body + grid.log_g_inf() * self.pgram.high_level * self.ctx.rule().tail_mass()
    }

    /// `ŝ²_n = ∫ I_{Z,n}(u)/(1+u²) du`.
    pub fn s2_hat(&self) -> f64 {
        compensated_sum(self.weighted.iter().copied()) + self.pgram.high_level * self.ctx.rule().tail_mass()
    }
}

/// `K̂_n(θ)`.
pub fn objective_khat(ctx: &SpectralContext, series: &SampledSeries, theta: &[f64]) -> Result<f64> {
    WhittleObjective::new(ctx, series).khat(theta)
}

/// `K(θ) = ∫ log g(u,θ)/(1+u²) φ_Z(u,θ₀) du`.
pub fn objective_k(ctx: &SpectralContext, theta: &[f64], theta0: &[f64], sigma_l2: f64) -> Result<f64> {
    let truth = ctx.density_grid(&ctx.model(theta0, sigma_l2)?)?;
    objective_k_against(ctx, theta, &truth)
}

/// `K(θ)` against a precomputed `φ_Z(·,θ₀)` grid.
pub fn objective_k_against(ctx: &SpectralContext, theta: &[f64], truth: &DensityGrid) -> Result<f64> {
    let g = ctx.density_grid(&ctx.model(theta, 1.0)?)?;
    let log_g: Vec<f64> = g.log_g().iter().zip(&truth.phi).map(|(l, p)| l * p).collect();
    Ok(ctx.integrate_weighted(&log_g, g.log_g_inf() * truth.phi_inf))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    FixedN,
    FixedT,
}

impl From<SamplingMode> for EstimationMode {
    fn from(m: SamplingMode) -> Self {
        match m {
            SamplingMode::Count { .. } => EstimationMode::FixedN,
            SamplingMode::Horizon { .. } => EstimationMode::FixedT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Number of starts for the simplex search (box centre first).
    pub starts: usize,
    /// Scan resolution of the scalar search.
    pub scan_points: usize,
    pub param_tol: f64,
    pub objective_tol: f64,
    pub max_iter: usize,
    /// Seed of the Latin-hypercube start design.
    pub seed: u64,
    /// Refine `Δu` when the sampling span exceeds `2π/Δu − 60`.
    pub alias_guard: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            scan_points: 60,
            param_tol: 1e-6,
            objective_tol: 1e-10,
            max_iter: 4000,
            seed: 0,
            alias_guard: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub method: String,
    pub starts: Vec<LocalResult>,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat: Vec<f64>,
    pub sigma_l2_hat: f64,
    pub objective_value: f64,
    pub optimizer_trace: OptimizerTrace,
    pub mode: EstimationMode,
    pub n_obs: usize,
    /// Some coordinate of `θ̂` sits on the box boundary.
    pub boundary_hit: bool,
    /// Two starts ended more than `1e-3` apart.
    pub starts_disagree: bool,
    /// `Σ₀/n`, when requested.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub standard_errors: Option<Vec<f64>>,
    /// Frequency rule actually used.
    pub rule: QuadratureRule,
}

fn lhs_points(bx: &ParamBox, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = bx.dim();
    let mut rng = StdRng::seed_from_u64(seed);
    let cols: Vec<Vec<usize>> = (0..d)
        .map(|_| {
            let mut v: Vec<usize> = (0..count).collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    (0..count)
        .map(|k| {
            (0..d)
                .map(|i| {
                    let cell = cols[i][k] as f64 + rng.random::<f64>();
                    bx.lower[i] + (bx.upper[i] - bx.lower[i]) * cell / count as f64
                })
                .collect()
        })
        .collect()
}

/// Maximizes `K̂_n` over the box and estimates `σ_L²`.
pub fn estimate(
    ctx: &SpectralContext,
    series: &SampledSeries,
    bx: &ParamBox,
    config: &EstimatorConfig,
) -> Result<EstimationResult> {
    series.validate()?;
    let refined;
    let ctx = match ctx.rule().alias_free(series_span(series)) {
        Some(rule) if config.alias_guard => {
            refined = ctx.with_rule(rule)?;
            &refined
        }
        _ => ctx,
    };
    ensure(bx.p == ctx.p() && bx.q == ctx.q(), || "box orders do not match the context".into())?;
    let obj = WhittleObjective::new(ctx, series);
    if obj.periodogram().is_zero() {
        return Err(Error::DegenerateSeries("all observations are zero".into()));
    }
    let f = |theta: &[f64]| obj.khat(theta).unwrap_or(f64::NEG_INFINITY);
    let (method, locals) = if bx.dim() == 1 {
        let r =
            scan_golden(|x| f(&[x]), bx.lower[0], bx.upper[0], config.scan_points, config.param_tol, config.max_iter);
        ("scan+golden", vec![r])
    } else {
        let mut starts = vec![bx.center()];
        starts.extend(lhs_points(bx, config.starts.saturating_sub(1), config.seed));
        let settings = SimplexSettings {
            x_tol: config.param_tol,
            f_tol: config.objective_tol,
            max_iter: config.max_iter,
            ..SimplexSettings::default()
        };
        let rs = starts.iter().map(|s| nelder_mead(f, s, &bx.lower, &bx.upper, settings)).collect();
        ("nelder-mead", rs)
    };
    let evaluations = locals.iter().map(|r| r.evaluations).sum();
    let mut best: Option<&LocalResult> = None;
    for r in &locals {
        if r.value.is_finite() && best.is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::Optimization("every start failed validation".into()))?;
    let theta_hat = best.x.clone();
    let starts_disagree = locals.iter().any(|a| {
        a.value.is_finite()
            && locals.iter().any(|b| b.value.is_finite() && a.x.iter().zip(&b.x).any(|(x, y)| (x - y).abs() > 1e-3))
    });
    let boundary_hit = (0..bx.dim()).any(|i| {
        let tol = 1e-5 * (bx.upper[i] - bx.lower[i]);
        theta_hat[i] - bx.lower[i] <= tol || bx.upper[i] - theta_hat[i] <= tol
    });
    let sigma_l2_hat = noise_variance_from(ctx, &obj, &theta_hat)?;
    Ok(EstimationResult {
        objective_value: obj.khat(&theta_hat)?,
        theta_hat,
        sigma_l2_hat,
        optimizer_trace: OptimizerTrace { method: method.into(), starts: locals.clone(), evaluations },
        mode: series.mode.into(),
        n_obs: series.len(),
        boundary_hit,
        starts_disagree,
        covariance: None,
        standard_errors: None,
        rule: *ctx.rule(),
    })
}

/// `τ_n − τ_1`.
pub fn series_span(series: &SampledSeries) -> f64 {
    match (series.times.first(), series.times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    }
}

fn noise_variance_from(ctx: &SpectralContext, obj: &WhittleObjective, theta: &[f64]) -> Result<f64> {
    let s2_tilde = ctx.density_grid(&ctx.model(theta, 1.0)?)?.s2;
    ensure(s2_tilde > 0.0, || "s̃² must be positive".into())?;
    Ok(obj.s2_hat() / s2_tilde)
}

/// `σ̂²_L = ŝ²_n / s̃²(θ̂)`.
pub fn estimate_noise_variance(ctx: &SpectralContext, series: &SampledSeries, theta_hat: &[f64]) -> Result<f64> {
    noise_variance_from(ctx, &WhittleObjective::new(ctx, series), theta_hat)
}

/// `σ̂²_L` from an arbitrary grid of periodogram-like values (e.g. `φ_Z` itself).
pub fn noise_variance_from_grid(
    ctx: &SpectralContext,
    values: &[f64],
    high_level: f64,
    theta_hat: &[f64],
) -> Result<f64> {
    let s2_hat = ctx.integrate_weighted(values, high_level);
    let s2_tilde = ctx.density_grid(&ctx.model(theta_hat, 1.0)?)?.s2;
    Ok(s2_hat / s2_tilde)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub i: usize,
    pub j: usize,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AliasingReport {
    pub thetas: Vec<Vec<f64>>,
    pub pairs: Vec<PairGap>,
    pub min_gap: Option<PairGap>,
    pub warnings: Vec<String>,
}

/// Pairwise `L²` distances between `g(·,θ_i)` on the frequency grid.
pub fn aliasing_diagnostic(ctx: &SpectralContext, thetas: &[Vec<f64>]) -> Result<AliasingReport> {
    let gs: Vec<DensityGrid> =
        thetas.iter().map(|t| ctx.model(t, 1.0).and_then(|m| ctx.density_grid(&m))).collect::<Result<_>>()?;
    let g: Vec<Vec<f64>> = gs.iter().map(|d| d.g()).collect();
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            let d2: Vec<f64> = g[i].iter().zip(&g[j]).map(|(a, b)| (a - b).powi(2)).collect();
            let gap = ctx.rule().integrate_even(&d2).sqrt();
            if gap < 1e-6 && thetas[i] != thetas[j] {
                warnings.push(format!(
                    "θ = {:?} and θ = {:?} give g within {gap:e}: possible aliasing",
                    thetas[i], thetas[j]
                ));
            }
            pairs.push(PairGap { i, j, gap });
        }
    }
    let min_gap = pairs.iter().min_by(|a, b| a.gap.total_cmp(&b.gap)).cloned();
    Ok(AliasingReport { thetas: thetas.to_vec(), pairs, min_gap, warnings })
}
