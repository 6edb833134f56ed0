//! Derivative weights `φ^{(i)}(u,θ₀) = ∂_i log g(u,θ₀)/(1+u²)` and the matrix `W`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::weight::GridWeight;
use crate::error::{ensure, Error, Result};
use crate::whittle::estimate::objective_k_against;
use crate::whittle::spectrum::{DensityGrid, SpectralContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    Central,
    Forward,
    Backward,
}

/// Difference scheme and step chosen for one coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdStep {
    pub scheme: FdScheme,
    pub step: f64,
}

fn shifted(theta: &[f64], i: usize, by: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    t[i] += by;
    t
}

/// Central step `10⁻⁵·max(1,|θ_i|)`, shrunk up to twice by 10 when a shifted
/// point is invalid, then a second-order one-sided scheme.
pub fn plan_step(ctx: &SpectralContext, theta0: &[f64], i: usize) -> Result<FdStep> {
    ensure(i < theta0.len(), || format!("index {i} out of range for θ of length {}", theta0.len()))?;
    let valid = |t: &[f64]| ctx.model(t, 1.0).is_ok();
    ensure(valid(theta0), || format!("θ₀ = {theta0:?} is not a valid parameter"))?;
    let base = 1e-5 * theta0[i].abs().max(1.0);
    for k in 0..3 {
        let d = base / 10f64.powi(k);
        if valid(&shifted(theta0, i, d)) && valid(&shifted(theta0, i, -d)) {
            return Ok(FdStep { scheme: FdScheme::Central, step: d });
        }
    }
    let d = base / 100.0;
    if valid(&shifted(theta0, i, d)) && valid(&shifted(theta0, i, 2.0 * d)) {
        return Ok(FdStep { scheme: FdScheme::Forward, step: d });
    }
    if valid(&shifted(theta0, i, -d)) && valid(&shifted(theta0, i, -2.0 * d)) {
        return Ok(FdStep { scheme: FdScheme::Backward, step: d });
    }
    Err(Error::InvalidParameter(format!("no valid finite-difference stencil for θ_{} at {theta0:?}", i + 1)))
}

/// Applies the scheme to a vector-valued function of `θ`.
fn differentiate<F>(theta0: &[f64], i: usize, plan: FdStep, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let d = plan.step;
    let combine = |terms: &[(f64, Vec<f64>)], denom: f64| -> Vec<f64> {
        let n = terms[0].1.len();
        (0..n).map(|m| terms.iter().map(|(c, v)| c * v[m]).sum::<f64>() / denom).collect()
    };
    Ok(match plan.scheme {
        FdScheme::Central => {
            let p = f(&shifted(theta0, i, d))?;
            let m = f(&shifted(theta0, i, -d))?;
            combine(&[(1.0, p), (-1.0, m)], 2.0 * d)
        }
        FdScheme::Forward => {
            let f0 = f(theta0)?;
            let f1 = f(&shifted(theta0, i, d))?;
            let f2 = f(&shifted(theta0, i, 2.0 * d))?;
            combine(&[(-3.0, f0), (4.0, f1), (-1.0, f2)], 2.0 * d)
        }
        FdScheme::Backward => {
            let f0 = f(theta0)?;
            let f1 = f(&shifted(theta0, i, -d))?;
            let f2 = f(&shifted(theta0, i, -2.0 * d))?;
            combine(&[(3.0, f0), (-4.0, f1), (1.0, f2)], 2.0 * d)
        }
    })
}

/// `log g` on the half grid with `log g(∞)` appended.
fn log_g_with_limit(ctx: &SpectralContext, theta: &[f64]) -> Result<Vec<f64>> {
    let grid = ctx.density_grid(&ctx.model(theta, 1.0)?)?;
    let mut v = grid.log_g();
    v.push(grid.log_g_inf());
    Ok(v)
}

/// `∂_i log g` on the frequency grid for every coordinate, and `φ_Z(·,θ₀)`.
#[derive(Clone, Debug)]
pub struct DerivativeWeights {
    pub theta0: Vec<f64>,
    pub sigma_l2: f64,
    pub steps: Vec<FdStep>,
    pub dlog_g: Vec<Vec<f64>>,
    pub dlog_g_inf: Vec<f64>,
    pub truth: DensityGrid,
}

impl DerivativeWeights {
    pub fn compute(ctx: &SpectralContext, theta0: &[f64], sigma_l2: f64) -> Result<Self> {
        ensure(theta0.len() == ctx.dim(), || format!("θ₀ has length {}, expected {}", theta0.len(), ctx.dim()))?;
        let truth = ctx.density_grid(&ctx.model(theta0, sigma_l2)?)?;
        let mut steps = Vec::new();
        let mut dlog_g = Vec::new();
        let mut dlog_g_inf = Vec::new();
        for i in 0..theta0.len() {
            let plan = plan_step(ctx, theta0, i)?;
            let mut d = differentiate(theta0, i, plan, |t| log_g_with_limit(ctx, t))?;
            dlog_g_inf.push(d.pop().expect("limit entry"));
            dlog_g.push(d);
            steps.push(plan);
        }
        Ok(Self { theta0: theta0.to_vec(), sigma_l2, steps, dlog_g, dlog_g_inf, truth })
    }

    pub fn dim(&self) -> usize {
        self.dlog_g.len()
    }

    /// `φ^{(i)}` on the half grid.
    pub fn phi_i(&self, ctx: &SpectralContext, i: usize) -> Vec<f64> {
        self.dlog_g[i].iter().zip(ctx.nodes()).map(|(d, u)| d / (1.0 + u * u)).collect()
    }

    pub fn weight(&self, ctx: &SpectralContext, i: usize) -> Result<GridWeight> {
        GridWeight::new(*ctx.rule(), self.phi_i(ctx, i), self.dlog_g_inf[i])
    }

    pub fn weights(&self, ctx: &SpectralContext) -> Result<Vec<GridWeight>> {
        (0..self.dim()).map(|i| self.weight(ctx, i)).collect()
    }

    /// `∫ ∂_i log g(u)/(1+u²) du`.
    pub fn integral(&self, ctx: &SpectralContext, i: usize) -> f64 {
        ctx.integrate_weighted(&self.dlog_g[i], self.dlog_g_inf[i])
    }

    /// `K^{(i)}(θ₀) = ∫ φ^{(i)} φ_Z(·,θ₀) du`.
    pub fn gradient_k(&self, ctx: &SpectralContext, i: usize) -> f64 {
        let v: Vec<f64> = self.dlog_g[i].iter().zip(&self.truth.phi).map(|(d, p)| d * p).collect();
        ctx.integrate_weighted(&v, self.dlog_g_inf[i] * self.truth.phi_inf)
    }

    /// `w_ij = −∫ ∂_i log g ∂_j log g φ_Z(·,θ₀)/(1+u²) du`.
    pub fn matrix_w(&self, ctx: &SpectralContext) -> DMatrix<f64> {
        let d = self.dim();
        let mut w = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v: Vec<f64> = (0..self.truth.phi.len())
                    .map(|m| self.dlog_g[i][m] * self.dlog_g[j][m] * self.truth.phi[m])
                    .collect();
                let x = -ctx.integrate_weighted(&v, self.dlog_g_inf[i] * self.dlog_g_inf[j] * self.truth.phi_inf);
                w[(i, j)] = x;
                w[(j, i)] = x;
            }
        }
        w
    }
}

/// `φ^{(i)}(u,θ₀)` at one frequency (`i` is zero-based).
pub fn derivative_weight(ctx: &SpectralContext, theta0: &[f64], i: usize, u: f64) -> Result<f64> {
    let plan = plan_step(ctx, theta0, i)?;
    derivative_weight_with(ctx, theta0, i, u, plan)
}

pub fn derivative_weight_with(ctx: &SpectralContext, theta0: &[f64], i: usize, u: f64, plan: FdStep) -> Result<f64> {
    let d = differentiate(theta0, i, plan, |t| {
        let g = ctx.rescaled_density_g(&ctx.model(t, 1.0)?, u)?;
        Ok(vec![g.g.ln()])
    })?;
    Ok(d[0] / (1.0 + u * u))
}

/// `(D(δ) − D(δ/2)) / (D(δ/2) − D(δ/4))` for the central difference `D`; close
/// to 4 for a second-order scheme in its asymptotic range.
pub fn richardson_ratio(ctx: &SpectralContext, theta0: &[f64], i: usize, u: f64, step: f64) -> Result<f64> {
    let at = |d: f64| derivative_weight_with(ctx, theta0, i, u, FdStep { scheme: FdScheme::Central, step: d });
    let (d1, d2, d3) = (at(step)?, at(step / 2.0)?, at(step / 4.0)?);
    Ok((d1 - d2) / (d2 - d3))
}

/// `W` from the Gram form.
pub fn matrix_w(ctx: &SpectralContext, theta0: &[f64], sigma_l2: f64) -> Result<DMatrix<f64>> {
    Ok(DerivativeWeights::compute(ctx, theta0, sigma_l2)?.matrix_w(ctx))
}

/// Second-difference Hessian of `K` at `θ₀`, step `step·max(1,|θ_i|)`.
pub fn hessian_k(ctx: &SpectralContext, theta0: &[f64], sigma_l2: f64, step: f64) -> Result<DMatrix<f64>> {
    let truth = ctx.density_grid(&ctx.model(theta0, sigma_l2)?)?;
    let k = |t: &[f64]| objective_k_against(ctx, t, &truth);
    let d = theta0.len();
    let h: Vec<f64> = theta0.iter().map(|t| step * t.abs().max(1.0)).collect();
    let k0 = k(theta0)?;
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let kp = k(&shifted(theta0, i, h[i]))?;
        let km = k(&shifted(theta0, i, -h[i]))?;
        out[(i, i)] = (kp - 2.0 * k0 + km) / (h[i] * h[i]);
        for j in i + 1..d {
            let pp = k(&shifted(&shifted(theta0, i, h[i]), j, h[j]))?;
            let pm = k(&shifted(&shifted(theta0, i, h[i]), j, -h[j]))?;
            let mp = k(&shifted(&shifted(theta0, i, -h[i]), j, h[j]))?;
            let mm = k(&shifted(&shifted(theta0, i, -h[i]), j, -h[j]))?;
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}
