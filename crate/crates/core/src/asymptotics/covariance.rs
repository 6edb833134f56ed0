//! The sandwich `Σ₀ = W⁻¹QW⁻¹` and plug-in standard errors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::derivative::DerivativeWeights;
use super::monte_carlo::{monte_carlo_q_weights, MonteCarloSettings};
use super::series::{matrix_q_weights, SeriesSettings, Truncation};
use super::weight::{GridWeight, WeightFunction};
use crate::error::{ensure, Error, Result};
use crate::noise::NoiseSpec;
use crate::whittle::spectrum::SpectralContext;

pub const MAX_CONDITION: f64 = 1e12;
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMethod {
    Series,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCovariance {
    #[serde(rename = "W")]
    #[serde(with = "super::rows")]
    pub w: DMatrix<f64>,
    #[serde(rename = "Q")]
    #[serde(with = "super::rows")]
    pub q: DMatrix<f64>,
    #[serde(rename = "Sigma0")]
    #[serde(with = "super::rows")]
    pub sigma0: DMatrix<f64>,
    pub method: CovarianceMethod,
    pub cond_w: f64,
    pub truncation: Option<Truncation>,
    #[serde(with = "super::rows::option", default)]
    pub tail_estimates: Option<DMatrix<f64>>,
    /// Monte Carlo standard errors of `Q`.
    #[serde(with = "super::rows::option", default)]
    pub q_standard_errors: Option<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

impl AsymptoticCovariance {
    /// `sqrt(diag Σ₀ / n)`.
    pub fn standard_errors(&self, n: usize) -> Vec<f64> {
        (0..self.sigma0.nrows()).map(|i| (self.sigma0[(i, i)].max(0.0) / n as f64).sqrt()).collect()
    }

    /// `Σ₀ / n` as nested rows.
    pub fn covariance_rows(&self, n: usize) -> Vec<Vec<f64>> {
        (0..self.sigma0.nrows())
            .map(|i| (0..self.sigma0.ncols()).map(|j| self.sigma0[(i, j)] / n as f64).collect())
            .collect()
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    (m - m.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn condition_number(w: &DMatrix<f64>) -> f64 {
    let sv = w.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, v| a.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `Σ₀ = W⁻¹QW⁻¹`, symmetrized.
pub fn sandwich(w: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    ensure(w.is_square() && q.shape() == w.shape(), || "W and Q must be square of equal size".into())?;
    for m in [w, q] {
        let a = relative_asymmetry(m);
        if a > SYMMETRY_TOL {
            return Err(Error::Asymmetric { asymmetry: a });
        }
    }
    let cond = condition_number(w);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularW { cond });
    }
    let w = symmetrize(w);
    let inv = w.clone().try_inverse().ok_or(Error::SingularW { cond })?;
    let s = &inv * symmetrize(q) * &inv;
    let a = relative_asymmetry(&s);
    if a > SYMMETRY_TOL {
        return Err(Error::Asymmetric { asymmetry: a });
    }
    Ok((symmetrize(&s), cond))
}

pub fn asymptotic_covariance(
    w: &DMatrix<f64>,
    q: &DMatrix<f64>,
    method: CovarianceMethod,
) -> Result<AsymptoticCovariance> {
    let (sigma0, cond_w) = sandwich(w, q)?;
    let mut warnings = Vec::new();
    let min_eig = sigma0.clone().symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let scale = sigma0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if min_eig < -1e-8 * scale {
        warnings.push(format!("Σ₀ has a negative eigenvalue {min_eig:.3e}"));
    }
    Ok(AsymptoticCovariance {
        w: symmetrize(w),
        q: symmetrize(q),
        sigma0,
        method,
        cond_w,
        truncation: None,
        tail_estimates: None,
        q_standard_errors: None,
        warnings,
    })
}

/// `Σ₀` at `θ₀` with `Q` from the truncated series.
///
/// The model is built with `σ_L² = Var L(1)` of the given driver, so that
/// `γ_Y` and the fourth cumulant come from the same law.
pub fn series_covariance(
    ctx: &SpectralContext,
    theta0: &[f64],
    noise: &NoiseSpec,
    settings: &SeriesSettings,
) -> Result<AsymptoticCovariance> {
    let sigma_l2 = noise.variance();
    let model = ctx.model(theta0, sigma_l2)?;
    let dw = DerivativeWeights::compute(ctx, theta0, sigma_l2)?;
    let w = dw.matrix_w(ctx);
    let gw: Vec<GridWeight> = dw.weights(ctx)?;
    let refs: Vec<&dyn WeightFunction> = gw.iter().map(|g| g as &dyn WeightFunction).collect();
    let sq = matrix_q_weights(&model, &noise.moments(), ctx.sampling(), &refs, settings)?;
    let mut out = asymptotic_covariance(&w, &sq.q, CovarianceMethod::Series)?;
    out.truncation = Some(sq.truncation);
    out.tail_estimates = Some(sq.tail_estimates);
    out.warnings.extend(sq.warnings);
    Ok(out)
}

/// `Σ₀` at `θ₀` with `Q` estimated by simulation; works for any sampling law.
pub fn monte_carlo_covariance(
    ctx: &SpectralContext,
    theta0: &[f64],
    noise: &NoiseSpec,
    settings: &MonteCarloSettings,
) -> Result<AsymptoticCovariance> {
    let sigma_l2 = noise.variance();
    let model = ctx.model(theta0, sigma_l2)?;
    let dw = DerivativeWeights::compute(ctx, theta0, sigma_l2)?;
    let w = dw.matrix_w(ctx);
    let gw: Vec<GridWeight> = dw.weights(ctx)?;
    let refs: Vec<&dyn WeightFunction> = gw.iter().map(|g| g as &dyn WeightFunction).collect();
    let mc = monte_carlo_q_weights(&model, noise, ctx.sampling(), &refs, settings)?;
    let q = symmetrize(&mc.q);
    let mut out = asymptotic_covariance(&w, &q, CovarianceMethod::MonteCarlo)?;
    out.q_standard_errors = Some(mc.se);
    Ok(out)
}

/// `J(G) = ∫ G(u) φ_Z(u) du`, the limit of `J_n(G)`.
pub fn limit_j(ctx: &SpectralContext, theta: &[f64], sigma_l2: f64, weight: &dyn WeightFunction) -> Result<f64> {
    let grid = ctx.density_grid(&ctx.model(theta, sigma_l2)?)?;
    let rule = ctx.rule();
    let body: f64 =
        ctx.weights().iter().zip(ctx.nodes()).zip(&grid.phi).map(|((w, &u), p)| w * weight.value(u) * p).sum();
    Ok(body + grid.phi_inf * weight.tail_integral(rule.upper()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_sandwich() {
        let w = DMatrix::from_element(1, 1, -2.0);
        let q = DMatrix::from_element(1, 1, 3.0);
        let c = asymptotic_covariance(&w, &q, CovarianceMethod::Series).unwrap();
        assert_relative_eq!(c.sigma0[(0, 0)], 0.75, max_relative = 1e-15);
    }

    #[test]
    fn singular_w_is_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        assert!(matches!(sandwich(&w, &q), Err(Error::SingularW { .. })));
    }

    #[test]
    fn asymmetric_q_is_rejected() {
        let w = DMatrix::identity(2, 2) * -1.0;
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(sandwich(&w, &q), Err(Error::Asymmetric { .. })));
    }
}
