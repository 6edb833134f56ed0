//! Fourth moments of `Y`, expectations of `U_j(k) = Ĝ_R(τ_{j+k}−τ_j) Y(τ_j) Y(τ_{j+k})`
//! and their covariances under exponential sampling.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::weight::WeightFunction;
use crate::error::{ensure, Error, Result};
use crate::model::CarmaModel;
use crate::noise::NoiseMoments;
use crate::quadrature::{gauss_legendre, CubicSpline};
use crate::sampling::{gamma_pdf, SamplingSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourthMoment {
    pub m: f64,
    pub n: f64,
}

#[derive(Clone, Debug)]
enum CumulantForm {
    /// `λ_i`, `c_i` and `−1/(λ_i+λ_j+λ_k+λ_l)` flattened in `p⁴` order.
    Modal { lambda: Vec<Complex64>, c: Vec<Complex64>, inv: Vec<Complex64> },
    /// Kernel splined on `[0, x_max]`; repeated roots.
    Splined { kernel: CubicSpline, decay: f64 },
}

/// `γ_Y`, `N` and `M` for one model and driver.
#[derive(Clone, Debug)]
pub struct MomentKernel<'a> {
    model: &'a CarmaModel,
    kappa4: f64,
    form: CumulantForm,
}

impl<'a> MomentKernel<'a> {
    /// `γ_Y` uses the model's `σ_L²`; `N` uses the driver's fourth cumulant.
    pub fn new(model: &'a CarmaModel, noise: &NoiseMoments) -> Self {
        let form = match model.kernel_modes() {
            Some((lambda, c)) => {
                let p = lambda.len();
                let mut inv = Vec::with_capacity(p.pow(4));
                for i in 0..p {
                    for j in 0..p {
                        for k in 0..p {
                            for l in 0..p {
                                inv.push(-1.0 / (lambda[i] + lambda[j] + lambda[k] + lambda[l]));
                            }
                        }
                    }
                }
                CumulantForm::Modal { lambda: lambda.to_vec(), c: c.to_vec(), inv }
            }
            None => {
                let d = model.spectral_abscissa();
                let x_max = 40.0 / d;
                let step = 0.01f64.min(0.05 / model.spectral_radius()).min(x_max / 400.0);
                let n = (x_max / step).ceil() as usize;
                let values = (0..=n).map(|i| model.kernel_dense(i as f64 * step)).collect();
                CumulantForm::Splined { kernel: CubicSpline::new(0.0, step, values), decay: d }
            }
        };
        Self { model, kappa4: noise.fourth_cumulant, form }
    }

    pub fn model(&self) -> &CarmaModel {
        self.model
    }

    pub fn gamma(&self, h: f64) -> f64 {
        self.model.autocovariance(h)
    }

    /// `N(s,t,u) = κ₄ ∫₀^∞ k(v) k(v+s) k(v+s+t) k(v+s+t+u) dv`.
    pub fn n(&self, s: f64, t: f64, u: f64) -> f64 {
        if self.kappa4 == 0.0 {
            return 0.0;
        }
        match &self.form {
            CumulantForm::Modal { lambda, c, inv } => {
                let p = lambda.len();
                let (a1, a2, a3) = (s, s + t, s + t + u);
                let e1: Vec<Complex64> = (0..p).map(|i| c[i] * (lambda[i] * a1).exp()).collect();
                let e2: Vec<Complex64> = (0..p).map(|i| c[i] * (lambda[i] * a2).exp()).collect();
                let e3: Vec<Complex64> = (0..p).map(|i| c[i] * (lambda[i] * a3).exp()).collect();
                let mut acc = Complex64::new(0.0, 0.0);
                let mut idx = 0;
                for ci in c.iter().take(p) {
                    let mut s1 = Complex64::new(0.0, 0.0);
                    for x1 in &e1 {
                        let mut s2 = Complex64::new(0.0, 0.0);
                        for x2 in &e2 {
                            let mut s3 = Complex64::new(0.0, 0.0);
                            for x3 in &e3 {
                                s3 += x3 * inv[idx];
                                idx += 1;
                            }
                            s2 += x2 * s3;
                        }
                        s1 += x1 * s2;
                    }
                    acc += ci * s1;
                }
                self.kappa4 * acc.re
            }
            CumulantForm::Splined { .. } => self.n_quadrature(s, t, u),
        }
    }

    /// `N` by composite Gauss–Legendre on `[0, 12/D]`, independent of the modal form.
    pub fn n_quadrature(&self, s: f64, t: f64, u: f64) -> f64 {
        if self.kappa4 == 0.0 {
            return 0.0;
        }
        let k = |x: f64| match &self.form {
            CumulantForm::Splined { kernel, .. } => kernel.eval(x),
            CumulantForm::Modal { .. } => self.model.kernel(x),
        };
        let d = match &self.form {
            CumulantForm::Splined { decay, .. } => *decay,
            CumulantForm::Modal { .. } => self.model.spectral_abscissa(),
        };
        let v_max = 12.0 / d;
        let (x, w) = gauss_legendre(8);
        let panels = 48;
        let h = v_max / panels as f64;
        let mut acc = 0.0;
        for pnl in 0..panels {
            let lo = pnl as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                let v = lo + 0.5 * h * (xi + 1.0);
                acc += 0.5 * h * wi * k(v) * k(v + s) * k(v + s + t) * k(v + s + t + u);
            }
        }
        self.kappa4 * acc
    }

    /// `M(s,t,u) = E[Y(0)Y(s)Y(s+t)Y(s+t+u)]`.
    pub fn m(&self, s: f64, t: f64, u: f64) -> f64 {
        let g = |h: f64| self.gamma(h);
        self.n(s, t, u) + g(s) * g(u) + g(s + t) * g(t + u) + g(s + t + u) * g(t)
    }

    /// `E[Y(p₀)Y(p₁)Y(p₂)Y(p₃)]` for arbitrary time points.
    pub fn m_points(&self, mut pts: [f64; 4]) -> f64 {
        pts.sort_by(f64::total_cmp);
        self.m(pts[1] - pts[0], pts[2] - pts[1], pts[3] - pts[2])
    }
}

/// `M(s,t,u)` and `N(s,t,u)`.
pub fn fourth_moment_m(model: &CarmaModel, noise: &NoiseMoments, s: f64, t: f64, u: f64) -> Result<FourthMoment> {
    ensure(s >= 0.0 && t >= 0.0 && u >= 0.0, || format!("lags must be non-negative, got ({s}, {t}, {u})"))?;
    let k = MomentKernel::new(model, noise);
    let n = k.n(s, t, u);
    let m = k.m(s, t, u);
    if !(n.is_finite() && m.is_finite()) {
        return Err(Error::Quadrature(format!("M({s},{t},{u}) is not finite")));
    }
    Ok(FourthMoment { m, n })
}

/// Which of the sixteen index conditions `(j, k, l)` satisfies.
pub fn matching_cases(j: usize, k: usize, l: usize) -> Vec<u8> {
    let conds = [
        j == 0 && k == 0 && l == 0,
        j == 0 && k == 0 && l > 0,
        j == 0 && l == 0 && k > 0,
        k == 0 && l == 0 && j > 0,
        j == 0 && k > 0 && k == l,
        j == 0 && 0 < k && k < l,
        j == 0 && 0 < l && l < k,
        k == 0 && j > 0 && j == l,
        k == 0 && 0 < j && j < l,
        k == 0 && 0 < l && l < j,
        l == 0 && j > 0 && k > 0,
        0 < l && l < j && k > 0,
        l == j && j > 0 && k > 0,
        j > 0 && k > 0 && j < l && l < j + k,
        j > 0 && k > 0 && l == j + k,
        j > 0 && k > 0 && l > j + k,
    ];
    conds.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i as u8 + 1).collect()
}

pub fn classify(j: usize, k: usize, l: usize) -> u8 {
    let m = matching_cases(j, k, l);
    debug_assert_eq!(m.len(), 1, "({j},{k},{l}) matches {m:?}");
    m[0]
}

/// Integration layout of one case: the number of free gaps and which prefix
/// sum of the gaps gives `τ_l`, `τ_j` and `τ_{j+k}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CaseLayout {
    pub dims: usize,
    pub l_len: usize,
    pub j_len: usize,
    pub jk_len: usize,
    /// Index blocks `(0,l]` and `(j,j+k]` are disjoint.
    pub disjoint: bool,
}

pub fn case_layout(case: u8) -> CaseLayout {
    let (dims, l_len, j_len, jk_len) = match case {
        1 => (0, 0, 0, 0),
        2 => (1, 1, 0, 0),
        3 => (1, 0, 0, 1),
        4 => (1, 0, 1, 1),
        5 => (1, 1, 0, 1),
        6 => (2, 2, 0, 1),
        7 => (2, 1, 0, 2),
        8 => (1, 1, 1, 1),
        9 => (2, 2, 1, 1),
        10 => (2, 1, 2, 2),
        11 => (2, 0, 1, 2),
        12 => (3, 1, 2, 3),
        13 => (2, 1, 1, 2),
        14 => (3, 2, 1, 3),
        15 => (2, 2, 1, 2),
        16 => (3, 3, 1, 2),
        _ => panic!("case {case} out of range"),
    };
    CaseLayout { dims, l_len, j_len, jk_len, disjoint: !matches!(case, 5..=7 | 14..=16) }
}

/// Number of inter-arrival times in each gap of the layout.
pub fn case_folds(case: u8, j: usize, k: usize, l: usize) -> Vec<usize> {
    match case {
        1 => vec![],
        2 => vec![l],
        3 | 5 => vec![k],
        4 | 8 => vec![j],
        6 => vec![k, l - k],
        7 => vec![l, k - l],
        9 => vec![j, l - j],
        10 => vec![l, j - l],
        11 | 13 | 15 => vec![j, k],
        12 => vec![l, j - l, k],
        14 => vec![j, l - j, j + k - l],
        16 => vec![j, k, l - j - k],
        _ => panic!("case {case} out of range"),
    }
}

/// `a·b·(M − γγ)` (disjoint blocks) or `a·b·M` at one point of a case.
pub(crate) struct CaseIntegrand<'k, 'w> {
    pub kernel: &'k MomentKernel<'k>,
    pub gs: &'w dyn WeightFunction,
    pub gt: &'w dyn WeightFunction,
}

impl CaseIntegrand<'_, '_> {
    pub fn eval(&self, layout: CaseLayout, centered: bool, x: &[f64]) -> f64 {
        let mut prefix = [0.0; 4];
        for d in 0..layout.dims {
            prefix[d + 1] = prefix[d] + x[d];
        }
        let tl = prefix[layout.l_len];
        let tj = prefix[layout.j_len];
        let tjk = prefix[layout.jk_len];
        let a = self.gs.cos_transform(tl);
        let b = self.gt.cos_transform(tjk - tj);
        if a == 0.0 || b == 0.0 {
            return 0.0;
        }
        let mut m = self.kernel.m_points([0.0, tl, tj, tjk]);
        if centered && layout.disjoint {
            m -= self.kernel.gamma(tl) * self.kernel.gamma(tjk - tj);
        }
        a * b * m
    }
}

/// Quadrature nodes on `[0, x_max]`: panels doubling from `first` up to width
/// `max_width`, then uniform, each with a Gauss–Legendre rule of `order` points.
pub fn graded_nodes(x_max: f64, first: f64, order: usize, max_width: f64) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let mut edges = vec![0.0];
    let mut width = first.min(x_max);
    while *edges.last().unwrap() < x_max {
        let lo = *edges.last().unwrap();
        edges.push((lo + width).min(x_max));
        width = (2.0 * width).min(max_width);
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for e in edges.windows(2) {
        let h = e[1] - e[0];
        for (xi, wi) in gx.iter().zip(&gw) {
            nodes.push(e[0] + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// Node layout for the Erlang-weighted integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSettings {
    pub order: usize,
    pub max_width: f64,
    /// Upper limit of each gap; default `38/min(D, 1)`.
    pub extent: Option<f64>,
}

impl Default for NodeSettings {
    fn default() -> Self {
        Self { order: 8, max_width: 8.0, extent: None }
    }
}

impl NodeSettings {
    pub fn extent_for(&self, model: &CarmaModel) -> f64 {
        self.extent.unwrap_or(38.0 / model.spectral_abscissa().min(1.0))
    }

    pub fn first_width(model: &CarmaModel, beta: f64) -> f64 {
        0.25 * (1.0 / beta).min(1.0 / model.spectral_radius()).min(1.0)
    }

    pub fn nodes(&self, model: &CarmaModel, beta: f64) -> (Vec<f64>, Vec<f64>) {
        graded_nodes(self.extent_for(model), Self::first_width(model, beta), self.order, self.max_width)
    }
}

pub(crate) fn exponential_rate(sampling: &SamplingSpec) -> Result<f64> {
    match sampling {
        SamplingSpec::Exponential { rate } => Ok(*rate),
        _ => Err(Error::Unsupported(
            "series moments need exponential inter-arrival times; use the Monte Carlo estimate of Q".into(),
        )),
    }
}

/// Erlang density `f^{*n}(x)` for rate `β`.
pub fn erlang(n: usize, beta: f64, x: f64) -> f64 {
    gamma_pdf(n as f64, beta, x)
}

/// `E[U_0(k)]`: `Ĝ_R(0)γ_Y(0)` for `k = 0`, else `∫ Ĝ_R(s)γ_Y(s) f^{*k}(s) ds`.
pub fn expected_u(model: &CarmaModel, sampling: &SamplingSpec, k: usize, weight: &dyn WeightFunction) -> Result<f64> {
    expected_u_with(model, sampling, k, weight, &NodeSettings::default())
}

pub fn expected_u_with(
    model: &CarmaModel,
    sampling: &SamplingSpec,
    k: usize,
    weight: &dyn WeightFunction,
    nodes: &NodeSettings,
) -> Result<f64> {
    if k == 0 {
        return Ok(weight.cos_transform(0.0) * model.autocovariance(0.0));
    }
    let beta = exponential_rate(sampling)?;
    let extent = fold_extent(nodes.extent_for(model), k, beta);
    let (x, w) = graded_nodes(extent, NodeSettings::first_width(model, beta), nodes.order, nodes.max_width);
    Ok(x.iter()
        .zip(&w)
        .map(|(&s, &wi)| wi * weight.cos_transform(s) * model.autocovariance(s) * erlang(k, beta, s))
        .sum())
}

/// Extent covering the bulk of `f^{*n}` as well as the decay of the integrand.
fn fold_extent(base: f64, n: usize, beta: f64) -> f64 {
    let n = n as f64;
    base.max((n + 10.0 * n.sqrt() + 10.0) / beta)
}

/// One covariance term between `U_0(l, G_s)` and `U_j(k, G_t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTerm {
    pub case: u8,
    /// `E[U_0(l,G_s) U_j(k,G_t)]`.
    pub raw: f64,
    /// `Cov(U_0(l,G_s), U_j(k,G_t))`.
    pub centered: f64,
}

/// `E[U_0(l,G_s)·U_j(k,G_t)]` for one index triple.
pub fn covariance_u(
    model: &CarmaModel,
    noise: &NoiseMoments,
    sampling: &SamplingSpec,
    (j, k, l): (usize, usize, usize),
    gs: &dyn WeightFunction,
    gt: &dyn WeightFunction,
    nodes: &NodeSettings,
) -> Result<CovarianceTerm> {
    let beta = exponential_rate(sampling)?;
    let kernel = MomentKernel::new(model, noise);
    let integrand = CaseIntegrand { kernel: &kernel, gs, gt };
    let case = classify(j, k, l);
    let layout = case_layout(case);
    let folds = case_folds(case, j, k, l);
    let base = nodes.extent_for(model);
    let first = NodeSettings::first_width(model, beta);
    let rules: Vec<(Vec<f64>, Vec<f64>)> =
        folds.iter().map(|&n| graded_nodes(fold_extent(base, n, beta), first, nodes.order, nodes.max_width)).collect();
    let dens: Vec<Vec<f64>> = folds
        .iter()
        .zip(&rules)
        .map(|(&n, (x, w))| x.iter().zip(w).map(|(&xi, wi)| wi * erlang(n, beta, xi)).collect())
        .collect();
    let integrate = |centered: bool| -> f64 {
        let mut x = [0.0; 3];
        match layout.dims {
            0 => integrand.eval(layout, centered, &x),
            1 => (0..rules[0].0.len())
                .map(|a| {
                    x[0] = rules[0].0[a];
                    dens[0][a] * integrand.eval(layout, centered, &x)
                })
                .sum(),
            2 => {
                let mut acc = 0.0;
                for a in 0..rules[0].0.len() {
                    x[0] = rules[0].0[a];
                    for b in 0..rules[1].0.len() {
                        x[1] = rules[1].0[b];
                        acc += dens[0][a] * dens[1][b] * integrand.eval(layout, centered, &x);
                    }
                }
                acc
            }
            _ => {
                let mut acc = 0.0;
                for a in 0..rules[0].0.len() {
                    x[0] = rules[0].0[a];
                    for b in 0..rules[1].0.len() {
                        x[1] = rules[1].0[b];
                        let wab = dens[0][a] * dens[1][b];
                        for c in 0..rules[2].0.len() {
                            x[2] = rules[2].0[c];
                            acc += wab * dens[2][c] * integrand.eval(layout, centered, &x);
                        }
                    }
                }
                acc
            }
        }
    };
    let raw = integrate(false);
    let centered = if layout.disjoint {
        integrate(true)
    } else {
        let es = expected_u_with(model, sampling, l, gs, nodes)?;
        let et = expected_u_with(model, sampling, k, gt, nodes)?;
        raw - es * et
    };
    ensure(raw.is_finite() && centered.is_finite(), || format!("non-finite covariance term at ({j},{k},{l})"))?;
    Ok(CovarianceTerm { case, raw, centered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::weight::CauchyWeight;
    use crate::model::CarmaParams;
    use crate::noise::NoiseSpec;
    use approx::assert_abs_diff_eq;

    fn ou() -> CarmaModel {
        CarmaModel::new(CarmaParams::ou(1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn partition_small_cube() {
        for j in 0..6 {
            for k in 0..6 {
                for l in 0..6 {
                    assert_eq!(matching_cases(j, k, l).len(), 1, "({j},{k},{l})");
                }
            }
        }
    }

    #[test]
    fn folds_are_positive() {
        for j in 0..7 {
            for k in 0..7 {
                for l in 0..7 {
                    let c = classify(j, k, l);
                    let f = case_folds(c, j, k, l);
                    assert_eq!(f.len(), case_layout(c).dims);
                    assert!(f.iter().all(|&n| n >= 1));
                }
            }
        }
    }

    #[test]
    fn gamma_driver_cumulant_at_zero() {
        let noise = NoiseSpec::gamma(2.0, 1.0).unwrap().moments();
        let m = ou();
        let k = MomentKernel::new(&m, &noise);
        assert_abs_diff_eq!(k.n(0.0, 0.0, 0.0), noise.fourth_cumulant / 4.0, epsilon = 1e-14);
        for (s, t, u) in [(0.0, 0.0, 0.0), (0.3, 1.0, 0.2), (2.0, 0.0, 1.5)] {
            assert_abs_diff_eq!(k.n(s, t, u), k.n_quadrature(s, t, u), epsilon = 1e-10);
        }
    }

    #[test]
    fn expected_u_first_fold() {
        let s = SamplingSpec::Exponential { rate: 1.0 };
        let w = CauchyWeight::new(1.0);
        assert_abs_diff_eq!(expected_u(&ou(), &s, 0, &w).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_u(&ou(), &s, 1, &w).unwrap(), 1.0 / 12.0, epsilon = 1e-10);
    }

    #[test]
    fn graded_nodes_integrate_exponentials() {
        let (x, w) = graded_nodes(40.0, 0.05, 8, 8.0);
        for r in [0.5, 1.0, 5.0, 20.0] {
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * (-r * x).exp()).sum();
            assert_abs_diff_eq!(v * r, 1.0, epsilon = 1e-8);
        }
    }
}
