//! `Q` and `σ²_J` from truncated covariance series under exponential sampling.
//!
//! For a pair of weights,
//! `Q_{s,t} = A_{s,t} + B_{s,t} + B_{t,s}` with
//! `A_{s,t} = Σ_{k,l} c(k)c(l) Cov(U_0(l,G_s), U_0(k,G_t))`,
//! `B_{s,t} = Σ_{j≥1} Σ_{k,l} c(k)c(l) Cov(U_0(l,G_s), U_j(k,G_t))`,
//! `c(0) = 1`, `c(m) = 2` otherwise. Within each of the sixteen index cases the
//! Erlang kernels are summed over the indices before integrating, so each
//! case costs a single 1-, 2- or 3-fold integral.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::moments::{
    case_layout, classify, erlang, exponential_rate, CaseIntegrand, CaseLayout, MomentKernel, NodeSettings,
};
use super::weight::WeightFunction;
use crate::error::{ensure, Result};
use crate::model::CarmaModel;
use crate::noise::NoiseMoments;
use crate::sampling::SamplingSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub j_max: usize,
    pub k_max: usize,
    pub l_max: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { j_max: 30, k_max: 30, l_max: 30 }
    }
}

impl Truncation {
    pub fn uniform(n: usize) -> Self {
        Self { j_max: n, k_max: n, l_max: n }
    }

    fn reduced(self, by: usize) -> Self {
        Self { j_max: self.j_max - by, k_max: self.k_max - by, l_max: self.l_max - by }
    }

    fn max(self) -> usize {
        self.j_max.max(self.k_max).max(self.l_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSettings {
    pub truncation: Truncation,
    pub nodes: NodeSettings,
    /// Warn when a tail estimate exceeds this fraction of `max|Q|`.
    pub tail_tol: f64,
}

impl Default for SeriesSettings {
    fn default() -> Self {
        Self { truncation: Truncation::default(), nodes: NodeSettings::default(), tail_tol: 1e-3 }
    }
}

/// Truncated-series `Q` with extrapolated tail sizes (reported, not added).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesQ {
    #[serde(with = "super::rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "super::rows")]
    pub tail_estimates: DMatrix<f64>,
    pub truncation: Truncation,
    pub warnings: Vec<String>,
}

/// Neumaier compensated sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Nodes, weights and Erlang tables `e_n`, `R_n = Σ_{m≤n} e_m` at the nodes.
struct ErlangGrid {
    x: Vec<f64>,
    w: Vec<f64>,
    e: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

impl ErlangGrid {
    fn new(model: &CarmaModel, beta: f64, nodes: &NodeSettings, n_max: usize) -> Self {
        let (x, w) = nodes.nodes(model, beta);
        let len = x.len();
        let mut e = vec![vec![0.0; len]];
        let mut r = vec![vec![0.0; len]];
        for n in 1..=n_max {
            let en: Vec<f64> = x.iter().map(|&xi| erlang(n, beta, xi)).collect();
            let rn: Vec<f64> = r[n - 1].iter().zip(&en).map(|(a, b)| a + b).collect();
            e.push(en);
            r.push(rn);
        }
        Self { x, w, e, r }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    /// `R_n`, zero for `n ≤ 0`.
    fn r(&self, n: isize) -> &[f64] {
        &self.r[n.max(0) as usize]
    }
}

const A_CASES: [u8; 6] = [1, 2, 3, 5, 6, 7];
const B_CASES: [u8; 10] = [4, 8, 9, 10, 11, 12, 13, 14, 15, 16];

fn case_coefficient(case: u8) -> f64 {
    match case {
        1 | 4 => 1.0,
        2 | 3 | 8 | 9 | 10 | 11 => 2.0,
        _ => 4.0,
    }
}

/// Weighted integrand values of one case on the tensor grid.
fn case_array(integrand: &CaseIntegrand, grid: &ErlangGrid, layout: CaseLayout) -> Vec<f64> {
    let n = grid.len();
    let mut x = [0.0; 3];
    match layout.dims {
        0 => vec![integrand.eval(layout, true, &x)],
        1 => (0..n)
            .map(|a| {
                x[0] = grid.x[a];
                grid.w[a] * integrand.eval(layout, true, &x)
            })
            .collect(),
        2 => {
            let mut out = Vec::with_capacity(n * n);
            for a in 0..n {
                x[0] = grid.x[a];
                for b in 0..n {
                    x[1] = grid.x[b];
                    out.push(grid.w[a] * grid.w[b] * integrand.eval(layout, true, &x));
                }
            }
            out
        }
        _ => {
            let mut out = Vec::with_capacity(n * n * n);
            for a in 0..n {
                x[0] = grid.x[a];
                for b in 0..n {
                    x[1] = grid.x[b];
                    let wab = grid.w[a] * grid.w[b];
                    for c in 0..n {
                        x[2] = grid.x[c];
                        out.push(wab * grid.w[c] * integrand.eval(layout, true, &x));
                    }
                }
            }
            out
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_{ab} I[a,b] u[a] v[b]`.
fn contract2(arr: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    (0..n).map(|a| u[a] * dot(&arr[a * n..(a + 1) * n], v)).sum()
}

/// `Σ_{abc} I[a,b,c] u[a] v[b] w[c]`.
fn contract3(arr: &[f64], u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    for a in 0..n {
        if u[a] == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for b in 0..n {
            let off = (a * n + b) * n;
            inner += v[b] * dot(&arr[off..off + n], w);
        }
        acc += u[a] * inner;
    }
    acc
}

/// Index-summed kernel integral of one case for the given caps.
fn assemble(case: u8, arr: &[f64], g: &ErlangGrid, caps: Truncation) -> f64 {
    let (jm, km, lm) = (caps.j_max as isize, caps.k_max as isize, caps.l_max as isize);
    let n = g.len();
    match case {
        1 => arr[0],
        2 => dot(arr, g.r(lm)),
        3 => dot(arr, g.r(km)),
        4 => dot(arr, g.r(jm)),
        5 => dot(arr, g.r(km.min(lm))),
        8 => dot(arr, g.r(jm.min(lm))),
        // Σ_{m=1}^{first} e_m(x₁) R_{second−m}(x₂)
        6 => (1..=km.min(lm - 1)).map(|k| contract2(arr, &g.e[k as usize], g.r(lm - k))).sum(),
        7 => (1..=lm.min(km - 1)).map(|l| contract2(arr, &g.e[l as usize], g.r(km - l))).sum(),
        9 => (1..=jm.min(lm - 1)).map(|j| contract2(arr, &g.e[j as usize], g.r(lm - j))).sum(),
        10 => (1..=lm.min(jm - 1)).map(|l| contract2(arr, &g.e[l as usize], g.r(jm - l))).sum(),
        11 => contract2(arr, g.r(jm), g.r(km)),
        13 => contract2(arr, g.r(jm.min(lm)), g.r(km)),
        15 => (1..=km.min(lm - 1)).map(|k| contract2(arr, g.r(jm.min(lm - k)), &g.e[k as usize])).sum(),
        12 => {
            let rk = g.r(km);
            (1..=lm.min(jm - 1)).map(|l| contract3(arr, &g.e[l as usize], g.r(jm - l), rk)).sum()
        }
        14 => {
            (1..=(lm - 1).min(km - 1)).map(|m| contract3(arr, g.r(jm.min(lm - m)), &g.e[m as usize], g.r(km - m))).sum()
        }
        16 => {
            // Group j + k = m; S_m[a,b] = Σ_{j+k=m} e_j(x_a) e_k(x_b).
            let mut acc = 0.0;
            for m in 2..=(jm + km).min(lm - 1) {
                let rc = g.r(lm - m);
                let mut s = vec![0.0; n * n];
                for j in 1.max(m - km)..=jm.min(m - 1) {
                    let (ej, ek) = (&g.e[j as usize], &g.e[(m - j) as usize]);
                    for a in 0..n {
                        for b in 0..n {
                            s[a * n + b] += ej[a] * ek[b];
                        }
                    }
                }
                for (ab, sv) in s.iter().enumerate() {
                    if *sv != 0.0 {
                        acc += sv * dot(&arr[ab * n..(ab + 1) * n], rc);
                    }
                }
            }
            acc
        }
        _ => unreachable!("case {case}"),
    }
}

/// `Σ c(k)c(l) E_s(l) E_t(k)` over the overlapping triples, split into the
/// `j = 0` and `j ≥ 1` blocks.
fn overlap_means(caps: Truncation, es: &[f64], et: &[f64]) -> (f64, f64) {
    let c = |m: usize| if m == 0 { 1.0 } else { 2.0 };
    let (mut a, mut b) = (Compensated::default(), Compensated::default());
    for j in 0..=caps.j_max {
        for k in 0..=caps.k_max {
            for l in 0..=caps.l_max {
                if case_layout(classify(j, k, l)).disjoint {
                    continue;
                }
                let v = c(k) * c(l) * es[l] * et[k];
                if j == 0 {
                    a.add(v);
                } else {
                    b.add(v);
                }
            }
        }
    }
    (a.value(), b.value())
}

/// Case arrays and mean tables for one ordered pair of weights.
struct PairData {
    arrays: Vec<(u8, Vec<f64>)>,
    es: Vec<f64>,
    et: Vec<f64>,
}

impl PairData {
    fn new(
        kernel: &MomentKernel,
        grid: &ErlangGrid,
        gs: &dyn WeightFunction,
        gt: &dyn WeightFunction,
        with_a: bool,
    ) -> Self {
        let integrand = CaseIntegrand { kernel, gs, gt };
        let cases: Vec<u8> = if with_a { A_CASES.iter().chain(&B_CASES).copied().collect() } else { B_CASES.to_vec() };
        let arrays = cases.iter().map(|&c| (c, case_array(&integrand, grid, case_layout(c)))).collect();
        let gamma: Vec<f64> = grid.x.iter().map(|&x| kernel.gamma(x)).collect();
        let means = |g: &dyn WeightFunction| -> Vec<f64> {
            let gw: Vec<f64> = (0..grid.len()).map(|a| grid.w[a] * g.cos_transform(grid.x[a]) * gamma[a]).collect();
            let mut v = vec![g.cos_transform(0.0) * kernel.gamma(0.0)];
            v.extend(grid.e.iter().skip(1).map(|e| dot(&gw, e)));
            v
        };
        Self { arrays, es: means(gs), et: means(gt) }
    }

    /// `(A, B)` block sums at the given caps.
    fn blocks(&self, grid: &ErlangGrid, caps: Truncation) -> (f64, f64) {
        let (mut a, mut b) = (Compensated::default(), Compensated::default());
        for (case, arr) in &self.arrays {
            let v = case_coefficient(*case) * assemble(*case, arr, grid, caps);
            if A_CASES.contains(case) {
                a.add(v);
            } else {
                b.add(v);
            }
        }
        let (ma, mb) = overlap_means(caps, &self.es, &self.et);
        a.add(-ma);
        b.add(-mb);
        (a.value(), b.value())
    }
}

/// Geometric extrapolation of the remainder from three successive partial sums.
fn tail_estimate(q2: f64, q1: f64, q0: f64) -> f64 {
    let d1 = q0 - q1;
    let d2 = q1 - q2;
    if d2 != 0.0 {
        let r = d1 / d2;
        if r > 0.0 && r < 1.0 {
            return (d1 * r / (1.0 - r)).abs();
        }
    }
    d1.abs()
}

/// `Q_{s,t}(G_s, G_t)` for every pair of the given weights.
pub fn matrix_q_weights(
    model: &CarmaModel,
    noise: &NoiseMoments,
    sampling: &SamplingSpec,
    weights: &[&dyn WeightFunction],
    settings: &SeriesSettings,
) -> Result<SeriesQ> {
    let beta = exponential_rate(sampling)?;
    let caps = settings.truncation;
    ensure(caps.j_max.min(caps.k_max).min(caps.l_max) >= 3, || "truncation caps must be at least 3".into())?;
    let d = weights.len();
    ensure(d > 0, || "no weights given".into())?;
    let kernel = MomentKernel::new(model, noise);
    let grid = ErlangGrid::new(model, beta, &settings.nodes, caps.max());
    // blocks[s][t] at caps N, N-1, N-2.
    let mut a_blocks = vec![vec![[0.0; 3]; d]; d];
    let mut b_blocks = vec![vec![[0.0; 3]; d]; d];
    for s in 0..d {
        for t in 0..d {
            let with_a = s <= t;
            let data = PairData::new(&kernel, &grid, weights[s], weights[t], with_a);
            for r in 0..3 {
                let (a, b) = data.blocks(&grid, caps.reduced(r));
                if with_a {
                    a_blocks[s][t][r] = a;
                    a_blocks[t][s][r] = a;
                }
                b_blocks[s][t][r] = b;
            }
        }
    }
    let mut q = DMatrix::zeros(d, d);
    let mut tails = DMatrix::zeros(d, d);
    for s in 0..d {
        for t in s..d {
            let v: Vec<f64> = (0..3).map(|r| a_blocks[s][t][r] + b_blocks[s][t][r] + b_blocks[t][s][r]).collect();
            q[(s, t)] = v[0];
            q[(t, s)] = v[0];
            tails[(s, t)] = tail_estimate(v[2], v[1], v[0]);
            tails[(t, s)] = tails[(s, t)];
        }
    }
    ensure(q.iter().all(|v| v.is_finite()), || "non-finite entry in Q".into())?;
    let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = tails.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut warnings = Vec::new();
    if worst > settings.tail_tol * scale {
        warnings.push(format!(
            "truncated tail estimate {worst:.3e} exceeds {:.0e}·max|Q|; try caps of {}",
            settings.tail_tol,
            2 * caps.max()
        ));
    }
    Ok(SeriesQ { q, tail_estimates: tails, truncation: caps, warnings })
}

/// `σ²_J(G) = Q_{s,s}(G, G)`.
pub fn variance_sigma_j(
    model: &CarmaModel,
    noise: &NoiseMoments,
    sampling: &SamplingSpec,
    weight: &dyn WeightFunction,
    settings: &SeriesSettings,
) -> Result<SeriesQ> {
    matrix_q_weights(model, noise, sampling, &[weight], settings)
}

/// The same `Q_{s,t}` entry summed term by term from [`super::moments::covariance_u`];
/// quadratic in the caps per index, intended for checking the aggregated sums.
pub fn q_entry_by_terms(
    model: &CarmaModel,
    noise: &NoiseMoments,
    sampling: &SamplingSpec,
    gs: &dyn WeightFunction,
    gt: &dyn WeightFunction,
    caps: Truncation,
    nodes: &NodeSettings,
) -> Result<f64> {
    let c = |m: usize| if m == 0 { 1.0 } else { 2.0 };
    let mut acc = Compensated::default();
    for j in 0..=caps.j_max {
        for k in 0..=caps.k_max {
            for l in 0..=caps.l_max {
                let st = super::moments::covariance_u(model, noise, sampling, (j, k, l), gs, gt, nodes)?;
                acc.add(c(k) * c(l) * st.centered);
                if j >= 1 {
                    let ts = super::moments::covariance_u(model, noise, sampling, (j, k, l), gt, gs, nodes)?;
                    acc.add(c(k) * c(l) * ts.centered);
                }
            }
        }
    }
    Ok(acc.value())
}
