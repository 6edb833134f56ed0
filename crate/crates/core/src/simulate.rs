//! Euler simulation of the state process and sampling at arrival times.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::CarmaModel;
use crate::noise::{IncrementSampler, NoiseSpec};
use crate::sampling::{sample_arrivals, ArrivalTimes, SamplingMode, SamplingSpec};
use crate::series::SampledSeries;

pub const DEFAULT_STEP: f64 = 1e-3;

const OVERFLOW_LIMIT: f64 = 1e150;
const NODE_SNAP: f64 = 1e-9;

/// How `X(0)` is produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitPolicy {
    /// `X(0) ~ N(0, σ_L² Σ)`; exact in law for a Brownian driver.
    StationaryGaussian,
    /// Start at zero and discard `[0, duration]`.
    BurnIn { duration: f64 },
}

impl InitPolicy {
    /// Gaussian start for Brownian drivers, otherwise a burn-in of `20/D`.
    pub fn default_for(model: &CarmaModel, noise: &NoiseSpec) -> Self {
        if noise.is_gaussian() {
            InitPolicy::StationaryGaussian
        } else {
            InitPolicy::BurnIn { duration: 20.0 / model.spectral_abscissa() }
        }
    }
}

/// State values `X(jh)`, `j = 0..=floor(t_end/h)`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    pub h: f64,
    pub p: usize,
    pub t_end: f64,
    values: Vec<f64>,
}

impl GridPath {
    pub fn len(&self) -> usize {
        self.values.len() / self.p
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.values[j * self.p..(j + 1) * self.p]
    }

    /// `Y(jh) = bᵀX(jh)` for every node.
    pub fn observations(&self, model: &CarmaModel) -> Vec<f64> {
        (0..self.len()).map(|j| project(model, self.node(j))).collect()
    }
}

struct Euler<'a> {
    a: &'a [f64],
    h: f64,
}

impl Euler<'_> {
    /// `X ← X + hAX + e_p ΔL` for the companion matrix `A`.
    #[inline]
    fn step(&self, x: &mut [f64], dl: f64) {
        let p = x.len();
        let mut last = 0.0;
        for j in 0..p {
            last -= self.a[p - 1 - j] * x[j];
        }
        for i in 0..p - 1 {
            x[i] += self.h * x[i + 1];
        }
        x[p - 1] += self.h * last + dl;
    }
}

#[inline]
fn project(model: &CarmaModel, x: &[f64]) -> f64 {
    model.b_vector().iter().zip(x).map(|(b, x)| b * x).sum()
}

#[inline]
fn interpolate(y0: f64, y1: f64, frac: f64) -> f64 {
    y0 + frac * (y1 - y0)
}

fn check(x: &[f64], step: usize, h: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite() && v.abs() < OVERFLOW_LIMIT) {
        Ok(())
    } else {
        Err(Error::Overflow { step, t: step as f64 * h })
    }
}

fn initial_state<R: Rng + ?Sized>(
    model: &CarmaModel,
    sampler: &IncrementSampler,
    h: f64,
    init: InitPolicy,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = model.p();
    match init {
        InitPolicy::StationaryGaussian => {
            let chol = model
                .sigma_matrix()
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Lyapunov("Σ is not positive definite".into()))?;
            let l = chol.l();
            let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
            let s = model.sigma_l2().sqrt();
            Ok((0..p).map(|i| s * (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>()).collect())
        }
        InitPolicy::BurnIn { duration } => {
            ensure(duration >= 0.0 && duration.is_finite(), || {
                format!("burn-in must be non-negative, got {duration}")
            })?;
            let steps = (duration / h).ceil() as usize;
            let euler = Euler { a: model.params().a(), h };
            let mut x = vec![0.0; p];
            for j in 0..steps {
                euler.step(&mut x, sampler.sample(rng));
                if j % 1024 == 0 {
                    check(&x, j, h)?;
                }
            }
            check(&x, steps, h)?;
            Ok(x)
        }
    }
}

/// Euler path on `[0, t_end]`.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &CarmaModel,
    noise: &NoiseSpec,
    h: f64,
    t_end: f64,
    init: InitPolicy,
    rng: &mut R,
) -> Result<GridPath> {
    ensure(h.is_finite() && h > 0.0, || format!("step h must be positive, got {h}"))?;
    ensure(t_end >= h, || format!("t_end = {t_end} must be at least h = {h}"))?;
    let sampler = IncrementSampler::new(noise, h)?;
    let x0 = initial_state(model, &sampler, h, init, rng)?;
    let n_nodes = node_count(t_end, h);
    let mut incs = Vec::with_capacity(n_nodes - 1);
    for _ in 1..n_nodes {
        incs.push(sampler.sample(rng));
    }
    let mut path = integrate_with_increments(model, &x0, h, &incs)?;
    path.t_end = t_end;
    Ok(path)
}

fn node_count(t_end: f64, h: f64) -> usize {
    (t_end / h + NODE_SNAP).floor() as usize + 1
}

/// Deterministic Euler recursion from `x0` driven by the given increments.
///
/// With all increments zero this is the explicit Euler solution of `x' = Ax`.
pub fn integrate_with_increments(model: &CarmaModel, x0: &[f64], h: f64, increments: &[f64]) -> Result<GridPath> {
    let p = model.p();
    ensure(x0.len() == p, || format!("initial state has length {}, expected {p}", x0.len()))?;
    ensure(h > 0.0, || "step h must be positive".into())?;
    let euler = Euler { a: model.params().a(), h };
    let mut values = Vec::with_capacity((increments.len() + 1) * p);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    for (j, &dl) in increments.iter().enumerate() {
        euler.step(&mut x, dl);
        if j % 1024 == 0 {
            check(&x, j + 1, h)?;
        }
        values.extend_from_slice(&x);
    }
    check(&x, increments.len(), h)?;
    Ok(GridPath { h, p, t_end: increments.len() as f64 * h, values })
}

/// Position of `τ` on the grid: node index and interpolation fraction.
fn locate(tau: f64, h: f64) -> (usize, f64) {
    let x = tau / h;
    let r = x.round();
    if (x - r).abs() <= NODE_SNAP * x.max(1.0) {
        (r as usize, 0.0)
    } else {
        let j = x.floor();
        (j as usize, x - j)
    }
}

/// `Y(τ_k) = bᵀX(τ_k)` with `X` linearly interpolated between grid nodes.
pub fn sample_at_times(path: &GridPath, arrivals: &ArrivalTimes, model: &CarmaModel) -> Result<SampledSeries> {
    ensure(path.p == model.p(), || "path dimension does not match the model".into())?;
    let last = path.len() - 1;
    let mut values = Vec::with_capacity(arrivals.len());
    for (k, &tau) in arrivals.times.iter().enumerate() {
        let (j, frac) = locate(tau, path.h);
        if tau > path.t_end + NODE_SNAP * path.h || j > last || (j == last && frac > 0.0) {
            return Err(Error::ArrivalBeyondHorizon { index: k + 1, time: tau, t_end: path.t_end });
        }
        let y0 = project(model, path.node(j));
        values.push(if frac == 0.0 { y0 } else { interpolate(y0, project(model, path.node(j + 1)), frac) });
    }
    let s = SampledSeries { times: arrivals.times.clone(), values, mode: arrivals.mode, provenance: None };
    if s.times.is_empty() {
        return Err(Error::DegenerateSeries("no arrivals to sample".into()));
    }
    s.validate()?;
    Ok(s)
}

/// Simulates and samples in one pass without storing the path.
///
/// Consumes the generator exactly like [`simulate_path`] up to the last node
/// needed, so it reproduces `sample_at_times(simulate_path(..))` bit for bit.
pub fn simulate_sampled<R: Rng + ?Sized>(
    model: &CarmaModel,
    noise: &NoiseSpec,
    arrivals: &ArrivalTimes,
    h: f64,
    init: InitPolicy,
    rng: &mut R,
) -> Result<SampledSeries> {
    ensure(h.is_finite() && h > 0.0, || format!("step h must be positive, got {h}"))?;
    if arrivals.is_empty() {
        return Err(Error::DegenerateSeries("no arrivals to sample".into()));
    }
    let sampler = IncrementSampler::new(noise, h)?;
    let mut x = initial_state(model, &sampler, h, init, rng)?;
    let euler = Euler { a: model.params().a(), h };
    let mut node = 0usize;
    let mut y_cur = project(model, &x);
    // State at `node + 1`, drawn early when an arrival falls inside the cell.
    let mut ahead: Option<(Vec<f64>, f64)> = None;
    let mut values = Vec::with_capacity(arrivals.len());
    for &tau in &arrivals.times {
        let (j, frac) = locate(tau, h);
        while node < j {
            match ahead.take() {
                Some((x1, y1)) => {
                    x = x1;
                    y_cur = y1;
                }
                None => {
                    euler.step(&mut x, sampler.sample(rng));
                    y_cur = project(model, &x);
                }
            }
            node += 1;
            if node % 1024 == 0 {
                check(&x, node, h)?;
            }
        }
        if frac == 0.0 {
            values.push(y_cur);
        } else {
            if ahead.is_none() {
                let mut x1 = x.clone();
                euler.step(&mut x1, sampler.sample(rng));
                check(&x1, node + 1, h)?;
                let y1 = project(model, &x1);
                ahead = Some((x1, y1));
            }
            let y1 = ahead.as_ref().map(|a| a.1).unwrap();
            values.push(interpolate(y_cur, y1, frac));
        }
    }
    check(&x, node, h)?;
    let s = SampledSeries { times: arrivals.times.clone(), values, mode: arrivals.mode, provenance: None };
    s.validate()?;
    Ok(s)
}

/// Draws arrivals first, then simulates and samples the path over them.
pub fn simulate_series<R: Rng + ?Sized>(
    model: &CarmaModel,
    noise: &NoiseSpec,
    sampling: &SamplingSpec,
    mode: SamplingMode,
    h: f64,
    init: InitPolicy,
    rng: &mut R,
) -> Result<SampledSeries> {
    let arrivals = sample_arrivals(sampling, mode, rng)?;
    simulate_sampled(model, noise, &arrivals, h, init, rng)
}

/// Horizon that covers every arrival in count mode: `τ_n + h`.
pub fn default_t_end(arrivals: &ArrivalTimes, h: f64) -> f64 {
    arrivals.times.last().copied().unwrap_or(0.0) + h
}
