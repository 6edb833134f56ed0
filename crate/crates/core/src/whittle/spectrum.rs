//! Spectral density `φ_Z` of the sampled process and its rescaled form `g`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::model::{CarmaModel, CarmaParams};
use crate::quadrature::{filon_cos, QuadratureRule};
use crate::sampling::{RenewalTruncation, SamplingSpec};

/// Step and length of the lag grid used for cosine transforms of `γ_Y·r`.
pub fn lag_grid(model: &CarmaModel) -> (f64, usize) {
    let d = model.spectral_abscissa();
    let rho = model.spectral_radius().max(d);
    let h_max = 40.0 / d;
    let dh = 0.01f64.min(0.05 / rho).min(h_max / 200.0);
    let mut n = (h_max / dh).ceil() as usize;
    n += n % 2;
    (dh, n)
}

/// `φ_Z(u)` for exponential sampling in closed form:
/// `(βσ_L²/2π)(bᵀΣb/β + |b(iu)/a(iu)|²)`.
fn phi_z_exponential(model: &CarmaModel, beta: f64, u: f64) -> f64 {
    beta * model.sigma_l2() / (2.0 * PI) * (model.bsb() / beta + model.transfer_sqr(u))
}

/// `φ_Z(∞) = σ_L² bᵀΣb / 2π`.
pub fn phi_z_limit(model: &CarmaModel) -> f64 {
    model.sigma_l2() * model.bsb() / (2.0 * PI)
}

fn phi_z_from_lag_values(model: &CarmaModel, f: &[f64], dh: f64, u: f64) -> f64 {
    (model.autocovariance(0.0) + 2.0 * filon_cos(f, dh, u)) / (2.0 * PI)
}

/// `φ_Z(u)`: closed form for exponential sampling, otherwise the cosine
/// transform of `γ_Y·r` (see [`spectral_density_z_general`]).
pub fn spectral_density_z(model: &CarmaModel, sampling: &SamplingSpec, u: f64) -> Result<f64> {
    match sampling {
        SamplingSpec::Exponential { rate } => Ok(phi_z_exponential(model, *rate, u)),
        _ => spectral_density_z_general(model, sampling, u),
    }
}

/// `(1/2π)(σ_L² bᵀΣb + ∫ e^{−ihu} γ_Y(h) r(|h|) dh)` by Filon quadrature,
/// for any sampling law (including exponential, as a consistency path).
pub fn spectral_density_z_general(model: &CarmaModel, sampling: &SamplingSpec, u: f64) -> Result<f64> {
    let (dh, n) = lag_grid(model);
    let r = sampling.renewal_on_grid(dh, n, RenewalTruncation::default())?;
    let f: Vec<f64> = r.iter().enumerate().map(|(i, ri)| model.autocovariance(i as f64 * dh) * ri).collect();
    Ok(phi_z_from_lag_values(model, &f, dh, u))
}

/// `φ̄_{Z,n}(u)`: `r` replaced by `Σ_{k=1}^{n_terms} f^{*k}`.
pub fn truncated_spectral_density_z(
    model: &CarmaModel,
    sampling: &SamplingSpec,
    u: f64,
    n_terms: usize,
) -> Result<f64> {
    if n_terms == 0 {
        return Ok(phi_z_limit(model));
    }
    let (dh, n) = lag_grid(model);
    let r = sampling.partial_renewal_on_grid(dh, n, n_terms)?;
    let f: Vec<f64> = r.iter().enumerate().map(|(i, ri)| model.autocovariance(i as f64 * dh) * ri).collect();
    Ok(phi_z_from_lag_values(model, &f, dh, u))
}

/// Evaluation context shared by every `θ` of one estimation problem: model
/// orders, sampling law and frequency rule, plus θ-free caches.
#[derive(Debug)]
pub struct SpectralContext {
    p: usize,
    q: usize,
    sampling: SamplingSpec,
    rule: QuadratureRule,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    renewal_tables: Mutex<HashMap<(u64, usize), Arc<Vec<f64>>>>,
}

/// `φ_Z` on the half grid together with its normalizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub phi: Vec<f64>,
    /// Large-frequency limit used for the tail closure.
    pub phi_inf: f64,
    /// `s² = ∫ φ_Z/(1+u²)`, under the discrete rule plus the analytic tail.
    pub s2: f64,
}

impl DensityGrid {
    pub fn g(&self) -> Vec<f64> {
        self.phi.iter().map(|v| v / self.s2).collect()
    }

    pub fn log_g(&self) -> Vec<f64> {
        self.phi.iter().map(|v| (v / self.s2).ln()).collect()
    }

    pub fn g_inf(&self) -> f64 {
        self.phi_inf / self.s2
    }

    pub fn log_g_inf(&self) -> f64 {
        self.g_inf().ln()
    }
}

/// `g(u, θ)` at one frequency and `s²(θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledDensity {
    pub g: f64,
    pub s2: f64,
}

impl SpectralContext {
    pub fn new(p: usize, q: usize, sampling: SamplingSpec, rule: QuadratureRule) -> Result<Self> {
        ensure(p >= 1 && q < p, || format!("invalid orders p = {p}, q = {q}"))?;
        sampling.validate()?;
        rule.validate()?;
        let nodes = rule.nodes();
        let weights = rule.weights();
        Ok(Self { p, q, sampling, rule, nodes, weights, renewal_tables: Mutex::new(HashMap::new()) })
    }

    /// Same orders and sampling law on another frequency rule.
    pub fn with_rule(&self, rule: QuadratureRule) -> Result<Self> {
        Self::new(self.p, self.q, self.sampling.clone(), rule)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    pub fn sampling(&self) -> &SamplingSpec {
        &self.sampling
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn model(&self, theta: &[f64], sigma_l2: f64) -> Result<CarmaModel> {
        CarmaModel::new(CarmaParams::from_theta(self.p, self.q, theta, sigma_l2)?)
    }

    fn renewal_table(&self, dh: f64, n: usize) -> Result<Arc<Vec<f64>>> {
        let key = (dh.to_bits(), n);
        if let Some(t) = self.renewal_tables.lock().expect("cache lock").get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(self.sampling.renewal_on_grid(dh, n, RenewalTruncation::default())?);
        self.renewal_tables.lock().expect("cache lock").insert(key, t.clone());
        Ok(t)
    }

    fn lag_values(&self, model: &CarmaModel) -> Result<(Vec<f64>, f64)> {
        let (dh, n) = lag_grid(model);
        let r = self.renewal_table(dh, n)?;
        Ok((r.iter().enumerate().map(|(i, ri)| model.autocovariance(i as f64 * dh) * ri).collect(), dh))
    }

    /// `φ_Z(u)` at a single frequency.
    pub fn phi_z(&self, model: &CarmaModel, u: f64) -> Result<f64> {
        match self.sampling {
            SamplingSpec::Exponential { rate } => Ok(phi_z_exponential(model, rate, u)),
            _ => {
                let (f, dh) = self.lag_values(model)?;
                Ok(phi_z_from_lag_values(model, &f, dh, u))
            }
        }
    }

    /// `φ_Z` on the half grid and `s²`.
    pub fn density_grid(&self, model: &CarmaModel) -> Result<DensityGrid> {
        let phi: Vec<f64> = match self.sampling {
            SamplingSpec::Exponential { rate } => {
                self.nodes.iter().map(|&u| phi_z_exponential(model, rate, u)).collect()
            }
            _ => {
                let (f, dh) = self.lag_values(model)?;
                self.nodes.iter().map(|&u| phi_z_from_lag_values(model, &f, dh, u)).collect()
            }
        };
        let phi_inf = phi_z_limit(model);
        let s2 = self.integrate_weighted(&phi, phi_inf);
        Ok(DensityGrid { phi, phi_inf, s2 })
    }

    /// `∫ v(u)/(1+u²) du` for grid values `v` whose large-`u` limit is `v_inf`.
    pub fn integrate_weighted(&self, values: &[f64], v_inf: f64) -> f64 {
        let body: f64 = self.weights.iter().zip(&self.nodes).zip(values).map(|((w, u), v)| w * v / (1.0 + u * u)).sum();
        body + v_inf * self.rule.tail_mass()
    }

    /// `g(u, θ)` and `s²(θ)` at one frequency.
    pub fn rescaled_density_g(&self, model: &CarmaModel, u: f64) -> Result<RescaledDensity> {
        let grid = self.density_grid(model)?;
        Ok(RescaledDensity { g: self.phi_z(model, u)? / grid.s2, s2: grid.s2 })
    }
}
