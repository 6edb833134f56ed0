//! Weight functions `G` and their cosine transforms
//! `Ĝ_R(ξ) = (1/2π) ∫ G(u) cos(uξ) du`.

use std::f64::consts::PI;

use crate::error::{ensure, Result};
use crate::quadrature::{CubicSpline, QuadratureRule};

pub trait WeightFunction: Send + Sync {
    fn value(&self, u: f64) -> f64;
    fn cos_transform(&self, xi: f64) -> f64;
    fn l1_norm(&self) -> f64;
    /// `∫_{|u|>U} G(u) du`.
    fn tail_integral(&self, u_max: f64) -> f64;
    /// Lag beyond which `Ĝ_R` is treated as zero.
    fn transform_cutoff(&self) -> f64;
}

/// `G(u) = c/(1+u²)` with `Ĝ_R(ξ) = c·e^{−|ξ|}/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyWeight {
    pub scale: f64,
}

impl CauchyWeight {
    pub fn new(scale: f64) -> Self {
        Self { scale }
    }
}

impl WeightFunction for CauchyWeight {
    fn value(&self, u: f64) -> f64 {
        self.scale / (1.0 + u * u)
    }

    fn cos_transform(&self, xi: f64) -> f64 {
        0.5 * self.scale * (-xi.abs()).exp()
    }

    fn l1_norm(&self) -> f64 {
        self.scale.abs() * PI
    }

    fn tail_integral(&self, u_max: f64) -> f64 {
        self.scale * (PI - 2.0 * u_max.atan())
    }

    fn transform_cutoff(&self) -> f64 {
        40.0
    }
}

/// Even weight known on the half grid of a [`QuadratureRule`], behaving like
/// `c_∞/(1+u²)` at large `|u|`.
///
/// `Ĝ_R` is the trapezoidal transform of the residual `G − c_∞/(1+u²)`,
/// tabulated in `ξ` and splined, plus the exact transform of the Cauchy part.
#[derive(Clone, Debug)]
pub struct GridWeight {
    rule: QuadratureRule,
    values: Vec<f64>,
    c_inf: f64,
    residual: CubicSpline,
    l1: f64,
}

pub const XI_STEP: f64 = 0.05;
pub const XI_MAX: f64 = 60.0;

impl GridWeight {
    pub fn new(rule: QuadratureRule, values: Vec<f64>, c_inf: f64) -> Result<Self> {
        ensure(values.len() == rule.m() + 1, || {
            format!("weight has {} values, grid has {}", values.len(), rule.m() + 1)
        })?;
        ensure(values.iter().all(|v| v.is_finite()) && c_inf.is_finite(), || "non-finite weight values".into())?;
        let nodes = rule.nodes();
        let w = rule.weights();
        let resid: Vec<f64> = values.iter().zip(&nodes).map(|(v, u)| v - c_inf / (1.0 + u * u)).collect();
        let n_xi = (XI_MAX / XI_STEP).round() as usize + 1;
        let wr: Vec<f64> = w.iter().zip(&resid).map(|(a, b)| a * b / (2.0 * PI)).collect();
        let table: Vec<f64> = (0..n_xi)
            .map(|k| {
                let xi = k as f64 * XI_STEP;
                let (ds, dc) = (rule.du * xi).sin_cos();
                let (mut s, mut c) = (0.0f64, 1.0f64);
                let mut acc = 0.0;
                for (m, v) in wr.iter().enumerate() {
                    if m % 256 == 0 && m > 0 {
                        let (s0, c0) = (m as f64 * rule.du * xi).sin_cos();
                        s = s0;
                        c = c0;
                    }
                    acc += v * c;
                    let ns = s * dc + c * ds;
                    c = c * dc - s * ds;
                    s = ns;
                }
                acc
            })
            .collect();
        let l1 = w.iter().zip(&values).map(|(a, v)| a * v.abs()).sum::<f64>() + c_inf.abs() * rule.tail_mass();
        Ok(Self { rule, values, c_inf, residual: CubicSpline::new(0.0, XI_STEP, table), l1 })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn c_inf(&self) -> f64 {
        self.c_inf
    }
}

impl WeightFunction for GridWeight {
    /// Linear interpolation on the grid; the Cauchy tail beyond it.
    fn value(&self, u: f64) -> f64 {
        let u = u.abs();
        let x = u / self.rule.du;
        let m = x.floor() as usize;
        if m >= self.values.len() - 1 {
            return if m == self.values.len() - 1 && x == m as f64 {
                self.values[m]
            } else {
                self.c_inf / (1.0 + u * u)
            };
        }
        let f = x - m as f64;
        self.values[m] * (1.0 - f) + self.values[m + 1] * f
    }

    fn cos_transform(&self, xi: f64) -> f64 {
        let xi = xi.abs();
        self.residual.eval(xi) + 0.5 * self.c_inf * (-xi).exp()
    }

    fn l1_norm(&self) -> f64 {
        self.l1
    }

    fn tail_integral(&self, u_max: f64) -> f64 {
        self.c_inf * (PI - 2.0 * u_max.atan())
    }

    fn transform_cutoff(&self) -> f64 {
        XI_MAX
    }
}
