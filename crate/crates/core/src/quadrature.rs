//! Quadrature building blocks: the symmetric frequency grid, composite
//! Gauss–Legendre rules, Filon cosine sums and a natural cubic spline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Lag distance kept clear between the sampling span and the first alias.
pub const ALIAS_MARGIN: f64 = 60.0;

/// Trapezoidal rule on the symmetric grid `{mΔu : |m| ≤ M}`, `MΔu = U`.
///
/// Integrands are even in every use here, so only the half grid `m = 0..=M`
/// is stored; [`QuadratureRule::weights`] folds the two halves together.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub du: f64,
    pub u_max: f64,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self { du: 0.01, u_max: 100.0 }
    }
}

impl QuadratureRule {
    pub fn new(du: f64, u_max: f64) -> Result<Self> {
        let r = Self { du, u_max };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.du.is_finite() && self.du > 0.0, || format!("Δu must be positive, got {}", self.du))?;
        ensure(self.u_max >= 50.0 * self.du, || {
            format!("U_max = {} must be at least 50·Δu = {}", self.u_max, 50.0 * self.du)
        })
    }

    /// Number of half-grid intervals `M`.
    pub fn m(&self) -> usize {
        (self.u_max / self.du).round() as usize
    }

    /// Effective upper limit `M·Δu`.
    pub fn upper(&self) -> f64 {
        self.m() as f64 * self.du
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.m()).map(|m| m as f64 * self.du).collect()
    }

    /// Weights on the half grid such that `Σ w_m f(u_m) ≈ ∫_{−U}^{U} f` for even `f`.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.m();
        let mut w = vec![2.0 * self.du; m + 1];
        w[0] = self.du;
        w[m] = self.du;
        w
    }

    pub fn integrate_even(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.m() + 1);
        let m = self.m();
        let inner: f64 = values[1..m].iter().sum();
        self.du * (values[0] + values[m] + 2.0 * inner)
    }

    /// The trapezoidal sum of `I_{Z,n}`-weighted integrands picks up lags
    /// shifted by multiples of `2π/Δu`. Returns a finer rule with
    /// `2π/Δu = span + ALIAS_MARGIN` when the sampling span reaches that far.
    pub fn alias_free(&self, span: f64) -> Option<QuadratureRule> {
        let need = span + ALIAS_MARGIN;
        if 2.0 * PI / self.du >= need {
            return None;
        }
        Some(QuadratureRule { du: 2.0 * PI / need, u_max: self.u_max })
    }

    /// `∫_{|u|>U} du/(1+u²) = π − 2·atan(U)`.
    pub fn tail_mass(&self) -> f64 {
        PI - 2.0 * self.upper().atan()
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

pub fn integrate_gl<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, mut f: F) -> f64 {
    let (x, w) = composite_gauss_legendre(a, b, panels, order);
    x.iter().zip(&w).map(|(&xi, &wi)| wi * f(xi)).sum()
}

/// Filon–Simpson coefficients `(α, β, γ)` for `θ = u·Δh`.
pub fn filon_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta.abs() < 0.1 {
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let a = 2.0 * t3 / 45.0 - 2.0 * t3 * t2 / 315.0 + 2.0 * t3 * t2 * t2 / 4725.0;
        let b = 2.0 / 3.0 + 2.0 * t2 / 15.0 - 4.0 * t2 * t2 / 105.0 + 2.0 * t2 * t2 * t2 / 567.0;
        let g = 4.0 / 3.0 - 2.0 * t2 / 15.0 + t2 * t2 / 210.0 - t2 * t2 * t2 / 11340.0;
        return (a, b, g);
    }
    let (s, c) = theta.sin_cos();
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let a = 1.0 / theta + s * c / t2 - 2.0 * s * s / t3;
    let b = 2.0 * ((1.0 + c * c) / t2 - 2.0 * s * c / t3);
    let g = 4.0 * (s / t3 - c / t2);
    (a, b, g)
}

/// `∫_0^{NΔh} F(h) cos(uh) dh` by Filon–Simpson, `N = values.len() − 1` even.
pub fn filon_cos(values: &[f64], dh: f64, u: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n % 2 == 0 && n >= 2);
    let theta = u * dh;
    let (a, b, g) = filon_coefficients(theta);
    let (mut c_even, mut c_odd) = (0.0, 0.0);
    let (ds, dc) = theta.sin_cos();
    let (mut s, mut c) = (0.0f64, 1.0f64);
    for (i, &f) in values.iter().enumerate() {
        if i % 64 == 0 {
            let (s0, c0) = (i as f64 * theta).sin_cos();
            s = s0;
            c = c0;
        }
        if i % 2 == 0 {
            c_even += f * c;
        } else {
            c_odd += f * c;
        }
        let (ns, nc) = (s * dc + c * ds, c * dc - s * ds);
        s = ns;
        c = nc;
    }
    let h_end = n as f64 * dh;
    c_even -= 0.5 * (values[0] + values[n] * (u * h_end).cos());
    dh * (a * values[n] * (u * h_end).sin() + b * c_even + g * c_odd)
}

/// Natural cubic spline through equally spaced samples.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x0: f64,
    step: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x0: f64, step: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the tridiagonal system with natural ends.
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (step * step);
                if i == 0 {
                    c[i] = 1.0 / 4.0;
                    d[i] = rhs / 4.0;
                } else {
                    let den = 4.0 - c[i - 1];
                    c[i] = 1.0 / den;
                    d[i] = (rhs - d[i - 1]) / den;
                }
            }
            for i in (0..k).rev() {
                m[i + 1] = d[i] - if i + 1 < k { c[i] * m[i + 2] } else { 0.0 };
            }
        }
        Self { x0, step, y, m }
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.y.len() - 1) as f64 * self.step
    }

    /// Value at `x`; zero outside the table.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.x0) / self.step;
        if t < 0.0 || t > (self.y.len() - 1) as f64 {
            return 0.0;
        }
        let i = (t.floor() as usize).min(self.y.len() - 2);
        let a = t - i as f64;
        let b = 1.0 - a;
        let h2 = self.step * self.step;
        b * self.y[i] + a * self.y[i + 1] + ((b * b * b - b) * self.m[i] + (a * a * a - a) * self.m[i + 1]) * h2 / 6.0
    }
}
