//! CARMA(p,q) parameterization and second-order structure.
//!
//! With `a(z) = z^p + a_1 z^{p-1} + … + a_p` and `b(z) = b_0 + b_1 z + … + b_q z^q`
//! (`b_q = 1`), the state `X` solves `dX = A X dt + e_p dL` and `Y = bᵀX`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Roots closer than this (relative) are treated as repeated.
const DISTINCT_ROOT_TOL: f64 = 1e-6;
const HURWITZ_TOL: f64 = 1e-8;
const COMMON_ROOT_TOL: f64 = 1e-10;

/// Flat parameter vector `θ = (a_1..a_p, b_0..b_{q-1})` plus `σ_L²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct CarmaParams {
    a: Vec<f64>,
    b: Vec<f64>,
    sigma_l2: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    p: usize,
    q: usize,
    theta: Vec<f64>,
    sigma_l2: f64,
}

impl TryFrom<ParamsRepr> for CarmaParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        CarmaParams::from_theta(r.p, r.q, &r.theta, r.sigma_l2)
    }
}

impl From<CarmaParams> for ParamsRepr {
    fn from(c: CarmaParams) -> Self {
        ParamsRepr { p: c.p(), q: c.q(), theta: c.theta(), sigma_l2: c.sigma_l2 }
    }
}

impl CarmaParams {
    /// `a = (a_1..a_p)`, `b = (b_0..b_{q-1})`.
    pub fn new(a: Vec<f64>, b: Vec<f64>, sigma_l2: f64) -> Result<Self> {
        ensure(!a.is_empty(), || "AR order p must be at least 1".into())?;
        ensure(b.len() < a.len(), || format!("need q < p, got p = {}, q = {}", a.len(), b.len()))?;
        ensure(a.iter().chain(&b).all(|x| x.is_finite()), || "non-finite coefficient".into())?;
        ensure(sigma_l2.is_finite() && sigma_l2 > 0.0, || format!("σ_L² must be positive, got {sigma_l2}"))?;
        Ok(Self { a, b, sigma_l2 })
    }

    pub fn from_theta(p: usize, q: usize, theta: &[f64], sigma_l2: f64) -> Result<Self> {
        ensure(theta.len() == p + q, || format!("θ has length {}, expected p + q = {}", theta.len(), p + q))?;
        Self::new(theta[..p].to_vec(), theta[p..].to_vec(), sigma_l2)
    }

    /// Ornstein–Uhlenbeck: `a(z) = z + θ`.
    pub fn ou(theta: f64, sigma_l2: f64) -> Result<Self> {
        Self::new(vec![theta], vec![], sigma_l2)
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn q(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn sigma_l2(&self) -> f64 {
        self.sigma_l2
    }

    pub fn theta(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn with_sigma_l2(&self, sigma_l2: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), sigma_l2)
    }

    /// `a(z)`.
    pub fn ar_poly(&self, z: Complex64) -> Complex64 {
        self.a.iter().fold(Complex64::new(1.0, 0.0), |acc, &c| acc * z + c)
    }

    /// `a'(z)`.
    pub fn ar_poly_deriv(&self, z: Complex64) -> Complex64 {
        let p = self.p();
        let mut acc = Complex64::new(p as f64, 0.0);
        for (i, &c) in self.a.iter().enumerate().take(p - 1) {
            acc = acc * z + c * (p - 1 - i) as f64;
        }
        acc
    }

    /// `b(z)` with `b_q = 1`.
    pub fn ma_poly(&self, z: Complex64) -> Complex64 {
        self.b.iter().rev().fold(Complex64::new(1.0, 0.0), |acc, &c| acc * z + c)
    }
}

#[derive(Clone, Debug)]
enum Response {
    /// Distinct roots: `k(t) = Σ c_i e^{λ_i t}`, `γ(h) = Σ d_i e^{λ_i |h|}`.
    Modal {
        kernel: Vec<Complex64>,
        acf: Vec<Complex64>,
    },
    Dense,
}

/// A validated CARMA model.
#[derive(Clone, Debug)]
pub struct CarmaModel {
    params: CarmaParams,
    a_mat: DMatrix<f64>,
    b_vec: DVector<f64>,
    sigma: DMatrix<f64>,
    sigma_b: DVector<f64>,
    roots: Vec<Complex64>,
    response: Response,
    lyapunov_residual: f64,
}

impl CarmaModel {
    pub fn new(params: CarmaParams) -> Result<Self> {
        let p = params.p();
        let a_mat = companion(params.a());
        let mut b_vec = DVector::zeros(p);
        for (i, &c) in params.b().iter().enumerate() {
            b_vec[i] = c;
        }
        b_vec[params.q()] = 1.0;

        let roots: Vec<Complex64> = if p == 1 {
            vec![Complex64::new(-params.a()[0], 0.0)]
        } else {
            a_mat.clone().complex_eigenvalues().iter().copied().collect()
        };
        let max_re = roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if !(max_re <= -HURWITZ_TOL) {
            return Err(Error::NonStationary { max_real_part: max_re });
        }
        if params.q() > 0 {
            for &z in &roots {
                let num = params.ma_poly(z).norm();
                let scale: f64 = params
                    .b()
                    .iter()
                    .chain(std::iter::once(&1.0))
                    .enumerate()
                    .map(|(j, c)| c.abs() * z.norm().powi(j as i32))
                    .sum();
                if num <= COMMON_ROOT_TOL * scale {
                    return Err(Error::CommonRoot { re: z.re, im: z.im });
                }
            }
        }

        let sigma = solve_lyapunov(&a_mat)?;
        let residual = lyapunov_residual(&a_mat, &sigma);
        if residual > 1e-10 {
            return Err(Error::Lyapunov(format!("residual {residual:e} exceeds 1e-10")));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::Lyapunov("Σ is not positive definite".into()));
        }
        let sigma_b = &sigma * &b_vec;

        let mut model = Self {
            params,
            a_mat,
            b_vec,
            sigma,
            sigma_b,
            roots,
            response: Response::Dense,
            lyapunov_residual: residual,
        };
        model.response = model.modal_response().unwrap_or(Response::Dense);
        Ok(model)
    }

    fn modal_response(&self) -> Option<Response> {
        let r = &self.roots;
        let scale = r.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for i in 0..r.len() {
            for j in 0..i {
                if (r[i] - r[j]).norm() < DISTINCT_ROOT_TOL * scale {
                    return None;
                }
            }
        }
        let s2 = self.params.sigma_l2;
        let mut kernel = Vec::with_capacity(r.len());
        let mut acf = Vec::with_capacity(r.len());
        for &z in r {
            let c = self.params.ma_poly(z) / self.params.ar_poly_deriv(z);
            kernel.push(c);
            acf.push(s2 * c * self.params.ma_poly(-z) / self.params.ar_poly(-z));
        }
        let modal = Response::Modal { kernel, acf };
        // The modal coefficients lose accuracy when roots nearly coincide; keep
        // them only if they reproduce the state-space formula.
        let d = self.spectral_abscissa();
        for h in [0.0, 0.5 / d, 1.0 / d, 3.0 / d] {
            let dense = self.autocovariance_dense(h);
            let fast = eval_modal(&modal, r, h, false);
            if (dense - fast).abs() > 1e-9 * self.autocovariance_dense(0.0).abs() {
                return None;
            }
        }
        Some(modal)
    }

    pub fn params(&self) -> &CarmaParams {
        &self.params
    }

    pub fn p(&self) -> usize {
        self.params.p()
    }

    pub fn q(&self) -> usize {
        self.params.q()
    }

    pub fn sigma_l2(&self) -> f64 {
        self.params.sigma_l2
    }

    pub fn theta(&self) -> Vec<f64> {
        self.params.theta()
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a_mat
    }

    pub fn b_vector(&self) -> &DVector<f64> {
        &self.b_vec
    }

    pub fn sigma_matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Zeros of `a`, i.e. eigenvalues of `A`.
    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// `D = −max Re λ(A) > 0`.
    pub fn spectral_abscissa(&self) -> f64 {
        -self.roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |λ(A)|`.
    pub fn spectral_radius(&self) -> f64 {
        self.roots.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn lyapunov_residual(&self) -> f64 {
        self.lyapunov_residual
    }

    /// `bᵀΣb`.
    pub fn bsb(&self) -> f64 {
        self.b_vec.dot(&self.sigma_b)
    }

    pub fn has_modal_form(&self) -> bool {
        matches!(self.response, Response::Modal { .. })
    }

    /// Modal coefficients `(λ_i, c_i)` of the kernel `k(t) = bᵀe^{At}e_p`, if the roots are distinct.
    pub fn kernel_modes(&self) -> Option<(&[Complex64], &[Complex64])> {
        match &self.response {
            Response::Modal { kernel, .. } => Some((&self.roots, kernel)),
            Response::Dense => None,
        }
    }

    /// `γ_Y(h) = σ_L² bᵀ e^{A|h|} Σ b`.
    pub fn autocovariance(&self, h: f64) -> f64 {
        match &self.response {
            Response::Modal { .. } => eval_modal(&self.response, &self.roots, h.abs(), false),
            Response::Dense => self.autocovariance_dense(h),
        }
    }

    /// State-space evaluation of `γ_Y`, bypassing the modal form.
    pub fn autocovariance_dense(&self, h: f64) -> f64 {
        let e = matrix_exp(&self.a_mat, h.abs());
        self.params.sigma_l2 * self.b_vec.dot(&(e * &self.sigma_b))
    }

    /// Kernel `k(t) = bᵀ e^{At} e_p` for `t ≥ 0`, zero for `t < 0`.
    pub fn kernel(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.response {
            Response::Modal { .. } => eval_modal(&self.response, &self.roots, t, true),
            Response::Dense => self.kernel_dense(t),
        }
    }

    pub fn kernel_dense(&self, t: f64) -> f64 {
        let e = matrix_exp(&self.a_mat, t);
        let p = self.p();
        (0..p).map(|i| self.b_vec[i] * e[(i, p - 1)]).sum()
    }

    /// `φ_Y(u) = σ_L²/(2π) |b(iu)/a(iu)|²`.
    pub fn spectral_density_y(&self, u: f64) -> f64 {
        let z = Complex64::new(0.0, u.abs());
        let r = self.params.ma_poly(z) / self.params.ar_poly(z);
        self.params.sigma_l2 / (2.0 * PI) * r.norm_sqr()
    }

    /// `|b(iu)/a(iu)|²`.
    pub fn transfer_sqr(&self, u: f64) -> f64 {
        let z = Complex64::new(0.0, u.abs());
        (self.params.ma_poly(z) / self.params.ar_poly(z)).norm_sqr()
    }
}

fn eval_modal(resp: &Response, roots: &[Complex64], t: f64, kernel: bool) -> f64 {
    let Response::Modal { kernel: kc, acf } = resp else { unreachable!() };
    let coeffs = if kernel { kc } else { acf };
    roots.iter().zip(coeffs).map(|(&z, &c)| (c * (z * t).exp()).re).sum()
}

/// `validate` operation: checks H3-type conditions and builds the model.
pub fn validate(params: CarmaParams) -> Result<CarmaModel> {
    CarmaModel::new(params)
}

/// Companion matrix with superdiagonal ones and last row `(−a_p, …, −a_1)`.
pub fn companion(a: &[f64]) -> DMatrix<f64> {
    let p = a.len();
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    for j in 0..p {
        m[(p - 1, j)] = -a[p - 1 - j];
    }
    m
}

/// Solves `AΣ + ΣAᵀ = −e_p e_pᵀ` through the Kronecker form, with one step of
/// iterative refinement.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let n = p * p;
    let eye = DMatrix::<f64>::identity(p, p);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = -1.0;
    let lu = k.clone().lu();
    let mut x = lu.solve(&rhs).ok_or_else(|| Error::Lyapunov("singular Kronecker system".into()))?;
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let s = DMatrix::from_column_slice(p, p, x.as_slice());
    Ok((&s + s.transpose()) * 0.5)
}

pub fn lyapunov_residual(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    let mut r = a * sigma + sigma * a.transpose();
    r[(p - 1, p - 1)] += 1.0;
    r.amax()
}

/// `e^{At}` by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exp(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let p = a.nrows();
    if p == 1 {
        return DMatrix::from_element(1, 1, (a[(0, 0)] * t).exp());
    }
    let mut m = a * t;
    let norm = (0..p).map(|j| m.column(j).abs().sum()).fold(0.0, f64::max);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    if s > 0 {
        m /= 2f64.powi(s);
    }
    let eye = DMatrix::<f64>::identity(p, p);
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;
    let u_inner = &m6 * (&m6 * B[13] + &m4 * B[11] + &m2 * B[9]) + &m6 * B[7] + &m4 * B[5] + &m2 * B[3] + &eye * B[1];
    let u = &m * u_inner;
    let v = &m6 * (&m6 * B[12] + &m4 * B[10] + &m2 * B[8]) + &m6 * B[6] + &m4 * B[4] + &m2 * B[2] + &eye * B[0];
    let mut r = (&v - &u).lu().solve(&(&v + &u)).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Axis-aligned compact parameter set `Θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub p: usize,
    pub q: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(p: usize, q: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { p, q, lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        ensure(d >= 1 && self.q < self.p, || format!("invalid orders p = {}, q = {}", self.p, self.q))?;
        ensure(self.lower.len() == d && self.upper.len() == d, || format!("box bounds must have length p + q = {d}"))?;
        for i in 0..d {
            ensure(self.lower[i] < self.upper[i], || {
                format!("box bound {i}: lower {} must be below upper {}", self.lower[i], self.upper[i])
            })?;
        }
        ensure(d <= 16, || "box dimension too large for vertex check".into())?;
        for mask in 0u32..(1 << d) {
            let v: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] }).collect();
            let params = CarmaParams::from_theta(self.p, self.q, &v, 1.0)?;
            CarmaModel::new(params).map_err(|e| Error::InvalidParameter(format!("box vertex {v:?} invalid: {e}")))?;
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && (0..self.dim()).all(|i| theta[i] >= self.lower[i] && theta[i] <= self.upper[i])
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| 0.5 * (self.lower[i] + self.upper[i])).collect()
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (i, x) in theta.iter_mut().enumerate() {
            *x = x.clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(a: &[f64], b: &[f64]) -> CarmaModel {
        CarmaModel::new(CarmaParams::new(a.to_vec(), b.to_vec(), 1.0).unwrap()).unwrap()
    }

    #[test]
    fn ou_sigma() {
        let m = model(&[1.0], &[]);
        assert_eq!(m.a_matrix()[(0, 0)], -1.0);
        assert_abs_diff_eq!(m.sigma_matrix()[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn carma20_sigma() {
        let m = model(&[3.0, 2.0], &[]);
        let s = m.sigma_matrix();
        assert_abs_diff_eq!(s[(0, 0)], 1.0 / 12.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[(1, 1)], 1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn non_stationary_rejected() {
        match CarmaModel::new(CarmaParams::ou(-1.0, 1.0).unwrap()) {
            Err(Error::NonStationary { max_real_part }) => assert_abs_diff_eq!(max_real_part, 1.0),
            other => panic!("expected NonStationary, got {other:?}"),
        }
        // a(z) = z² + 1 has roots on the imaginary axis
        assert!(matches!(
            CarmaModel::new(CarmaParams::new(vec![0.0, 1.0], vec![], 1.0).unwrap()),
            Err(Error::NonStationary { .. })
        ));
    }

    #[test]
    fn common_root_rejected() {
        // a(z) = (z+1)(z+2), b(z) = z + 1
        let r = CarmaModel::new(CarmaParams::new(vec![3.0, 2.0], vec![1.0], 1.0).unwrap());
        match r {
            Err(Error::CommonRoot { re, im }) => {
                assert_abs_diff_eq!(re, -1.0, epsilon = 1e-8);
                assert_abs_diff_eq!(im, 0.0, epsilon = 1e-8);
            }
            other => panic!("expected CommonRoot, got {other:?}"),
        }
    }

    #[test]
    fn dimension_errors() {
        assert!(CarmaParams::new(vec![], vec![], 1.0).is_err());
        assert!(CarmaParams::new(vec![1.0], vec![0.5], 1.0).is_err());
        assert!(CarmaParams::from_theta(2, 1, &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn poly_evaluation() {
        let p = CarmaParams::new(vec![3.0, 2.0], vec![0.5], 1.0).unwrap();
        let z = Complex64::new(0.3, -1.1);
        assert_abs_diff_eq!((p.ar_poly(z) - (z * z + 3.0 * z + 2.0)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((p.ar_poly_deriv(z) - (2.0 * z + 3.0)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((p.ma_poly(z) - (z + 0.5)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_scalar_and_identity() {
        let a = companion(&[1.0]);
        assert_abs_diff_eq!(matrix_exp(&a, 2.0)[(0, 0)], 0.135_335_283_236_612_7, epsilon = 1e-15);
        let a = companion(&[3.0, 2.0]);
        assert_eq!(matrix_exp(&a, 0.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn repeated_roots_use_dense_path() {
        // (z+1)² : repeated root
        let m = model(&[2.0, 1.0], &[]);
        assert!(!m.has_modal_form());
        // γ(h) = σ² e^{-h}(1+h)/4 for a double root at −1
        for h in [0.0, 0.7, 2.0] {
            assert_abs_diff_eq!(m.autocovariance(h), (-h as f64).exp() * (1.0 + h) / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn modal_matches_dense() {
        let m = model(&[2.0, 5.0, 3.0], &[0.4]);
        assert!(m.has_modal_form());
        for h in [0.0, 0.3, 1.0, 4.0] {
            assert_abs_diff_eq!(m.autocovariance(h), m.autocovariance_dense(h), epsilon = 1e-12);
            assert_abs_diff_eq!(m.kernel(h), m.kernel_dense(h), epsilon = 1e-12);
        }
    }

    #[test]
    fn box_validation() {
        assert!(ParamBox::new(1, 0, vec![0.01], vec![10.0]).is_ok());
        assert!(ParamBox::new(1, 0, vec![1.0], vec![0.5]).is_err());
        assert!(ParamBox::new(1, 0, vec![-1.0], vec![1.0]).is_err());
    }

    #[test]
    fn params_serde_round_trip() {
        let p = CarmaParams::new(vec![2.0, 5.0, 3.0], vec![0.4], 1.5).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"theta\":[2.0,5.0,3.0,0.4]"));
        let back: CarmaParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
