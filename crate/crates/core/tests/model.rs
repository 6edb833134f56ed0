mod common;

use std::f64::consts::PI;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use carma_renewal::model::{companion, matrix_exp, solve_lyapunov};
use carma_renewal::quadrature::{composite_gauss_legendre, integrate_gl};
use carma_renewal::{CarmaModel, CarmaParams, Error, ParamBox};
use common::{carma, fixtures, ou};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `Σ_k (At)^k/k!` until the term drops below 1e-12.
fn expm_taylor(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let p = a.nrows();
    let at = a * t;
    let mut term = DMatrix::<f64>::identity(p, p);
    let mut sum = term.clone();
    for k in 1..200 {
        term = &term * &at / k as f64;
        sum += &term;
        if term.amax() < 1e-12 {
            break;
        }
    }
    sum
}

/// `Σ = ∫₀^∞ e^{As} e_p e_pᵀ e^{Aᵀs} ds` by composite Gauss–Legendre.
fn sigma_by_quadrature(model: &CarmaModel) -> DMatrix<f64> {
    let a = model.a_matrix();
    let p = a.nrows();
    let s_max = 45.0 / model.spectral_abscissa();
    let (x, w) = composite_gauss_legendre(0.0, s_max, 400, 8);
    let mut s = DMatrix::zeros(p, p);
    for (xi, wi) in x.iter().zip(&w) {
        let col = matrix_exp(a, *xi).column(p - 1).into_owned();
        s += &col * col.transpose() * *wi;
    }
    s
}

/// `γ_Y(h) = ∫ φ_Y(u) cos(hu) du` over `[0, U]`, doubled, with a `c/u²` tail at `h = 0`.
fn gamma_by_inverse_transform(model: &CarmaModel, h: f64) -> f64 {
    let u_max = 5000.0;
    let body = integrate_gl(0.0, u_max, 10_000, 8, |u| model.spectral_density_y(u) * (h * u).cos());
    let tail = if h == 0.0 { model.spectral_density_y(u_max) * u_max } else { 0.0 };
    2.0 * (body + tail)
}

#[test]
fn ou_stationary_covariance() {
    let m = ou(1.0, 1.0);
    assert_eq!(m.a_matrix()[(0, 0)], -1.0);
    assert_relative_eq!(m.sigma_matrix()[(0, 0)], 0.5, max_relative = 1e-14);
}

#[test]
fn carma20_stationary_covariance() {
    let m = carma(&[3.0, 2.0], &[]);
    let s = m.sigma_matrix();
    assert_abs_diff_eq!(s[(0, 0)], 1.0 / 12.0, epsilon = 1e-14);
    assert_abs_diff_eq!(s[(1, 1)], 1.0 / 6.0, epsilon = 1e-14);
    assert_abs_diff_eq!(s[(0, 1)], 0.0, epsilon = 1e-14);
    let q = sigma_by_quadrature(&m);
    assert!((q - s).amax() < 1e-10);
}

#[test]
fn sigma_matches_defining_integral_on_fixtures() {
    for (name, m) in fixtures() {
        let q = sigma_by_quadrature(&m);
        assert!((&q - m.sigma_matrix()).amax() < 1e-9, "{name}");
    }
}

#[test]
fn non_hurwitz_is_rejected() {
    let e = CarmaModel::new(CarmaParams::ou(-1.0, 1.0).unwrap()).unwrap_err();
    match e {
        Error::NonStationary { max_real_part } => assert_relative_eq!(max_real_part, 1.0, max_relative = 1e-12),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn shared_root_is_rejected() {
    // a(z) = (z+1)(z+2), b(z) = z + 1.
    let e = CarmaModel::new(CarmaParams::new(vec![3.0, 2.0], vec![1.0], 1.0).unwrap()).unwrap_err();
    match e {
        Error::CommonRoot { re, im } => {
            assert_abs_diff_eq!(re, -1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(im, 0.0, epsilon = 1e-9);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn matrix_exponential_examples() {
    let a = companion(&[3.0, 2.0]);
    assert_eq!(matrix_exp(&a, 0.0), DMatrix::identity(2, 2));
    let s = DMatrix::from_element(1, 1, -1.0);
    assert_relative_eq!(matrix_exp(&s, 2.0)[(0, 0)], (-2.0f64).exp(), max_relative = 1e-15);
    assert!((matrix_exp(&a, 0.7) - expm_taylor(&a, 0.7)).amax() <= 1e-8);
}

#[test]
fn matrix_exponential_relative_accuracy() {
    for (_, m) in fixtures() {
        for t in [0.01, 0.3, 1.0, 2.5] {
            let e = matrix_exp(m.a_matrix(), t);
            let o = expm_taylor(m.a_matrix(), t);
            assert!((&e - &o).amax() <= 1e-10 * o.amax(), "t = {t}");
        }
    }
}

#[test]
fn ou_autocovariance_values() {
    let m = ou(1.0, 1.0);
    assert_relative_eq!(m.autocovariance(0.0), 0.5, max_relative = 1e-15);
    assert_relative_eq!(m.autocovariance(2.0), 0.067_667_641_618_306_35, max_relative = 1e-12);
}

#[test]
fn autocovariance_decays_at_the_spectral_abscissa() {
    // Roots −1 and −2: log|γ| has slope −1 once the faster mode has died out.
    let m = carma(&[3.0, 2.0], &[0.5]);
    let hs: Vec<f64> = (0..=30).map(|i| 5.0 + 0.5 * i as f64).collect();
    let ys: Vec<f64> = hs.iter().map(|&h| m.autocovariance(h).abs().ln()).collect();
    let n = hs.len() as f64;
    let (mh, my) = (hs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = hs.iter().zip(&ys).map(|(h, y)| (h - mh) * (y - my)).sum::<f64>()
        / hs.iter().map(|h| (h - mh).powi(2)).sum::<f64>();
    assert_abs_diff_eq!(slope, -m.spectral_abscissa(), epsilon = 0.02);
    let c = m.autocovariance(0.0).abs();
    for &h in &hs {
        assert!(m.autocovariance(h).abs() <= 2.0 * c * (-m.spectral_abscissa() * h).exp());
    }
}

#[test]
fn spectral_density_examples() {
    assert_relative_eq!(ou(1.0, 1.0).spectral_density_y(0.0), 1.0 / (2.0 * PI), max_relative = 1e-15);
    // a(z) = z² + 2z + 2 has roots −1 ± i, so b(z) = 1 + z shares none.
    let m = carma(&[2.0, 2.0], &[1.0]);
    for u in [0.0f64, 0.3, 1.0, 4.0, 30.0] {
        let a2 = (2.0 - u * u).powi(2) + 4.0 * u * u;
        assert_relative_eq!(m.spectral_density_y(u), (1.0 + u * u) / a2 / (2.0 * PI), max_relative = 1e-13);
    }
}

#[test]
fn fourier_pair_recovers_autocovariance() {
    for (name, m) in fixtures() {
        for h in [0.0, 0.5, 1.0, 2.0] {
            let want = m.autocovariance(h);
            let got = gamma_by_inverse_transform(&m, h);
            assert!((got - want).abs() <= 1e-4 * want.abs(), "{name}, h = {h}: {got} vs {want}");
        }
    }
}

#[test]
fn lyapunov_residual_on_fixtures() {
    for (name, m) in fixtures() {
        assert!(m.lyapunov_residual() <= 1e-10, "{name}: {}", m.lyapunov_residual());
    }
}

#[test]
fn box_vertices_must_be_valid() {
    assert!(ParamBox::new(1, 0, vec![0.01], vec![10.0]).is_ok());
    assert!(ParamBox::new(1, 0, vec![-1.0], vec![10.0]).is_err());
    assert!(ParamBox::new(1, 0, vec![2.0], vec![1.0]).is_err());
}

/// Real polynomial coefficients `(a_1..a_p)` with the given roots.
fn poly_from_roots(roots: &[(f64, f64)]) -> Vec<f64> {
    let mut c = vec![num_complex::Complex64::new(1.0, 0.0)];
    for &(re, im) in roots {
        let z = num_complex::Complex64::new(re, im);
        let mut next = vec![num_complex::Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * z;
        }
        c = next;
    }
    c[1..].iter().map(|z| z.re).collect()
}

fn stable_params() -> impl Strategy<Value = CarmaParams> {
    let real = (-3.0f64..-0.2).prop_map(|r| vec![(r, 0.0)]);
    let pair = (-2.0f64..-0.2, 0.1f64..3.0).prop_map(|(r, i)| vec![(r, i), (r, -i)]);
    let block = prop_oneof![real, pair];
    (prop::collection::vec(block, 1..3), prop::collection::vec(-2.0f64..2.0, 0..3), 0.1f64..5.0).prop_filter_map(
        "valid orders",
        |(blocks, b, s2)| {
            let roots: Vec<(f64, f64)> = blocks.into_iter().flatten().collect();
            let a = poly_from_roots(&roots);
            let q = b.len().min(a.len() - 1);
            CarmaParams::new(a, b[..q].to_vec(), s2).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn validated_models_satisfy_lyapunov(params in stable_params()) {
        if let Ok(m) = CarmaModel::new(params.clone()) {
            prop_assert!(m.lyapunov_residual() <= 1e-10);
            let s = m.sigma_matrix();
            prop_assert_eq!(s, &s.transpose());
            prop_assert!(s.clone().symmetric_eigen().eigenvalues.iter().all(|&e| e > 0.0));
            prop_assert!(params.a().iter().all(|&a| a > 0.0));
            let direct = solve_lyapunov(m.a_matrix()).unwrap();
            prop_assert!((direct - s).amax() <= 1e-12 * s.amax());
        }
    }

    #[test]
    fn covariance_and_spectrum_are_even(params in stable_params(), h in 0.0f64..20.0, u in 0.0f64..50.0) {
        if let Ok(m) = CarmaModel::new(params) {
            prop_assert_eq!(m.autocovariance(h), m.autocovariance(-h));
            prop_assert_eq!(m.spectral_density_y(u), m.spectral_density_y(-u));
            prop_assert!(m.spectral_density_y(u) >= 0.0);
            prop_assert!(m.autocovariance(0.0) > 0.0);
        }
    }

    #[test]
    fn autocovariance_decays_exponentially(params in stable_params()) {
        if let Ok(m) = CarmaModel::new(params) {
            // Envelope of a sum of p damped modes with rate D.
            let d = m.spectral_abscissa();
            let c: f64 = (0..=200).map(|i| m.autocovariance(i as f64 * 0.1).abs() * (d * i as f64 * 0.1).exp()).fold(0.0, f64::max);
            for i in 0..=40 {
                let h = 1.0 + 0.5 * i as f64;
                prop_assert!(m.autocovariance(h).abs() <= 1.5 * c * (-d * h).exp() * (1.0 + h).powi(m.p() as i32) + 1e-300);
            }
        }
    }
}
