mod common;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use carma_renewal::quadrature::integrate_gl;
use carma_renewal::sampling::{sample_arrivals, RenewalTruncation, TabulatedDensity};
use carma_renewal::{SamplingMode, SamplingSpec};
use common::{mean_se, rng, var_se};
use proptest::prelude::*;

fn erlang_by_hand(k: usize, beta: f64, t: f64) -> f64 {
    let fact: f64 = (1..k).map(|i| i as f64).product();
    beta.powi(k as i32) * t.powi(k as i32 - 1) * (-beta * t).exp() / fact
}

fn spacings(times: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    times
        .iter()
        .map(|&t| {
            let d = t - prev;
            prev = t;
            d
        })
        .collect()
}

fn tabulated_gamma() -> SamplingSpec {
    // Gamma(2, 2) on [0, 30].
    let step = 1e-3;
    let values: Vec<f64> = (0..=30_000).map(|i| 4.0 * i as f64 * step * (-2.0 * i as f64 * step).exp()).collect();
    SamplingSpec::Tabulated(TabulatedDensity::from_grid(step, values).unwrap())
}

#[test]
fn exponential_spacing_mean() {
    let s = SamplingSpec::exponential(2.0).unwrap();
    let a = sample_arrivals(&s, SamplingMode::Count { n: 1_000_000 }, &mut rng(1)).unwrap();
    let (m, se) = mean_se(&spacings(&a.times));
    assert!((m - 0.5).abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn horizon_count_rate() {
    let s = SamplingSpec::exponential(1.0).unwrap();
    let a = sample_arrivals(&s, SamplingMode::Horizon { t: 1000.0 }, &mut rng(2)).unwrap();
    let rate = a.len() as f64 / 1000.0;
    assert!((rate - 1.0).abs() <= 0.1, "{rate}");
    assert!(*a.times.last().unwrap() <= 1000.0);
}

#[test]
fn horizon_shorter_than_first_arrival_is_empty() {
    let s = SamplingSpec::exponential(1e-6).unwrap();
    let a = sample_arrivals(&s, SamplingMode::Horizon { t: 1.0 }, &mut rng(3)).unwrap();
    assert!(a.is_empty());
}

#[test]
fn gamma_spacing_variance() {
    let s = SamplingSpec::gamma(2.0, 2.0).unwrap();
    let a = sample_arrivals(&s, SamplingMode::Count { n: 1_000_000 }, &mut rng(4)).unwrap();
    let (v, _) = var_se(&spacings(&a.times));
    assert!((v - 0.5).abs() <= 0.01 * 0.5, "{v}");
}

#[test]
fn spacing_moments_within_four_standard_errors() {
    for (i, s) in [SamplingSpec::exponential(0.5).unwrap(), SamplingSpec::gamma(3.0, 1.5).unwrap(), tabulated_gamma()]
        .iter()
        .enumerate()
    {
        let a = sample_arrivals(s, SamplingMode::Count { n: 1_000_000 }, &mut rng(10 + i as u64)).unwrap();
        let d = spacings(&a.times);
        assert!(d.iter().all(|&x| x > 0.0));
        let (m, mse) = mean_se(&d);
        let (v, vse) = var_se(&d);
        assert!((m - s.mean()).abs() < 4.0 * mse, "{s:?}: mean {m} ± {mse}");
        assert!((v - s.variance()).abs() < 4.0 * vse + 1e-6, "{s:?}: variance {v} ± {vse}");
    }
}

#[test]
fn convolution_examples() {
    let e1 = SamplingSpec::exponential(1.0).unwrap();
    assert_eq!(e1.convolution_density(1, 0.0).unwrap(), 1.0);
    let e2 = SamplingSpec::exponential(2.0).unwrap();
    assert_relative_eq!(e2.convolution_density(3, 1.0).unwrap(), 4.0 * (-2.0f64).exp(), max_relative = 1e-14);
    assert_relative_eq!(4.0 * (-2.0f64).exp(), 0.541_341_132_946_451, max_relative = 1e-12);
    assert!(e2.convolution_density(0, 1.0).is_err());
}

#[test]
fn erlang_closed_form() {
    for beta in [0.5, 1.0, 3.0] {
        let s = SamplingSpec::exponential(beta).unwrap();
        for k in [1, 2, 5, 20] {
            for t in [0.1, 1.0, 10.0] {
                let got = s.convolution_density(k, t).unwrap();
                let want = erlang_by_hand(k, beta, t);
                assert!((got - want).abs() <= 1e-12 * want, "β={beta}, k={k}, t={t}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn convolutions_integrate_to_one() {
    for s in [SamplingSpec::exponential(2.0).unwrap(), SamplingSpec::gamma(2.0, 2.0).unwrap(), tabulated_gamma()] {
        for k in [1, 2, 5] {
            let t_max = (k as f64 + 12.0 * (k as f64).sqrt() + 20.0) * s.mean();
            let mass = integrate_gl(0.0, t_max, 2000, 8, |t| s.convolution_density(k, t).unwrap());
            let tol = if matches!(s, SamplingSpec::Tabulated(_)) { 1e-5 } else { 1e-6 };
            assert!((mass - 1.0).abs() <= tol, "{s:?} k={k}: {mass}");
        }
    }
}

#[test]
fn exponential_renewal_density_is_beta() {
    let s = SamplingSpec::exponential(5.0).unwrap();
    for t in [0.0, 0.01, 1.0, 37.5] {
        assert_eq!(s.renewal_density(t).unwrap(), 5.0);
    }
}

#[test]
fn gamma_renewal_density_limits() {
    let s = SamplingSpec::gamma(2.0, 2.0).unwrap();
    assert!((s.renewal_density(20.0).unwrap() - 1.0).abs() <= 1e-3);
    assert_eq!(s.renewal_density(0.0).unwrap(), 0.0);
    // r(t) = 1 − e^{−4t} for Gamma(2, 2) inter-arrivals.
    for t in [0.1, 0.5, 2.0] {
        assert_abs_diff_eq!(s.renewal_density(t).unwrap(), 1.0 - (-4.0 * t as f64).exp(), epsilon = 1e-8);
    }
}

#[test]
fn tabulated_renewal_density_matches_closed_form() {
    let s = tabulated_gamma();
    for t in [0.1, 0.5, 2.0, 10.0] {
        assert_abs_diff_eq!(s.renewal_density(t).unwrap(), 1.0 - (-4.0 * t as f64).exp(), epsilon = 1e-4);
    }
}

#[test]
fn truncation_failure_is_reported() {
    let s = SamplingSpec::gamma(2.0, 2.0).unwrap();
    assert!(s.renewal_density_with(50.0, RenewalTruncation { tol: 1e-10, k_max: 5 }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn renewal_density_is_bounded_and_non_negative(shape in 1.0f64..6.0, rate in 0.2f64..5.0) {
        let s = SamplingSpec::gamma(shape, rate).unwrap();
        let beta = s.beta();
        for i in 0..200 {
            let t = i as f64 * 0.1 / beta;
            let r = s.renewal_density(t).unwrap();
            prop_assert!(r >= 0.0);
            prop_assert!(r.is_finite());
            prop_assert!(r <= 3.0 * beta * shape.max(1.0));
        }
    }
}
