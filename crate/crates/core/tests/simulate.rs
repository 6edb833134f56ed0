mod common;

use approx::assert_abs_diff_eq;
use carma_renewal::model::matrix_exp;
use carma_renewal::series::Provenance;
use carma_renewal::simulate::{
    default_t_end, integrate_with_increments, sample_at_times, simulate_path, simulate_sampled, simulate_series,
    InitPolicy,
};
use carma_renewal::{ArrivalTimes, Error, NoiseSpec, SampledSeries, SamplingMode, SamplingSpec};
use common::{carma, mean_se, ou, rng};
use rand_distr::{Distribution, StandardNormal};

#[test]
fn ou_path_variance() {
    // One path of length 100 has a sample variance with about 14% relative
    // error, so the check pools 200 independent paths.
    let m = ou(1.0, 1.0);
    let noise = NoiseSpec::brownian(1.0).unwrap();
    let mut r = rng(1);
    let vars: Vec<f64> = (0..200)
        .map(|_| {
            let p = simulate_path(&m, &noise, 1e-3, 100.0, InitPolicy::StationaryGaussian, &mut r).unwrap();
            let y = p.observations(&m);
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    let (v, se) = mean_se(&vars);
    assert!((v - 0.5).abs() <= 0.05 * 0.5, "{v} ± {se}");
}

#[test]
fn zero_noise_follows_matrix_exponential() {
    let m = carma(&[3.0, 2.0], &[0.5]);
    let h = 1e-3;
    let x0 = [1.0, -0.5];
    let path = integrate_with_increments(&m, &x0, h, &vec![0.0; 3000]).unwrap();
    for j in [1000usize, 2000, 3000] {
        let e = matrix_exp(m.a_matrix(), j as f64 * h);
        let exact = [e[(0, 0)] * x0[0] + e[(0, 1)] * x0[1], e[(1, 0)] * x0[0] + e[(1, 1)] * x0[1]];
        let got = path.node(j);
        let norm = exact[0].hypot(exact[1]);
        let err = (got[0] - exact[0]).hypot(got[1] - exact[1]);
        assert!(err <= 10.0 * h * norm, "t = {}: {err}", j as f64 * h);
    }
}

/// Exact OU transition `X ← e^{−θh}X + ε`, `Var ε = (1−e^{−2θh})/(2θ)`.
#[test]
fn euler_variance_matches_exact_transition() {
    let theta = 1.0;
    let h = 1e-2;
    let m = ou(theta, 1.0);
    let noise = NoiseSpec::brownian(1.0).unwrap();
    let mut r = rng(2);
    let rho = (-theta * h).exp();
    let sd = ((1.0 - rho * rho) / (2.0 * theta)).sqrt();
    let (mut euler, mut exact) = (Vec::new(), Vec::new());
    for _ in 0..400 {
        let p = simulate_path(&m, &noise, h, 50.0, InitPolicy::StationaryGaussian, &mut r).unwrap();
        let y = p.observations(&m);
        euler.push(y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64);
        let mut x: f64 = StandardNormal.sample(&mut r);
        x *= (0.5f64).sqrt();
        let mut acc = 0.0;
        for _ in 0..y.len() {
            acc += x * x;
            let z: f64 = StandardNormal.sample(&mut r);
            x = rho * x + sd * z;
        }
        exact.push(acc / y.len() as f64);
    }
    let (a, sa) = mean_se(&euler);
    let (b, sb) = mean_se(&exact);
    assert!((a - b).abs() < 4.0 * sa.hypot(sb), "Euler {a} ± {sa}, exact {b} ± {sb}");
}

/// RMS gap between Euler at step `h` and the exact OU solution built from the
/// same fine Brownian increments.
fn strong_error(h: f64, reps: usize, seed: u64) -> f64 {
    let theta = 1.0;
    let t_end = 5.0;
    let coarse = 0.01;
    let fine_per_coarse = 256;
    let hf = coarse / fine_per_coarse as f64;
    let m = ou(theta, 1.0);
    let ratio = (h / hf).round() as usize;
    let mut r = rng(seed);
    let mut sq = 0.0;
    let mut count = 0;
    for _ in 0..reps {
        let n_fine = (t_end / hf).round() as usize;
        let dw: Vec<f64> = (0..n_fine)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                hf.sqrt() * z
            })
            .collect();
        let x0 = 0.3;
        let incs: Vec<f64> = dw.chunks(ratio).map(|c| c.iter().sum()).collect();
        let path = integrate_with_increments(&m, &[x0], h, &incs).unwrap();
        // ∫ e^{−θ(t−s)} dW(s) on the fine grid with midpoint weights.
        let decay = (-theta * hf).exp();
        let half = (-theta * hf / 2.0).exp();
        let mut x = x0;
        for (i, d) in dw.iter().enumerate() {
            x = decay * x + half * d;
            if (i + 1) % (coarse / hf).round() as usize == 0 {
                let j = (i + 1) / ratio;
                sq += (path.node(j)[0] - x).powi(2);
                count += 1;
            }
        }
    }
    (sq / count as f64).sqrt()
}

#[test]
fn strong_error_halves_with_the_step() {
    let e1 = strong_error(0.01, 40, 3);
    let e2 = strong_error(0.005, 40, 3);
    let factor = e1 / e2;
    assert!((1.5..=3.0).contains(&factor), "errors {e1:e}, {e2:e}, factor {factor}");
}

#[test]
fn interpolation_at_nodes_and_midpoints() {
    let m = carma(&[3.0, 2.0], &[0.5]);
    let incs: Vec<f64> = (0..10).map(|i| 0.1 * (i as f64).sin()).collect();
    let path = integrate_with_increments(&m, &[0.2, -0.1], 0.5, &incs).unwrap();
    let proj = |j: usize| 0.5 * path.node(j)[0] + path.node(j)[1];
    let arr = ArrivalTimes { times: vec![1.0, 1.25, 3.0], mode: SamplingMode::Count { n: 3 } };
    let s = sample_at_times(&path, &arr, &m).unwrap();
    assert_eq!(s.values[0], proj(2));
    assert_abs_diff_eq!(s.values[1], 0.5 * (proj(2) + proj(3)), epsilon = 1e-15);
    assert_eq!(s.values[2], proj(6));
}

#[test]
fn arrival_beyond_horizon_is_named() {
    let m = ou(1.0, 1.0);
    let path = integrate_with_increments(&m, &[0.0], 0.1, &[0.0; 10]).unwrap();
    let arr = ArrivalTimes { times: vec![0.5, 0.9, 1.7], mode: SamplingMode::Count { n: 3 } };
    match sample_at_times(&path, &arr, &m) {
        Err(Error::ArrivalBeyondHorizon { index, .. }) => assert_eq!(index, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn lag_one_autocovariance_of_sampled_ou() {
    // E[γ_Y(ν)] = σ²/(2θ)·β/(β+θ) = 0.25 at θ = β = 1.
    let m = ou(1.0, 1.0);
    let noise = NoiseSpec::brownian(1.0).unwrap();
    let s = SamplingSpec::exponential(1.0).unwrap();
    let mut r = rng(4);
    let lag1: Vec<f64> = (0..200)
        .map(|_| {
            let x = simulate_series(
                &m,
                &noise,
                &s,
                SamplingMode::Count { n: 1000 },
                1e-3,
                InitPolicy::StationaryGaussian,
                &mut r,
            )
            .unwrap();
            x.values.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (x.len() - 1) as f64
        })
        .collect();
    let (v, se) = mean_se(&lag1);
    assert!((v - 0.25).abs() < 4.0 * se, "{v} ± {se}");
}

#[test]
fn long_paths_have_zero_mean() {
    let m = ou(1.0, 1.0);
    for (i, noise) in [NoiseSpec::brownian(1.0).unwrap(), NoiseSpec::gamma(0.2, 0.3).unwrap()].iter().enumerate() {
        let mut r = rng(5 + i as u64);
        let init = InitPolicy::default_for(&m, noise);
        let means: Vec<f64> = (0..100)
            .map(|_| {
                let p = simulate_path(&m, noise, 1e-2, 200.0, init, &mut r).unwrap();
                let y = p.observations(&m);
                y.iter().sum::<f64>() / y.len() as f64
            })
            .collect();
        let (mu, se) = mean_se(&means);
        assert!(mu.abs() < 4.0 * se, "{noise:?}: {mu} ± {se}");
    }
}

#[test]
fn streaming_sampler_matches_stored_path() {
    let m = carma(&[3.0, 2.0], &[0.5]);
    let noise = NoiseSpec::gamma(0.2, 0.3).unwrap();
    let s = SamplingSpec::exponential(2.0).unwrap();
    let arr = carma_renewal::sampling::sample_arrivals(&s, SamplingMode::Count { n: 300 }, &mut rng(6)).unwrap();
    let init = InitPolicy::BurnIn { duration: 5.0 };
    let h = 1e-3;
    let path = simulate_path(&m, &noise, h, default_t_end(&arr, h), init, &mut rng(7)).unwrap();
    let a = sample_at_times(&path, &arr, &m).unwrap();
    let b = simulate_sampled(&m, &noise, &arr, h, init, &mut rng(7)).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn provenance_round_trips_bit_exactly() {
    let m = carma(&[3.0, 2.0], &[0.5]);
    let noise = NoiseSpec::brownian(1.3).unwrap();
    let sampling = SamplingSpec::gamma(2.0, 3.0).unwrap();
    let mut s = simulate_series(
        &m,
        &noise,
        &sampling,
        SamplingMode::Count { n: 500 },
        1e-3,
        InitPolicy::StationaryGaussian,
        &mut rng(8),
    )
    .unwrap();
    s.provenance = Some(Provenance {
        params: m.params().clone(),
        noise,
        sampling,
        seed: 8,
        stream: 0,
        h: 1e-3,
        init: InitPolicy::StationaryGaussian,
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    s.write_csv(&path).unwrap();
    let back = SampledSeries::read_csv(&path).unwrap();
    assert_eq!(back, s);
    assert!(back.times.iter().zip(&s.times).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(back.values.iter().zip(&s.values).all(|(a, b)| a.to_bits() == b.to_bits()));
}
