#![allow(dead_code)]

use carma_renewal::{CarmaModel, CarmaParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn ou(theta: f64, sigma_l2: f64) -> CarmaModel {
    CarmaModel::new(CarmaParams::ou(theta, sigma_l2).unwrap()).unwrap()
}

pub fn carma(a: &[f64], b: &[f64]) -> CarmaModel {
    CarmaModel::new(CarmaParams::new(a.to_vec(), b.to_vec(), 1.0).unwrap()).unwrap()
}

/// OU, CARMA(2,0), CARMA(2,1) and CARMA(3,1), all with `σ_L² = 1`.
pub fn fixtures() -> Vec<(&'static str, CarmaModel)> {
    vec![
        ("ou", ou(1.0, 1.0)),
        ("carma20", carma(&[3.0, 2.0], &[])),
        ("carma21", carma(&[3.0, 2.0], &[0.5])),
        ("carma31", carma(&[6.0, 11.0, 6.0], &[0.5])),
    ]
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Sample variance and a delta-method standard error from the fourth central moment.
pub fn var_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    (v, ((m4 - v * v) / n).sqrt())
}
