//! Inter-arrival laws, convolution densities and renewal densities.

use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Error, Result};

/// Truncation of `r(t) = Σ_k f^{*k}(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalTruncation {
    /// Stop once past the mode of `f^{*k}` at `t` and the added term is below `tol·β`.
    pub tol: f64,
    pub k_max: usize,
}

impl Default for RenewalTruncation {
    fn default() -> Self {
        Self { tol: 1e-10, k_max: 500 }
    }
}

/// Inter-arrival law of the renewal sampling sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingSpec {
    Exponential {
        rate: f64,
    },
    /// `Gamma(shape, rate)`; `shape ≥ 1` keeps the density bounded.
    Gamma {
        shape: f64,
        rate: f64,
    },
    Tabulated(TabulatedDensity),
}

/// Observation design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingMode {
    Count { n: usize },
    Horizon { t: f64 },
}

/// Arrival times `τ_1 < τ_2 < …` (`τ_0 = 0` is not an observation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalTimes {
    pub times: Vec<f64>,
    pub mode: SamplingMode,
}

impl ArrivalTimes {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

impl SamplingSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        let s = SamplingSpec::Exponential { rate };
        s.validate()?;
        Ok(s)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let s = SamplingSpec::Gamma { shape, rate };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplingSpec::Exponential { rate } => {
                ensure(rate.is_finite() && *rate > 0.0, || format!("exponential rate must be positive, got {rate}"))
            }
            SamplingSpec::Gamma { shape, rate } => {
                ensure(shape.is_finite() && rate.is_finite() && *shape >= 1.0 && *rate > 0.0, || {
                    format!("gamma sampling needs shape ≥ 1 (bounded density) and rate > 0, got ({shape}, {rate})")
                })
            }
            SamplingSpec::Tabulated(t) => t.validate(),
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, SamplingSpec::Exponential { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            SamplingSpec::Exponential { rate } => 1.0 / rate,
            SamplingSpec::Gamma { shape, rate } => shape / rate,
            SamplingSpec::Tabulated(t) => t.raw_moment(1),
        }
    }

    /// `β = 1/E[ν]`.
    pub fn beta(&self) -> f64 {
        1.0 / self.mean()
    }

    pub fn variance(&self) -> f64 {
        match self {
            SamplingSpec::Exponential { rate } => 1.0 / (rate * rate),
            SamplingSpec::Gamma { shape, rate } => shape / (rate * rate),
            SamplingSpec::Tabulated(t) => t.raw_moment(2) - t.raw_moment(1).powi(2),
        }
    }

    /// `E[ν⁴]`.
    pub fn fourth_moment(&self) -> f64 {
        match self {
            SamplingSpec::Exponential { rate } => 24.0 / rate.powi(4),
            SamplingSpec::Gamma { shape: k, rate } => k * (k + 1.0) * (k + 2.0) * (k + 3.0) / rate.powi(4),
            SamplingSpec::Tabulated(t) => t.raw_moment(4),
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            SamplingSpec::Tabulated(tab) => tab.value_at(t),
            _ => self.closed_form_convolution(1, t),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SamplingSpec::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            SamplingSpec::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate).expect("validated").sample(rng),
            SamplingSpec::Tabulated(t) => t.inverse_cdf(rng.random::<f64>()),
        }
    }

    fn closed_form_convolution(&self, k: usize, t: f64) -> f64 {
        let (shape, rate) = match *self {
            SamplingSpec::Exponential { rate } => (k as f64, rate),
            SamplingSpec::Gamma { shape, rate } => (k as f64 * shape, rate),
            SamplingSpec::Tabulated(_) => unreachable!(),
        };
        gamma_pdf(shape, rate, t)
    }

    /// `f^{*k}(t)`.
    pub fn convolution_density(&self, k: usize, t: f64) -> Result<f64> {
        ensure(k >= 1, || "convolution order k must be at least 1".into())?;
        if t < 0.0 {
            return Ok(0.0);
        }
        match self {
            SamplingSpec::Tabulated(tab) => tab.convolution_at(k, t),
            _ => Ok(self.closed_form_convolution(k, t)),
        }
    }

    /// `r(t) = Σ_{k≥1} f^{*k}(t)` with the default truncation.
    pub fn renewal_density(&self, t: f64) -> Result<f64> {
        self.renewal_density_with(t, RenewalTruncation::default())
    }

    pub fn renewal_density_with(&self, t: f64, trunc: RenewalTruncation) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        match self {
            SamplingSpec::Exponential { rate } => Ok(*rate),
            SamplingSpec::Gamma { shape, rate } => {
                let ln_g = LnGammaCache::new(*shape);
                gamma_renewal(*shape, *rate, t, trunc, &ln_g)
            }
            SamplingSpec::Tabulated(tab) => tab.renewal_at(t, trunc),
        }
    }

    /// `r` on the grid `{i·dh : 0 ≤ i ≤ n}`.
    pub fn renewal_on_grid(&self, dh: f64, n: usize, trunc: RenewalTruncation) -> Result<Vec<f64>> {
        match self {
            SamplingSpec::Exponential { rate } => Ok(vec![*rate; n + 1]),
            SamplingSpec::Gamma { shape, rate } => {
                let ln_g = LnGammaCache::new(*shape);
                (0..=n).map(|i| gamma_renewal(*shape, *rate, i as f64 * dh, trunc, &ln_g)).collect()
            }
            SamplingSpec::Tabulated(tab) => (0..=n).map(|i| tab.renewal_at(i as f64 * dh, trunc)).collect(),
        }
    }

    /// `Σ_{k=1}^{n_terms} f^{*k}` on the grid `{i·dh : 0 ≤ i ≤ n}`.
    pub fn partial_renewal_on_grid(&self, dh: f64, n: usize, n_terms: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n + 1];
        for k in 1..=n_terms {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.convolution_density(k, i as f64 * dh)?;
            }
        }
        Ok(out)
    }
}

/// Density of `Gamma(shape, rate)` evaluated in log space.
pub fn gamma_pdf(shape: f64, rate: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    if t == 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            rate
        } else {
            0.0
        };
    }
    (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)).exp()
}

struct LnGammaCache {
    shape: f64,
    values: Mutex<Vec<f64>>,
}

impl LnGammaCache {
    fn new(shape: f64) -> Self {
        Self { shape, values: Mutex::new(Vec::new()) }
    }

    fn get(&self, k: usize) -> f64 {
        let mut v = self.values.lock().expect("cache lock");
        while v.len() < k {
            let j = v.len() + 1;
            v.push(ln_gamma(j as f64 * self.shape));
        }
        v[k - 1]
    }
}

fn gamma_renewal(shape: f64, rate: f64, t: f64, trunc: RenewalTruncation, ln_g: &LnGammaCache) -> Result<f64> {
    let beta = rate / shape;
    if t == 0.0 {
        // f^{*k}(0) = 0 for k·shape > 1
        return Ok(if shape == 1.0 { rate } else { 0.0 });
    }
    let (lr, lt) = (rate.ln(), t.ln());
    let mut sum = 0.0;
    let mut last = 0.0;
    for k in 1..=trunc.k_max {
        let a = k as f64 * shape;
        last = (a * lr + (a - 1.0) * lt - rate * t - ln_g.get(k)).exp();
        sum += last;
        if (k as f64) / beta > t && last < trunc.tol * beta {
            return Ok(sum);
        }
    }
    Err(Error::RenewalTruncation { t, k_max: trunc.k_max, last_term: last })
}

/// Arrival times from i.i.d. inter-arrivals.
///
/// In horizon mode all `τ_k ≤ T` are returned, possibly none.
pub fn sample_arrivals<R: Rng + ?Sized>(spec: &SamplingSpec, mode: SamplingMode, rng: &mut R) -> Result<ArrivalTimes> {
    spec.validate()?;
    let mut times = Vec::new();
    let mut t = 0.0;
    match mode {
        SamplingMode::Count { n } => {
            ensure(n >= 1, || "count mode needs n ≥ 1".into())?;
            times.reserve(n);
            while times.len() < n {
                let dt = spec.sample(rng);
                if dt > 0.0 {
                    t += dt;
                    times.push(t);
                }
            }
        }
        SamplingMode::Horizon { t: horizon } => {
            ensure(horizon.is_finite() && horizon > 0.0, || format!("horizon must be positive, got {horizon}"))?;
            loop {
                let dt = spec.sample(rng);
                if dt <= 0.0 {
                    continue;
                }
                t += dt;
                if t > horizon {
                    break;
                }
                times.push(t);
            }
        }
    }
    Ok(ArrivalTimes { times, mode })
}

/// Inter-arrival density given on a uniform grid `t_i = i·step`, `0 ≤ i < len`.
///
/// The density is linear between nodes and zero beyond the last node. The
/// caller is responsible for continuity; only non-negativity and finiteness are
/// checked.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TabulatedRepr", into = "TabulatedRepr")]
pub struct TabulatedDensity {
    step: f64,
    values: Vec<f64>,
    cdf: Vec<f64>,
    folds: Arc<Mutex<Vec<Arc<Vec<f64>>>>>,
    renewal: Arc<OnceLock<std::result::Result<Vec<f64>, String>>>,
}

#[derive(Serialize, Deserialize)]
struct TabulatedRepr {
    step: f64,
    values: Vec<f64>,
}

impl TryFrom<TabulatedRepr> for TabulatedDensity {
    type Error = Error;
    fn try_from(r: TabulatedRepr) -> Result<Self> {
        TabulatedDensity::from_grid(r.step, r.values)
    }
}

impl From<TabulatedDensity> for TabulatedRepr {
    fn from(t: TabulatedDensity) -> Self {
        TabulatedRepr { step: t.step, values: t.values }
    }
}

impl PartialEq for TabulatedDensity {
    fn eq(&self, other: &Self) -> bool {
        self.step == other.step && self.values == other.values
    }
}

pub const DEFAULT_TAB_STEP: f64 = 1e-3;
pub const DEFAULT_TAB_TMAX: f64 = 50.0;

impl TabulatedDensity {
    /// Normalizes `values` by the trapezoidal rule.
    pub fn from_grid(step: f64, mut values: Vec<f64>) -> Result<Self> {
        ensure(step.is_finite() && step > 0.0, || format!("grid step must be positive, got {step}"))?;
        ensure(values.len() >= 3, || "tabulated density needs at least 3 nodes".into())?;
        ensure(values.iter().all(|v| v.is_finite() && *v >= 0.0), || {
            "tabulated density must be finite and non-negative".into()
        })?;
        let mass = trapezoid(&values, step);
        ensure(mass > 0.0, || "tabulated density has zero mass".into())?;
        for v in &mut values {
            *v /= mass;
        }
        let mut cdf = Vec::with_capacity(values.len());
        let mut c = 0.0;
        cdf.push(0.0);
        for w in values.windows(2) {
            c += 0.5 * step * (w[0] + w[1]);
            cdf.push(c);
        }
        Ok(Self { step, values, cdf, folds: Arc::new(Mutex::new(Vec::new())), renewal: Arc::new(OnceLock::new()) })
    }

    /// Resamples scattered `(t, f)` pairs onto the uniform grid by linear interpolation.
    pub fn from_points(points: &[(f64, f64)], step: f64, t_max: f64) -> Result<Self> {
        ensure(points.len() >= 2, || "need at least two (t, f) points".into())?;
        ensure(points.windows(2).all(|w| w[1].0 > w[0].0), || "t column must be strictly increasing".into())?;
        ensure(points[0].0 >= 0.0, || "t column must be non-negative".into())?;
        ensure(t_max > 0.0, || "t_max must be positive".into())?;
        let n = (t_max / step).round() as usize + 1;
        let mut j = 0;
        let values = (0..n)
            .map(|i| {
                let t = i as f64 * step;
                if t < points[0].0 || t > points[points.len() - 1].0 {
                    return 0.0;
                }
                while j + 1 < points.len() - 1 && points[j + 1].0 < t {
                    j += 1;
                }
                let (t0, f0) = points[j];
                let (t1, f1) = points[j + 1];
                f0 + (f1 - f0) * (t - t0) / (t1 - t0)
            })
            .collect();
        Self::from_grid(step, values)
    }

    /// Reads a headerless or headed two-column CSV `(t, f(t))`.
    pub fn from_csv(path: &Path, step: f64, t_max: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let mut pts = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Parse(format!("line {}: expected two columns", line + 1)));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(t), Ok(f)) => pts.push((t, f)),
                _ if line == 0 => continue,
                _ => return Err(Error::Parse(format!("line {}: non-numeric entry", line + 1))),
            }
        }
        Self::from_points(&pts, step, t_max)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    fn validate(&self) -> Result<()> {
        ensure(self.values.len() >= 3 && self.step > 0.0, || "empty tabulated density".into())
    }

    fn value_at(&self, t: f64) -> f64 {
        interp(&self.values, self.step, t)
    }

    fn raw_moment(&self, k: i32) -> f64 {
        let w: Vec<f64> = self.values.iter().enumerate().map(|(i, v)| v * (i as f64 * self.step).powi(k)).collect();
        trapezoid(&w, self.step)
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        let total = *self.cdf.last().unwrap();
        let target = u * total;
        let i = self.cdf.partition_point(|c| *c < target).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.5 };
        (i as f64 - 1.0 + frac) * self.step
    }

    fn fold(&self, k: usize) -> Arc<Vec<f64>> {
        let mut folds = self.folds.lock().expect("fold cache lock");
        if folds.is_empty() {
            folds.push(Arc::new(self.values.clone()));
        }
        while folds.len() < k {
            let next = convolve(&folds[folds.len() - 1], &self.values, self.step);
            folds.push(Arc::new(next));
        }
        folds[k - 1].clone()
    }

    /// `f^{*k}(t)`; zero beyond the grid.
    fn convolution_at(&self, k: usize, t: f64) -> Result<f64> {
        Ok(interp(&self.fold(k), self.step, t))
    }

    /// Renewal density on the grid by accumulating folds until the newest one
    /// is uniformly negligible. Beyond the grid, `r` is replaced by its limit `β`.
    fn renewal_at(&self, t: f64, trunc: RenewalTruncation) -> Result<f64> {
        if t > self.t_max() {
            return Ok(1.0 / self.raw_moment(1));
        }
        let table = self.renewal.get_or_init(|| {
            let beta = 1.0 / self.raw_moment(1);
            let mut sum = vec![0.0; self.values.len()];
            let mut cur = self.values.clone();
            for k in 1..=trunc.k_max {
                for (s, c) in sum.iter_mut().zip(&cur) {
                    *s += c;
                }
                let sup = cur.iter().cloned().fold(0.0, f64::max);
                if sup < trunc.tol * beta {
                    return Ok(sum);
                }
                if k < trunc.k_max {
                    cur = convolve(&cur, &self.values, self.step);
                }
            }
            Err(format!("{}", cur.iter().cloned().fold(0.0, f64::max)))
        });
        match table {
            Ok(v) => Ok(interp(v, self.step, t)),
            Err(last) => {
                Err(Error::RenewalTruncation { t, k_max: trunc.k_max, last_term: last.parse().unwrap_or(f64::NAN) })
            }
        }
    }
}

fn interp(values: &[f64], step: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let x = t / step;
    let i = x.floor() as usize;
    if i + 1 >= values.len() {
        return if i + 1 == values.len() && (x - i as f64) == 0.0 { values[i] } else { 0.0 };
    }
    let frac = x - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Trapezoidal `∫_0^t a(s) b(t−s) ds` on the grid, via zero-padded FFT.
fn convolve(a: &[f64], b: &[f64], step: f64) -> Vec<f64> {
    let n = a.len();
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut fa: Vec<Complex<f64>> =
        a.iter().map(|&x| Complex::new(x, 0.0)).chain(std::iter::repeat(Complex::new(0.0, 0.0))).take(len).collect();
    let mut fb: Vec<Complex<f64>> =
        b.iter().map(|&x| Complex::new(x, 0.0)).chain(std::iter::repeat(Complex::new(0.0, 0.0))).take(len).collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = step / len as f64;
    (0..n)
        .map(|j| {
            let full = fa[j].re * scale;
            let v = full - 0.5 * step * (a[0] * b[j] + a[j] * b[0]);
            v.max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn erlang_values() {
        let e1 = SamplingSpec::exponential(1.0).unwrap();
        assert_eq!(e1.convolution_density(1, 0.0).unwrap(), 1.0);
        let e2 = SamplingSpec::exponential(2.0).unwrap();
        assert_abs_diff_eq!(e2.convolution_density(3, 1.0).unwrap(), 4.0 * (-2.0f64).exp(), epsilon = 1e-14);
        assert!(e2.convolution_density(0, 1.0).is_err());
    }

    #[test]
    fn renewal_exponential_is_constant() {
        let s = SamplingSpec::exponential(5.0).unwrap();
        for t in [0.0, 0.3, 7.0, 100.0] {
            assert_eq!(s.renewal_density(t).unwrap(), 5.0);
        }
    }

    #[test]
    fn renewal_gamma_limits() {
        let s = SamplingSpec::gamma(2.0, 2.0).unwrap();
        assert_eq!(s.renewal_density(0.0).unwrap(), 0.0);
        assert!((s.renewal_density(20.0).unwrap() - 1.0).abs() <= 1e-3);
        // Gamma(2, λ) renewal density is (λ/2)(1 − e^{−2λt})
        for t in [0.1, 0.5, 1.0, 3.0] {
            let want = 1.0 - (-4.0 * t as f64).exp();
            assert_abs_diff_eq!(s.renewal_density(t).unwrap(), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn renewal_truncation_error() {
        let s = SamplingSpec::gamma(2.0, 2.0).unwrap();
        let r = s.renewal_density_with(50.0, RenewalTruncation { tol: 1e-10, k_max: 5 });
        assert!(matches!(r, Err(Error::RenewalTruncation { k_max: 5, .. })));
    }

    #[test]
    fn gamma_sampling_rejects_unbounded_density() {
        assert!(SamplingSpec::gamma(0.5, 1.0).is_err());
        assert!(SamplingSpec::exponential(0.0).is_err());
    }

    #[test]
    fn tabulated_exponential_matches_erlang() {
        let step = 1e-3;
        let vals: Vec<f64> = (0..=30_000).map(|i| (-(i as f64) * step).exp()).collect();
        let tab = SamplingSpec::Tabulated(TabulatedDensity::from_grid(step, vals).unwrap());
        assert_abs_diff_eq!(tab.mean(), 1.0, epsilon = 1e-5);
        for (k, t) in [(1, 0.5), (2, 1.0), (3, 2.0), (5, 4.0)] {
            let exact = gamma_pdf(k as f64, 1.0, t);
            assert_abs_diff_eq!(tab.convolution_density(k, t).unwrap(), exact, epsilon = 1e-5);
        }
        assert_abs_diff_eq!(tab.renewal_density(3.0).unwrap(), 1.0, epsilon = 1e-4);
    }
}
