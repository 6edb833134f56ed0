//! Centered Lévy drivers.
//!
//! Every increment is centered individually by subtracting its exact mean, so
//! the driving process has `E[L(t)] = 0` for all `t`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Jump-size law of a compound Poisson driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpLaw {
    /// `±size` with probability 1/2 each.
    TwoPoint {
        size: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
}

impl JumpLaw {
    /// Raw moments `E[J], E[J²], E[J³], E[J⁴]`.
    pub fn raw_moments(&self) -> [f64; 4] {
        match *self {
            JumpLaw::TwoPoint { size } => {
                let s2 = size * size;
                [0.0, s2, 0.0, s2 * s2]
            }
            JumpLaw::Normal { mean: m, sd } => {
                let v = sd * sd;
                [m, m * m + v, m * m * m + 3.0 * m * v, m.powi(4) + 6.0 * m * m * v + 3.0 * v * v]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::TwoPoint { size } => {
                ensure(size.is_finite() && size > 0.0, || format!("two-point jump size must be positive, got {size}"))
            }
            JumpLaw::Normal { mean, sd } => ensure(mean.is_finite() && sd.is_finite() && sd >= 0.0, || {
                format!("normal jump law needs finite mean and sd ≥ 0, got ({mean}, {sd})")
            }),
        }
    }
}

/// Law of the driving Lévy process `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Brownian {
        variance: f64,
    },
    /// Gamma process with `L(1) ~ Gamma(shape, rate)`, centered.
    Gamma {
        shape: f64,
        rate: f64,
    },
    CompoundPoisson {
        rate: f64,
        jumps: JumpLaw,
    },
}

/// Moments of the centered `L(1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseMoments {
    pub mean: f64,
    pub variance: f64,
    pub fourth_moment: f64,
    pub fourth_cumulant: f64,
}

impl NoiseSpec {
    pub fn brownian(variance: f64) -> Result<Self> {
        let s = NoiseSpec::Brownian { variance };
        s.validate()?;
        Ok(s)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let s = NoiseSpec::Gamma { shape, rate };
        s.validate()?;
        Ok(s)
    }

    pub fn compound_poisson(rate: f64, jumps: JumpLaw) -> Result<Self> {
        let s = NoiseSpec::CompoundPoisson { rate, jumps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::Brownian { variance } => ensure(variance.is_finite() && *variance > 0.0, || {
                format!("Brownian variance must be positive, got {variance}")
            }),
            NoiseSpec::Gamma { shape, rate } => {
                ensure(shape.is_finite() && rate.is_finite() && *shape > 0.0 && *rate > 0.0, || {
                    format!("gamma shape and rate must be positive, got ({shape}, {rate})")
                })
            }
            NoiseSpec::CompoundPoisson { rate, jumps } => {
                ensure(rate.is_finite() && *rate > 0.0, || {
                    format!("compound Poisson rate must be positive, got {rate}")
                })?;
                jumps.validate()?;
                ensure(jumps.raw_moments()[1] > 0.0, || "jump law must have positive second moment".into())
            }
        }
    }

    pub fn moments(&self) -> NoiseMoments {
        let (variance, fourth_cumulant) = match *self {
            NoiseSpec::Brownian { variance } => (variance, 0.0),
            NoiseSpec::Gamma { shape, rate } => (shape / (rate * rate), 6.0 * shape / rate.powi(4)),
            NoiseSpec::CompoundPoisson { rate, ref jumps } => {
                let m = jumps.raw_moments();
                (rate * m[1], rate * m[3])
            }
        };
        NoiseMoments {
            mean: 0.0,
            variance,
            fourth_moment: fourth_cumulant + 3.0 * variance * variance,
            fourth_cumulant,
        }
    }

    pub fn variance(&self) -> f64 {
        self.moments().variance
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseSpec::Brownian { .. })
    }
}

/// Moments of `L(1)`; see [`NoiseSpec::moments`].
pub fn noise_moments(spec: &NoiseSpec) -> Result<NoiseMoments> {
    spec.validate()?;
    Ok(spec.moments())
}

/// Draws centered increments `L(t+h) − L(t)` for a fixed step `h`.
#[derive(Clone, Debug)]
pub struct IncrementSampler {
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Brownian { sd: f64 },
    Gamma { dist: Gamma<f64>, mean: f64 },
    CompoundPoisson { count: Option<Poisson<f64>>, jumps: JumpSampler, mean: f64 },
}

#[derive(Clone, Debug)]
enum JumpSampler {
    TwoPoint(f64),
    Normal(Normal<f64>),
}

impl IncrementSampler {
    pub fn new(spec: &NoiseSpec, h: f64) -> Result<Self> {
        spec.validate()?;
        ensure(h.is_finite() && h > 0.0, || format!("step h must be positive, got {h}"))?;
        let kind = match *spec {
            NoiseSpec::Brownian { variance } => SamplerKind::Brownian { sd: (variance * h).sqrt() },
            NoiseSpec::Gamma { shape, rate } => SamplerKind::Gamma {
                dist: Gamma::new(shape * h, 1.0 / rate)
                    .map_err(|e| Error::InvalidParameter(format!("gamma increment law: {e}")))?,
                mean: shape * h / rate,
            },
            NoiseSpec::CompoundPoisson { rate, ref jumps } => {
                let lam = rate * h;
                let count = if lam > 0.0 {
                    Some(Poisson::new(lam).map_err(|e| Error::InvalidParameter(format!("Poisson law: {e}")))?)
                } else {
                    None
                };
                let js = match *jumps {
                    JumpLaw::TwoPoint { size } => JumpSampler::TwoPoint(size),
                    JumpLaw::Normal { mean, sd } => JumpSampler::Normal(
                        Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(format!("jump law: {e}")))?,
                    ),
                };
                SamplerKind::CompoundPoisson { count, jumps: js, mean: lam * jumps.raw_moments()[0] }
            }
        };
        Ok(Self { kind })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Brownian { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            SamplerKind::Gamma { dist, mean } => dist.sample(rng) - mean,
            SamplerKind::CompoundPoisson { count, jumps, mean } => {
                let n = count.as_ref().map_or(0.0, |c| c.sample(rng)) as u64;
                let mut s = 0.0;
                for _ in 0..n {
                    s += match jumps {
                        JumpSampler::TwoPoint(size) => {
                            if rng.random::<bool>() {
                                *size
                            } else {
                                -*size
                            }
                        }
                        JumpSampler::Normal(d) => d.sample(rng),
                    };
                }
                s - mean
            }
        }
    }
}

/// `n_steps` i.i.d. centered increments over steps of length `h`.
pub fn sample_increments<R: Rng + ?Sized>(spec: &NoiseSpec, h: f64, n_steps: usize, rng: &mut R) -> Result<Vec<f64>> {
    ensure(n_steps >= 1, || "n_steps must be at least 1".into())?;
    let s = IncrementSampler::new(spec, h)?;
    Ok((0..n_steps).map(|_| s.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn brownian_moments() {
        let m = noise_moments(&NoiseSpec::brownian(1.0).unwrap()).unwrap();
        assert_eq!((m.mean, m.variance, m.fourth_moment, m.fourth_cumulant), (0.0, 1.0, 3.0, 0.0));
    }

    #[test]
    fn gamma_moments() {
        let (a, b) = (0.2_f64, 0.3_f64);
        let m = NoiseSpec::gamma(a, b).unwrap().moments();
        assert_abs_diff_eq!(m.variance, 2.222_222_222_222, epsilon = 1e-9);
        assert_abs_diff_eq!(m.fourth_cumulant, 148.148_148_148, epsilon = 1e-6);
        // central fourth moment of Gamma(a, b)
        assert_abs_diff_eq!(m.fourth_moment, 3.0 * a * (a + 2.0) / b.powi(4), epsilon = 1e-9);
    }

    #[test]
    fn compound_poisson_moments() {
        let m = NoiseSpec::compound_poisson(2.0, JumpLaw::TwoPoint { size: 1.0 }).unwrap().moments();
        assert_eq!(m.variance, 2.0);
        assert_eq!(m.fourth_cumulant, 2.0);
        assert_eq!(m.fourth_moment, 14.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSpec::gamma(0.0, 1.0).is_err());
        assert!(NoiseSpec::gamma(1.0, -1.0).is_err());
        assert!(NoiseSpec::brownian(0.0).is_err());
        assert!(NoiseSpec::compound_poisson(0.0, JumpLaw::TwoPoint { size: 1.0 }).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_increments(&NoiseSpec::Brownian { variance: 1.0 }, 0.0, 5, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        for spec in [
            NoiseSpec::Brownian { variance: 1.0 },
            NoiseSpec::Gamma { shape: 0.2, rate: 0.3 },
            NoiseSpec::CompoundPoisson { rate: 2.0, jumps: JumpLaw::Normal { mean: 0.5, sd: 1.0 } },
        ] {
            let a = sample_increments(&spec, 1e-2, 1000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = sample_increments(&spec, 1e-2, 1000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b);
        }
    }
}
