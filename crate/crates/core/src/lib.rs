//! Lévy-driven CARMA(p,q) processes observed at renewal times.
//!
//! The crate is organised bottom-up:
//!
//! - [`noise`]: centered Lévy increments and the moments of `L(1)`.
//! - [`model`]: validated CARMA parameters, companion matrix, `Σ`, `γ_Y`, `φ_Y`.
//! - [`sampling`]: inter-arrival laws, convolution densities and the renewal density.
//! - [`simulate`]: Euler paths of the state process and the sampled series.
//! - [`whittle`]: `φ_Z`, the rescaled density `g`, the periodogram and the estimator.
//! - [`asymptotics`]: weight functions, `W`, `Q` and the sandwich covariance.

pub mod asymptotics;
pub mod error;
pub mod model;
pub mod noise;
pub mod quadrature;
pub mod sampling;
pub mod series;
pub mod simulate;
pub mod whittle;

pub use error::{Error, Result};
pub use model::{CarmaModel, CarmaParams, ParamBox};
pub use noise::{JumpLaw, NoiseMoments, NoiseSpec};
pub use sampling::{ArrivalTimes, SamplingMode, SamplingSpec};
pub use series::SampledSeries;
