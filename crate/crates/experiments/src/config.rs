//! Experiment configuration, read from a single JSON document.

use std::path::Path;

use carma_renewal::quadrature::QuadratureRule;
use carma_renewal::simulate::InitPolicy;
use carma_renewal::whittle::EstimatorConfig;
use carma_renewal::{CarmaModel, CarmaParams, NoiseSpec, ParamBox, SamplingMode, SamplingSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub p: usize,
    pub q: usize,
    /// `(a_1..a_p, b_0..b_{q-1})`.
    pub theta0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelConfig,
    pub noise: NoiseSpec,
    pub sampling: SamplingSpec,
    pub mode: SamplingMode,
    pub replications: usize,
    pub seed: u64,
    /// Euler step of the simulated paths.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub quadrature: QuadratureRule,
    #[serde(default)]
    pub optimizer: EstimatorConfig,
    /// Search box; defaults to `[θ/100, 10θ]` per coordinate.
    #[serde(default)]
    pub param_box: Option<ParamBox>,
    /// Defaults to a Gaussian start for Brownian drivers and a burn-in otherwise.
    #[serde(default)]
    pub init: Option<InitPolicy>,
    /// Worker threads; results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Stop starting new replications after this many seconds.
    #[serde(default)]
    pub time_budget_secs: Option<f64>,
    #[serde(default = "default_max_failure_fraction")]
    pub max_failure_fraction: f64,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_h() -> f64 {
    1e-3
}

fn default_max_failure_fraction() -> f64 {
    0.1
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        self.model.p + self.model.q
    }

    /// `σ_L²` of the driver, which is also the model's noise variance.
    pub fn sigma_l2(&self) -> f64 {
        self.noise.variance()
    }

    pub fn true_model(&self) -> Result<CarmaModel> {
        let params = CarmaParams::from_theta(self.model.p, self.model.q, &self.model.theta0, self.sigma_l2())
            .map_err(config_err)?;
        CarmaModel::new(params).map_err(config_err)
    }

    /// Checks every nested spec and fills in the defaults, so that the result
    /// fully describes the run.
    pub fn materialize(&self) -> Result<Self> {
        let mut c = self.clone();
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if c.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(c.h > 0.0 && c.h.is_finite()) {
            return bad(format!("step h must be positive, got {}", c.h));
        }
        if !(0.0..=1.0).contains(&c.max_failure_fraction) {
            return bad(format!("max_failure_fraction must lie in [0, 1], got {}", c.max_failure_fraction));
        }
        if c.model.theta0.len() != c.dim() {
            return bad(format!("theta0 has {} entries, p + q = {}", c.model.theta0.len(), c.dim()));
        }
        c.noise.validate().map_err(config_err)?;
        c.sampling.validate().map_err(config_err)?;
        c.quadrature.validate().map_err(config_err)?;
        match c.mode {
            SamplingMode::Count { n } if n < 2 => return bad("mode count needs n ≥ 2".into()),
            SamplingMode::Horizon { t } if !(t > 0.0 && t.is_finite()) => {
                return bad(format!("mode horizon needs t > 0, got {t}"))
            }
            _ => {}
        }
        if let Some(b) = c.time_budget_secs {
            if !(b > 0.0) {
                return bad(format!("time_budget_secs must be positive, got {b}"));
            }
        }
        let model = c.true_model()?;
        let bx = match c.param_box.take() {
            Some(b) => b,
            None => default_box(c.model.p, c.model.q, &c.model.theta0)?,
        };
        bx.validate().map_err(config_err)?;
        if bx.p != c.model.p || bx.q != c.model.q {
            return bad("param_box orders differ from the model".into());
        }
        if !bx.contains(&c.model.theta0) {
            return bad("theta0 lies outside param_box".into());
        }
        c.param_box = Some(bx);
        c.init = Some(c.init.unwrap_or_else(|| InitPolicy::default_for(&model, &c.noise)));
        Ok(c)
    }

    /// Switches between a fixed count `n` and the matching horizon `n/β`.
    pub fn with_mode_kind(&self, fixed_horizon: bool) -> Self {
        let mut c = self.clone();
        let beta = c.sampling.beta();
        c.mode = match (c.mode, fixed_horizon) {
            (SamplingMode::Count { n }, true) => SamplingMode::Horizon { t: n as f64 / beta },
            (SamplingMode::Horizon { t }, false) => SamplingMode::Count { n: (t * beta).round().max(2.0) as usize },
            (m, _) => m,
        };
        c
    }
}

/// `[θ_i/100, 10θ_i]` for positive entries, mirrored for negative ones and
/// `[−1, 1]` at zero.
pub fn default_box(p: usize, q: usize, theta0: &[f64]) -> Result<ParamBox> {
    let (lower, upper): (Vec<f64>, Vec<f64>) = theta0
        .iter()
        .map(|&t| {
            if t > 0.0 {
                (t / 100.0, 10.0 * t)
            } else if t < 0.0 {
                (10.0 * t, t / 100.0)
            } else {
                (-1.0, 1.0)
            }
        })
        .unzip();
    ParamBox::new(p, q, lower, upper)
        .map_err(|e| HarnessError::Config(format!("default parameter box is invalid ({e}); set param_box explicitly")))
}
