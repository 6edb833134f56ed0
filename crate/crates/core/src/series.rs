//! Observed series `(τ_k, Y(τ_k))` and its on-disk format.
//!
//! The CSV file has header `k,tau,y`. Provenance lives in a JSON sidecar next
//! to it (`<stem>.json`). Floats are written with Rust's shortest round-trip
//! formatting, so reading a file back yields bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::CarmaParams;
use crate::noise::NoiseSpec;
use crate::sampling::{SamplingMode, SamplingSpec};
use crate::simulate::InitPolicy;

/// How a simulated series was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub params: CarmaParams,
    pub noise: NoiseSpec,
    pub sampling: SamplingSpec,
    pub seed: u64,
    pub stream: u64,
    pub h: f64,
    pub init: InitPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub mode: SamplingMode,
    pub provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    mode: SamplingMode,
    n: usize,
    provenance: Option<Provenance>,
}

impl SampledSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, mode: SamplingMode) -> Result<Self> {
        let s = Self { times, values, mode, provenance: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.times.is_empty(), || "series must have at least one observation".into())?;
        ensure(self.times.len() == self.values.len(), || "times and values differ in length".into())?;
        ensure(self.times.windows(2).all(|w| w[1] > w[0]), || "times must be strictly increasing".into())?;
        ensure(self.times.iter().chain(&self.values).all(|x| x.is_finite()), || "non-finite entry".into())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Multiplies every observation by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut s = self.clone();
        for v in &mut s.values {
            *v *= c;
        }
        s
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "k,tau,y")?;
        for (k, (t, y)) in self.times.iter().zip(&self.values).enumerate() {
            writeln!(w, "{},{},{}", k + 1, t, y)?;
        }
        w.flush()?;
        let side = Sidecar { mode: self.mode, n: self.len(), provenance: self.provenance.clone() };
        std::fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    /// Reads a series CSV; the sidecar is optional. Without one, the mode is
    /// `Count { n }`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (ti, yi) = match (col("tau"), col("y")) {
            (Some(t), Some(y)) => (t, y),
            _ => return Err(Error::Parse(format!("{}: expected columns k,tau,y", path.display()))),
        };
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("{}: bad value on data line {}", path.display(), line + 1)))
            };
            times.push(parse(ti)?);
            values.push(parse(yi)?);
        }
        let side_path = Self::sidecar_path(path);
        let (mode, provenance) = if side_path.exists() {
            let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(&side_path)?)?;
            (side.mode, side.provenance)
        } else {
            (SamplingMode::Count { n: times.len() }, None)
        };
        let s = Self { times, values, mode, provenance };
        s.validate()?;
        Ok(s)
    }
}
