//! The OU simulation grid: two drivers × four sampling rates × two sample sizes,
//! `θ₀ = 1`, exponential inter-arrival times and 100 replications per cell.

use std::fs;
use std::path::{Path, PathBuf};

use carma_renewal::quadrature::QuadratureRule;
use carma_renewal::whittle::EstimatorConfig;
use carma_renewal::{NoiseSpec, ParamBox, SamplingMode, SamplingSpec};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelConfig};
use crate::error::Result;
use crate::harness::{run_experiment, RowStatus};

pub const BETAS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
pub const SAMPLE_SIZES: [usize; 2] = [100, 1000];
pub const BASE_SEED: u64 = 20240;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    /// Standard Brownian motion.
    Brownian,
    /// Gamma process with shape 0.2 and rate 0.3, centered.
    Gamma,
}

impl Driver {
    pub const ALL: [Driver; 2] = [Driver::Brownian, Driver::Gamma];

    pub fn noise(self) -> NoiseSpec {
        match self {
            Driver::Brownian => NoiseSpec::brownian(1.0).expect("valid"),
            Driver::Gamma => NoiseSpec::gamma(0.2, 0.3).expect("valid"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Driver::Brownian => "brownian",
            Driver::Gamma => "gamma",
        }
    }

    fn index(self) -> u64 {
        match self {
            Driver::Brownian => 0,
            Driver::Gamma => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub replications: usize,
    pub h: f64,
    pub base_seed: u64,
    pub quadrature: QuadratureRule,
    pub optimizer: EstimatorConfig,
    pub threads: Option<usize>,
    /// Per-cell time budget in seconds.
    pub time_budget_secs: Option<f64>,
    pub drivers: Vec<Driver>,
    pub betas: Vec<f64>,
    pub sample_sizes: Vec<usize>,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            replications: 100,
            h: 1e-3,
            base_seed: BASE_SEED,
            quadrature: QuadratureRule::default(),
            optimizer: EstimatorConfig::default(),
            threads: None,
            time_budget_secs: None,
            drivers: Driver::ALL.to_vec(),
            betas: BETAS.to_vec(),
            sample_sizes: SAMPLE_SIZES.to_vec(),
        }
    }
}

impl TableOptions {
    /// `h = 10⁻²`: about ten times faster, with the same cell layout.
    pub fn fast() -> Self {
        Self { h: 1e-2, ..Self::default() }
    }
}

/// `8·driver + 2·β-index + n-index` on the full grid.
pub fn cell_seed(base: u64, driver: Driver, beta_index: usize, n_index: usize) -> u64 {
    base + 8 * driver.index() + 2 * beta_index as u64 + n_index as u64
}

pub fn cell_config(opts: &TableOptions, driver: Driver, beta_index: usize, n_index: usize) -> ExperimentConfig {
    let beta = opts.betas[beta_index];
    let n = opts.sample_sizes[n_index];
    let noise = driver.noise();
    ExperimentConfig {
        name: format!("{}_beta{}_n{}", driver.name(), beta, n),
        model: ModelConfig { p: 1, q: 0, theta0: vec![1.0] },
        noise,
        sampling: SamplingSpec::exponential(beta).expect("positive rate"),
        mode: SamplingMode::Count { n },
        replications: opts.replications,
        seed: cell_seed(opts.base_seed, driver, beta_index, n_index),
        h: opts.h,
        quadrature: opts.quadrature,
        optimizer: opts.optimizer.clone(),
        param_box: Some(ParamBox::new(1, 0, vec![0.01], vec![10.0]).expect("valid box")),
        init: None,
        threads: opts.threads,
        time_budget_secs: opts.time_budget_secs,
        max_failure_fraction: 0.1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub driver: Driver,
    pub beta: f64,
    pub n: usize,
    pub seed: u64,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub sd: f64,
    pub failed: usize,
    pub boundary: usize,
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub options: TableOptions,
    pub cells: Vec<CellResult>,
}

impl TableReport {
    pub fn cell(&self, driver: Driver, beta: f64, n: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.driver == driver && c.beta == beta && c.n == n)
    }

    /// One row per `β`, one `mean (variance)` column per sample size.
    pub fn layout(&self, driver: Driver) -> Vec<Vec<String>> {
        let mut out = vec![std::iter::once("beta".to_string())
            .chain(self.options.sample_sizes.iter().map(|n| format!("n={n}")))
            .collect()];
        for &beta in &self.options.betas {
            let mut row = vec![beta.to_string()];
            for &n in &self.options.sample_sizes {
                row.push(match self.cell(driver, beta, n) {
                    Some(c) => format!("{:.2} ({:.2})", c.mean, c.variance),
                    None => String::new(),
                });
            }
            out.push(row);
        }
        out
    }
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell (resuming cells already on disk) and writes
/// `table_<driver>.csv` in the mean/variance layout plus a long-format `cells.csv`.
pub fn reproduce_tables(out_dir: &Path, opts: &TableOptions) -> Result<TableReport> {
    fs::create_dir_all(out_dir)?;
    let mut cells = Vec::new();
    for &driver in &opts.drivers {
        for (bi, &beta) in opts.betas.iter().enumerate() {
            for (ni, &n) in opts.sample_sizes.iter().enumerate() {
                let cfg = cell_config(opts, driver, bi, ni);
                let dir: PathBuf = out_dir.join("cells").join(&cfg.name);
                let report = run_experiment(&cfg, Some(&dir))?;
                let s = &report.summary.params[0];
                cells.push(CellResult {
                    driver,
                    beta,
                    n,
                    seed: cfg.seed,
                    count: s.count,
                    mean: s.mean,
                    variance: s.variance,
                    sd: s.sd,
                    failed: report.summary.failed,
                    boundary: report.rows.iter().filter(|r| r.status == RowStatus::Boundary).count(),
                    partial: report.summary.partial,
                });
            }
        }
    }
    let report = TableReport { options: opts.clone(), cells };
    for &driver in &opts.drivers {
        write_csv(&out_dir.join(format!("table_{}.csv", driver.name())), &report.layout(driver))?;
    }
    let mut long =
        vec![["driver", "beta", "n", "seed", "count", "mean", "variance", "sd", "failed", "boundary", "partial"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()];
    for c in &report.cells {
        long.push(vec![
            c.driver.name().into(),
            c.beta.to_string(),
            c.n.to_string(),
            c.seed.to_string(),
            c.count.to_string(),
            c.mean.to_string(),
            c.variance.to_string(),
            c.sd.to_string(),
            c.failed.to_string(),
            c.boundary.to_string(),
            c.partial.to_string(),
        ]);
    }
    write_csv(&out_dir.join("cells.csv"), &long)?;
    fs::write(out_dir.join("tables.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}
