//! Replicated estimation runs with incremental, resumable CSV output.
//!
//! An output directory holds
//!
//! - `header.json`: the materialized configuration,
//! - `rows.csv`: one row per replication, in replication order,
//! - `timings.csv`: wall time per replication,
//! - `summary.csv` and `report.json`, written once the run ends.
//!
//! `rows.csv` depends only on the configuration, so a run that is killed and
//! restarted on the same directory continues from the last complete row and
//! ends with the same files as an uninterrupted run.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use carma_renewal::simulate::simulate_series;
use carma_renewal::whittle::{estimate, SpectralContext};
use carma_renewal::{CarmaModel, ParamBox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const HEADER_FILE: &str = "header.json";
pub const ROWS_FILE: &str = "rows.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// The estimate sits on the box boundary; kept in the summary.
    Boundary,
    /// Simulation or estimation failed; excluded from the summary.
    Failed,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Boundary => "boundary",
            RowStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(RowStatus::Ok),
            "boundary" => Some(RowStatus::Boundary),
            "failed" => Some(RowStatus::Failed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub seed: u64,
    pub stream: u64,
    pub n_obs: usize,
    pub theta_hat: Vec<f64>,
    pub sigma_l2_hat: f64,
    pub objective: f64,
    pub status: RowStatus,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub parameter_names: Vec<String>,
    pub sigma_l2: f64,
    pub config: ExperimentConfig,
}

impl Header {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            tool: "carma-renewal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            parameter_names: parameter_names(config.model.p, config.model.q),
            sigma_l2: config.sigma_l2(),
            config,
        }
    }

    /// Settings that do not change the rows are ignored when resuming.
    fn same_experiment(&self, other: &Header) -> bool {
        let strip = |c: &ExperimentConfig| ExperimentConfig { threads: None, time_budget_secs: None, ..c.clone() };
        self.parameter_names == other.parameter_names && strip(&self.config) == strip(&other.config)
    }
}

/// `a1..ap, b0..b(q-1)`.
pub fn parameter_names(p: usize, q: usize) -> Vec<String> {
    (1..=p).map(|i| format!("a{i}")).chain((0..q).map(|j| format!("b{j}"))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub sd: f64,
    pub bias: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replications: usize,
    pub completed: usize,
    pub ok: usize,
    pub boundary: usize,
    pub failed: usize,
    /// The time budget ran out before every replication was attempted.
    pub partial: bool,
    /// One entry per `θ` coordinate, then `sigma_L2`.
    pub params: Vec<ParamSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub header: Header,
    pub summary: Summary,
    pub rows: Vec<ReplicationRow>,
    /// Wall time of the replications run in this invocation, in seconds.
    #[serde(skip)]
    pub wall_times: Vec<(usize, f64)>,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentReport {
    pub fn theta_column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.status != RowStatus::Failed).map(|r| r.theta_hat[i]).collect()
    }
}

fn stats(name: &str, truth: f64, x: &[f64]) -> ParamSummary {
    let n = x.len();
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let variance = if n > 1 { x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0) } else { f64::NAN };
    let mse = x.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / nf;
    ParamSummary {
        name: name.into(),
        truth,
        count: n,
        mean,
        variance,
        sd: variance.sqrt(),
        bias: mean - truth,
        rmse: mse.sqrt(),
    }
}

/// Summary over the non-failed rows, accumulated in replication order.
pub fn summarize(header: &Header, rows: &[ReplicationRow], partial: bool) -> Summary {
    let good: Vec<&ReplicationRow> = rows.iter().filter(|r| r.status != RowStatus::Failed).collect();
    let truth = &header.config.model.theta0;
    let mut params: Vec<ParamSummary> = header
        .parameter_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let x: Vec<f64> = good.iter().map(|r| r.theta_hat[i]).collect();
            stats(name, truth[i], &x)
        })
        .collect();
    let s: Vec<f64> = good.iter().map(|r| r.sigma_l2_hat).collect();
    params.push(stats("sigma_L2", header.sigma_l2, &s));
    let count = |st: RowStatus| rows.iter().filter(|r| r.status == st).count();
    Summary {
        replications: header.config.replications,
        completed: rows.len(),
        ok: count(RowStatus::Ok),
        boundary: count(RowStatus::Boundary),
        failed: count(RowStatus::Failed),
        partial,
        params,
    }
}

fn column_names(d: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["replication", "seed", "stream", "n_obs"].iter().map(|s| s.to_string()).collect();
    cols.extend((1..=d).map(|i| format!("theta_hat_{i}")));
    cols.extend(["sigma_L2_hat", "objective", "status", "message"].iter().map(|s| s.to_string()));
    cols
}

fn row_record(r: &ReplicationRow) -> Vec<String> {
    let mut rec = vec![r.replication.to_string(), r.seed.to_string(), r.stream.to_string(), r.n_obs.to_string()];
    rec.extend(r.theta_hat.iter().map(|v| v.to_string()));
    rec.push(r.sigma_l2_hat.to_string());
    rec.push(r.objective.to_string());
    rec.push(r.status.as_str().into());
    rec.push(r.message.clone());
    rec
}

fn parse_row(rec: &csv::StringRecord, d: usize) -> Option<ReplicationRow> {
    if rec.len() != d + 8 {
        return None;
    }
    let f = |i: usize| rec.get(i)?.parse::<f64>().ok();
    Some(ReplicationRow {
        replication: rec.get(0)?.parse().ok()?,
        seed: rec.get(1)?.parse().ok()?,
        stream: rec.get(2)?.parse().ok()?,
        n_obs: rec.get(3)?.parse().ok()?,
        theta_hat: (0..d).map(|i| f(4 + i)).collect::<Option<Vec<f64>>>()?,
        sigma_l2_hat: f(4 + d)?,
        objective: f(5 + d)?,
        status: RowStatus::parse(rec.get(6 + d)?)?,
        message: rec.get(7 + d)?.to_string(),
    })
}

/// Reads the rows of a `rows.csv` file with `d` parameters.
pub fn read_rows(path: &Path, d: usize) -> Result<Vec<ReplicationRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = parse_row(&rec, d)
            .ok_or_else(|| HarnessError::Config(format!("{}: malformed row {:?}", path.display(), rec)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Complete rows `0..k` at the start of `rows.csv`; the file is cut back to
/// them, dropping a half-written last line.
fn load_prefix(path: &Path, d: usize) -> Result<Vec<ReplicationRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if !header.ends_with('\n') || header.trim_end().split(',').count() != d + 8 {
        return Err(HarnessError::Config(format!("{} does not match this experiment's columns", path.display())));
    }
    let mut keep = header.len();
    let mut rows = Vec::new();
    for line in lines {
        if !line.ends_with('\n') {
            break;
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(line.as_bytes());
        let row = rdr.records().next().and_then(|r| r.ok()).and_then(|rec| parse_row(&rec, d));
        match row {
            Some(row) if row.replication == rows.len() => rows.push(row),
            _ => break,
        }
        keep += line.len();
    }
    if keep != text.len() {
        fs::write(path, &text[..keep])?;
    }
    Ok(rows)
}

fn write_header_line(path: &Path, d: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(column_names(d))?;
    w.flush()?;
    Ok(())
}

/// Keeps the timing lines of replications below `k`.
fn trim_timings(path: &Path, k: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        match line.split(',').next().and_then(|s| s.parse::<usize>().ok()) {
            Some(r) if r < k && line.split(',').count() == 2 => {
                out.push_str(line);
                out.push('\n');
            }
            _ => {}
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn open_append(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(OpenOptions::new().append(true).create(true).open(path)?))
}

/// Runs one replication: simulate on stream `r` of `seed`, then estimate.
pub fn run_replication(
    ctx: &SpectralContext,
    config: &ExperimentConfig,
    model: &CarmaModel,
    bx: &ParamBox,
    r: usize,
) -> (ReplicationRow, f64) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(r as u64);
    let init = config.init.expect("materialized config");
    let result = simulate_series(model, &config.noise, &config.sampling, config.mode, config.h, init, &mut rng)
        .and_then(|s| estimate(ctx, &s, bx, &config.optimizer));
    let d = config.dim();
    let row = match result {
        Ok(e) => ReplicationRow {
            replication: r,
            seed: config.seed,
            stream: r as u64,
            n_obs: e.n_obs,
            theta_hat: e.theta_hat,
            sigma_l2_hat: e.sigma_l2_hat,
            objective: e.objective_value,
            status: if e.boundary_hit { RowStatus::Boundary } else { RowStatus::Ok },
            message: String::new(),
        },
        Err(e) => ReplicationRow {
            replication: r,
            seed: config.seed,
            stream: r as u64,
            n_obs: 0,
            theta_hat: vec![f64::NAN; d],
            sigma_l2_hat: f64::NAN,
            objective: f64::NAN,
            status: RowStatus::Failed,
            message: e.to_string().replace(['\n', '\r'], " "),
        },
    };
    (row, start.elapsed().as_secs_f64())
}

/// Runs (or resumes) an experiment, writing into `out_dir` when given.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    let config = config.materialize()?;
    let header = Header::new(config.clone());
    let d = config.dim();
    let model = config.true_model()?;
    let bx = config.param_box.clone().expect("materialized config");
    let ctx = SpectralContext::new(config.model.p, config.model.q, config.sampling.clone(), config.quadrature)?;

    let mut rows = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let hp = dir.join(HEADER_FILE);
        if hp.exists() {
            let old: Header = serde_json::from_str(&fs::read_to_string(&hp)?)?;
            if !old.same_experiment(&header) {
                return Err(HarnessError::Config(format!(
                    "{} holds a different experiment; use another output directory",
                    dir.display()
                )));
            }
        }
        fs::write(&hp, serde_json::to_string_pretty(&header)? + "\n")?;
        let rp = dir.join(ROWS_FILE);
        if rp.exists() {
            rows = load_prefix(&rp, d)?;
        } else {
            write_header_line(&rp, d)?;
        }
        let tp = dir.join(TIMINGS_FILE);
        trim_timings(&tp, rows.len())?;
        if !tp.exists() {
            fs::write(&tp, "replication,wall_time_s\n")?;
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let chunk = 2 * pool.current_num_threads().max(1);
    let total = config.replications;
    let limit = config.max_failure_fraction * total as f64;
    let start = Instant::now();
    let mut partial = false;
    let mut wall_times = Vec::new();
    let mut next = rows.len();
    while next < total {
        if let Some(budget) = config.time_budget_secs {
            if start.elapsed().as_secs_f64() > budget {
                partial = true;
                break;
            }
        }
        let end = (next + chunk).min(total);
        let batch: Vec<(ReplicationRow, f64)> = pool
            .install(|| (next..end).into_par_iter().map(|r| run_replication(&ctx, &config, &model, &bx, r)).collect());
        if let Some(dir) = out_dir {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(open_append(&dir.join(ROWS_FILE))?);
            for (row, _) in &batch {
                w.write_record(row_record(row))?;
            }
            w.flush()?;
            let mut t = open_append(&dir.join(TIMINGS_FILE))?;
            for (row, secs) in &batch {
                writeln!(t, "{},{}", row.replication, secs)?;
            }
            t.flush()?;
        }
        for (row, secs) in batch {
            wall_times.push((row.replication, secs));
            rows.push(row);
        }
        next = end;
        let failed = rows.iter().filter(|r| r.status == RowStatus::Failed).count();
        if failed as f64 > limit {
            let summary = summarize(&header, &rows, true);
            finish(out_dir, &header, &summary, &rows)?;
            return Err(HarnessError::ExcessFailures {
                failed,
                attempted: rows.len(),
                total,
                limit: 100.0 * config.max_failure_fraction,
            });
        }
    }
    let summary = summarize(&header, &rows, partial);
    finish(out_dir, &header, &summary, &rows)?;
    Ok(ExperimentReport { header, summary, rows, wall_times, out_dir: out_dir.map(Path::to_path_buf) })
}

fn finish(out_dir: Option<&Path>, header: &Header, summary: &Summary, rows: &[ReplicationRow]) -> Result<()> {
    let Some(dir) = out_dir else { return Ok(()) };
    write_summary_csv(&dir.join(SUMMARY_FILE), summary)?;
    #[derive(Serialize)]
    struct Report<'a> {
        header: &'a Header,
        summary: &'a Summary,
        failures: Vec<(usize, &'a str)>,
    }
    let failures =
        rows.iter().filter(|r| r.status == RowStatus::Failed).map(|r| (r.replication, r.message.as_str())).collect();
    let report = Report { header, summary, failures };
    fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, summary: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "truth", "count", "mean", "variance", "sd", "bias", "rmse", "partial"])?;
    for p in &summary.params {
        w.write_record([
            p.name.clone(),
            p.truth.to_string(),
            p.count.to_string(),
            p.mean.to_string(),
            p.variance.to_string(),
            p.sd.to_string(),
            p.bias.to_string(),
            p.rmse.to_string(),
            summary.partial.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `header.json` and `rows.csv` back and recomputes the summary.
pub fn recompute_summary(dir: &Path) -> Result<Summary> {
    let header: Header = serde_json::from_str(&fs::read_to_string(dir.join(HEADER_FILE))?)?;
    let rows = read_rows(&dir.join(ROWS_FILE), header.parameter_names.len())?;
    let partial = rows.len() < header.config.replications;
    Ok(summarize(&header, &rows, partial))
}
