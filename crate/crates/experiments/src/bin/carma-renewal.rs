use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use carma_experiments::coverage::sigma0_for;
use carma_experiments::{
    coverage_study, reproduce_tables, CoverageOptions, ExperimentConfig, HarnessError, TableOptions,
};
use carma_renewal::asymptotics::Truncation;
use carma_renewal::quadrature::QuadratureRule;
use carma_renewal::simulate::simulate_series;
use carma_renewal::whittle::{aliasing_diagnostic, estimate, EstimatorConfig, SpectralContext};
use carma_renewal::{ParamBox, SampledSeries, SamplingMode, SamplingSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "carma-renewal", version, about = "Whittle estimation for CARMA processes sampled at renewal times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeKind {
    /// Fixed number of observations.
    N,
    /// Fixed horizon.
    #[value(name = "T")]
    T,
}

#[derive(Args, Clone)]
struct RuleArgs {
    /// Upper frequency limit of the quadrature grid.
    #[arg(long)]
    umax: Option<f64>,
    /// Frequency step of the quadrature grid.
    #[arg(long)]
    du: Option<f64>,
}

impl RuleArgs {
    fn apply(&self, mut rule: QuadratureRule) -> QuadratureRule {
        if let Some(u) = self.umax {
            rule.u_max = u;
        }
        if let Some(d) = self.du {
            rule.du = d;
        }
        rule
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    q: usize,
    /// Exponential inter-arrival rate `β`.
    #[arg(long, conflicts_with = "sampling")]
    rate: Option<f64>,
    /// Inter-arrival law as JSON, e.g. `{"kind":"gamma","shape":2,"rate":4}`.
    #[arg(long)]
    sampling: Option<String>,
    #[command(flatten)]
    rule: RuleArgs,
}

impl ModelArgs {
    fn sampling(&self) -> Result<SamplingSpec, HarnessError> {
        match (&self.sampling, self.rate) {
            (Some(json), _) => serde_json::from_str(json).map_err(|e| HarnessError::Config(format!("--sampling: {e}"))),
            (None, Some(beta)) => SamplingSpec::exponential(beta).map_err(config),
            (None, None) => Err(HarnessError::Config("give --rate or --sampling".into())),
        }
    }

    fn context(&self) -> Result<SpectralContext, HarnessError> {
        SpectralContext::new(self.p, self.q, self.sampling()?, self.rule.apply(QuadratureRule::default()))
            .map_err(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Replicated simulation and estimation from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; an existing run there is resumed.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<ModeKind>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// The OU grid over drivers, sampling rates and sample sizes.
    Tables {
        #[arg(long)]
        out: PathBuf,
        /// Euler step 10⁻² instead of 10⁻³.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Per-cell time budget in seconds.
        #[arg(long)]
        budget: Option<f64>,
        /// Keep the configured frequency rule even when the span aliases.
        #[arg(long)]
        no_alias_guard: bool,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Coverage of asymptotic Wald intervals.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mode: Option<ModeKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Estimates `θ` and `σ_L²` from a series CSV (`k,tau,y`).
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Lower corner of the search box, comma separated.
        #[arg(long, value_delimiter = ',')]
        lower: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        upper: Vec<f64>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Relabel the series as fixed-n or fixed-horizon.
        #[arg(long)]
        mode: Option<ModeKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes `u, φ_Z(u), g(u)` on the quadrature half grid as CSV.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise distances between rescaled densities on the frequency grid.
    DiagnoseAliasing {
        #[command(flatten)]
        model: ModelArgs,
        /// One parameter vector per occurrence, comma separated.
        #[arg(long = "theta", required = true)]
        thetas: Vec<String>,
    },
    /// `W`, `Q` and `Σ₀` at the configured truth.
    Asymptotics {
        #[arg(long)]
        config: PathBuf,
        /// Series truncation for `Q`.
        #[arg(long)]
        truncation: Option<usize>,
        /// Monte Carlo replications when the series is unavailable.
        #[arg(long)]
        mc_reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulates one sampled series from a JSON configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long)]
        mode: Option<ModeKind>,
    },
}

fn config(e: carma_renewal::Error) -> HarnessError {
    HarnessError::Config(e.to_string())
}

fn load(path: &Path, seed: Option<u64>, mode: Option<ModeKind>) -> Result<ExperimentConfig, HarnessError> {
    let mut c = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(m) = mode {
        c = c.with_mode_kind(matches!(m, ModeKind::T));
    }
    Ok(c)
}

fn emit(out: Option<&Path>, text: String) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_theta(s: &str) -> Result<Vec<f64>, HarnessError> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| HarnessError::Config(format!("bad θ entry {x:?}: {e}"))))
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, out, seed, mode, threads } => {
            let mut c = load(&config, seed, mode)?;
            c.threads = threads.or(c.threads);
            let report = carma_experiments::run_experiment(&c, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        Command::Tables { out, fast, reps, seed, threads, budget, no_alias_guard, rule } => {
            let mut opts = if fast { TableOptions::fast() } else { TableOptions::default() };
            if let Some(r) = reps {
                opts.replications = r;
            }
            if let Some(s) = seed {
                opts.base_seed = s;
            }
            opts.threads = threads;
            opts.time_budget_secs = budget;
            opts.optimizer.alias_guard = !no_alias_guard;
            opts.quadrature = rule.apply(opts.quadrature);
            let report = reproduce_tables(&out, &opts)?;
            for driver in &opts.drivers {
                println!("{}", driver.name());
                for row in report.layout(*driver) {
                    println!("  {}", row.join("\t"));
                }
            }
        }
        Command::Coverage { config, out, mode, seed, level, threads } => {
            let mut c = load(&config, seed, mode)?;
            c.threads = threads.or(c.threads);
            let opts = CoverageOptions { level, ..CoverageOptions::default() };
            let report = coverage_study(&c, &opts, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report.params)?);
        }
        Command::Estimate { input, model, lower, upper, starts, seed, mode, out } => {
            let ctx = model.context()?;
            let mut series = SampledSeries::read_csv(&input)?;
            match mode {
                Some(ModeKind::N) => series.mode = SamplingMode::Count { n: series.len() },
                Some(ModeKind::T) => {
                    let t = *series.times.last().expect("validated series is non-empty");
                    series.mode = SamplingMode::Horizon { t }
                }
                None => {}
            }
            let bx = ParamBox::new(model.p, model.q, lower, upper).map_err(config)?;
            let mut cfg = EstimatorConfig::default();
            if let Some(s) = starts {
                cfg.starts = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = estimate(&ctx, &series, &bx, &cfg)?;
            emit(out.as_deref(), serde_json::to_string_pretty(&result)?)?;
        }
        Command::Spectrum { model, theta, out } => {
            let ctx = model.context()?;
            let m = ctx.model(&theta, 1.0).map_err(config)?;
            let grid = ctx.density_grid(&m)?;
            let g = grid.g();
            let mut text = String::from("u,phi_z,g");
            for ((u, phi), gv) in ctx.nodes().iter().zip(&grid.phi).zip(&g) {
                text.push_str(&format!("\n{u},{phi},{gv}"));
            }
            emit(out.as_deref(), text)?;
        }
        Command::DiagnoseAliasing { model, thetas } => {
            let ctx = model.context()?;
            let thetas: Vec<Vec<f64>> = thetas.iter().map(|s| parse_theta(s)).collect::<Result<_, _>>()?;
            let report = aliasing_diagnostic(&ctx, &thetas)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Asymptotics { config, truncation, mc_reps, seed, out } => {
            let c = load(&config, None, None)?;
            let mut opts = CoverageOptions::default();
            if let Some(t) = truncation {
                opts.series.truncation = Truncation::uniform(t);
            }
            if let Some(r) = mc_reps {
                opts.monte_carlo.reps = r;
            }
            if let Some(s) = seed {
                opts.monte_carlo.seed = s;
            }
            let cov = sigma0_for(&c, &opts)?;
            emit(out.as_deref(), serde_json::to_string_pretty(&cov)?)?;
        }
        Command::Simulate { config, out, seed, stream, mode } => {
            let c = load(&config, seed, mode)?.materialize()?;
            let model = c.true_model()?;
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            rng.set_stream(stream);
            let init = c.init.expect("materialized");
            let series = simulate_series(&model, &c.noise, &c.sampling, c.mode, c.h, init, &mut rng)?;
            series.write_csv(&out)?;
            eprintln!("wrote {} observations to {}", series.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(h) = e.downcast_ref::<HarnessError>() {
        return h.exit_code() as u8;
    }
    match e.downcast_ref::<carma_renewal::Error>() {
        Some(carma_renewal::Error::Parse(_) | carma_renewal::Error::InvalidParameter(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
