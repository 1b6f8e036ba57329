use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use lapkf::bench::{self, BenchmarkConfig, Estimator, EstimatorSpec, Prepared};
use lapkf::ensemble::{self, SamplerKind, TheoremParams};
use lapkf::linalg;
use lapkf::{load_model, simulate, Error, InitialState, LtvModel};

const THREADS_ENV: &str = "LAPLACE_EST_THREADS";

#[derive(Parser)]
#[command(name = "lapkf", version, about = "State estimation with Laplace measurement noise")]
struct Cli {
    /// Worker threads for Monte Carlo work (default: all cores, or $LAPLACE_EST_THREADS).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and print its dimensions, spectral radius and PSD report.
    Validate {
        /// Model JSON file.
        model: PathBuf,
    },
    /// Simulate one trajectory and write it as CSV (k,x_0..,y_0..).
    Simulate(SimulateArgs),
    /// Run one estimator over a trajectory CSV and write the estimates (k,xhat_0..).
    Estimate(EstimateArgs),
    /// Run a Monte Carlo benchmark described by a JSON config.
    Benchmark(BenchmarkArgs),
    /// Estimate the variance bound M[k] and the ensemble size for an accuracy target.
    Theorem(TheoremArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Number of steps K (the trajectory has K+1 samples).
    #[arg(long)]
    horizon: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial state: zero, or drawn from N(0, X0).
    #[arg(long, value_enum, default_value_t = X0Mode::Sample)]
    x0: X0Mode,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum X0Mode {
    Zero,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Randomized,
    Linear,
    Map,
    MapW1,
    Particle,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Memoryless,
    GaussApprox,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Memoryless => SamplerKind::MemoryLess,
            SamplerArg::GaussApprox => SamplerKind::GaussianApprox,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Estimator to run.
    #[arg(long, value_enum)]
    method: Method,
    /// Trajectory CSV with columns k,x_0..,y_0.. (only the y columns are read).
    #[arg(long)]
    traj: PathBuf,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ensemble size I for the randomized estimator.
    #[arg(long, default_value_t = 200)]
    ensemble_size: usize,
    /// Scale sampler for the randomized estimator.
    #[arg(long, value_enum, default_value_t = SamplerArg::Memoryless)]
    sampler: SamplerArg,
    /// Particle count for the particle filter.
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    /// KKT tolerance for the batch MAP solver.
    #[arg(long, default_value_t = 1e-8)]
    map_tol: f64,
    /// Iteration cap for the batch MAP solver.
    #[arg(long, default_value_t = 50_000)]
    map_max_iter: usize,
    /// Random seed for the randomized and particle estimators.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Benchmark config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoremArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Error radius ε.
    #[arg(long)]
    epsilon: f64,
    /// Failure probability δ.
    #[arg(long)]
    delta: f64,
    /// Horizon K over which M[k] is estimated.
    #[arg(long, default_value_t = 30)]
    horizon: usize,
    /// Monte Carlo trials for estimating M[k].
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Ensemble size used to estimate the spread of single members.
    #[arg(long, default_value_t = 1000)]
    reference_size: usize,
    /// Scale sampler.
    #[arg(long, value_enum, default_value_t = SamplerArg::Memoryless)]
    sampler: SamplerArg,
    /// Use this value of M instead of estimating it.
    #[arg(long = "m", value_name = "M")]
    m_override: Option<f64>,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Exit code and message.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    invalid(format!("{}: {e}", path.display()))
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_model(path: &Path) -> CliResult<LtvModel> {
    load_model(path).map_err(|e| match e {
        Error::Io(io) => input_error(path, io),
        other => {
            let f = Failure::from(other);
            Failure {
                message: format!("{}: {}", path.display(), f.message),
                ..f
            }
        }
    })
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).map_err(|e| output_error(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(path: Option<&Path>, header: Vec<String>, rows: Vec<Vec<String>>) -> CliResult {
    let label = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = csv::Writer::from_writer(open_output(path)?);
    w.write_record(&header).map_err(|e| output_error(&label, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| output_error(&label, e))?;
    }
    w.flush().map_err(|e| output_error(&label, e))
}

fn cmd_validate(path: &Path) -> CliResult {
    let model = read_model(path)?;
    let rho = model.spectral_radius()?;
    println!("model: {}", path.display());
    println!("n = {}, p = {}", model.n(), model.p());
    match model.max_horizon() {
        Some(k) => println!("schedule horizon: {k}"),
        None => println!("schedule horizon: unbounded (time-invariant)"),
    }
    println!("spectral radius of A: {rho:.6}{}", if rho < 1.0 { " (stable)" } else { " (not stable)" });
    let k_last = model.max_horizon().unwrap_or(0);
    let min_over = |f: &dyn Fn(usize) -> f64| (0..=k_last).map(f).fold(f64::INFINITY, f64::min);
    println!("min eigenvalue of W: {:.6e}", min_over(&|k| linalg::min_eigenvalue(model.w(k))));
    println!(
        "min diagonal of V: {:.6e}",
        min_over(&|k| (0..model.p()).map(|i| model.v_ii(k, i)).fold(f64::INFINITY, f64::min))
    );
    println!("min eigenvalue of X0: {:.6e}", linalg::min_eigenvalue(model.x0()));
    println!("PSD checks: ok");
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult {
    let model = read_model(&args.model)?;
    let init = match args.x0 {
        X0Mode::Zero => InitialState::Zero,
        X0Mode::Sample => InitialState::Sample,
    };
    let traj = simulate(&model, args.horizon, args.seed, &init)?;
    let mut header = vec!["k".to_string()];
    header.extend((0..model.n()).map(|i| format!("x_{i}")));
    header.extend((0..model.p()).map(|i| format!("y_{i}")));
    let rows = (0..=args.horizon)
        .map(|k| {
            std::iter::once(k.to_string())
                .chain(traj.x[k].iter().map(|&v| fmt_float(v)))
                .chain(traj.y[k].iter().map(|&v| fmt_float(v)))
                .collect()
        })
        .collect();
    write_rows(args.out.as_deref(), header, rows)
}

/// Reads the `y_*` columns of a trajectory CSV.
fn read_measurements(path: &Path, p: usize) -> CliResult<Vec<DVector<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| input_error(path, e))?;
    let headers = r.headers().map_err(|e| input_error(path, e))?.clone();
    let cols: Vec<usize> = (0..p)
        .map(|i| {
            let name = format!("y_{i}");
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| input_error(path, format!("missing column `{name}` (model has p={p})")))
        })
        .collect::<CliResult<_>>()?;
    if headers.iter().filter(|h| h.starts_with("y_")).count() != p {
        return Err(input_error(path, format!("expected exactly {p} y columns")));
    }
    let mut ys = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| input_error(path, e))?;
        let y = cols
            .iter()
            .map(|&c| {
                rec[c].trim().parse::<f64>().map_err(|e| {
                    input_error(path, format!("row {}: column {}: {e}", line + 2, &headers[c]))
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        ys.push(DVector::from_vec(y));
    }
    if ys.is_empty() {
        return Err(input_error(path, "no data rows"));
    }
    Ok(ys)
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult {
    let model = read_model(&args.model)?;
    let spec = match args.method {
        Method::Linear => EstimatorSpec::Linear,
        Method::Randomized => EstimatorSpec::Randomized {
            ensemble_size: args.ensemble_size,
            sampler: args.sampler.into(),
        },
        Method::Particle => EstimatorSpec::Particle {
            particles: args.particles,
        },
        Method::Map => EstimatorSpec::Map {
            tol: args.map_tol,
            max_iter: args.map_max_iter,
        },
        Method::MapW1 => EstimatorSpec::MapW1,
    };
    if matches!(args.method, Method::MapW1) && model.p() != 1 {
        return Err(invalid(format!(
            "--method map-w1: scalar measurements required (model has p={})",
            model.p()
        )));
    }
    if args.ensemble_size == 0 {
        return Err(invalid("--ensemble-size must be at least 1"));
    }
    if args.particles == 0 {
        return Err(invalid("--particles must be at least 1"));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
    if !(args.map_tol > 0.0) {
        return Err(invalid("--map-tol must be > 0"));
    }
    let ys = read_measurements(&args.traj, model.p())?;
    let horizon = ys.len() - 1;
    model.ensure_time(horizon)?;
    let prepared = Prepared::new(&spec, &model, horizon)?;
    let mut est = Estimator::new(&spec, &model, &prepared, args.seed)?;
    let mut header = vec!["k".to_string()];
    header.extend((0..model.n()).map(|i| format!("xhat_{i}")));
    let mut rows = Vec::with_capacity(ys.len());
    for (k, y) in ys.iter().enumerate() {
        let (x, _) = est.step(&model, y)?;
        rows.push(
            std::iter::once(k.to_string())
                .chain(x.iter().map(|&v| fmt_float(v)))
                .collect(),
        );
    }
    write_rows(args.out.as_deref(), header, rows)
}

fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult {
    let config = BenchmarkConfig::load(&args.config).map_err(|e| match e {
        Error::Io(io) => input_error(&args.config, io),
        other => {
            let f = Failure::from(other);
            Failure {
                message: format!("{}: {}", args.config.display(), f.message),
                ..f
            }
        }
    })?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .ok_or_else(|| Failure {
            code: 1,
            message: "no output path: pass --out or set `output` in the config".into(),
        })?;
    let model = match &config.model {
        bench::ModelRef::Path(p) => read_model(p)?,
        bench::ModelRef::Inline(_) => config.load_model()?,
    };
    let result = bench::run_benchmark_with_model(&config, &model)?;
    bench::export_csv(&result, &out).map_err(|e| output_error(&out, e))?;
    for c in &result.curves {
        if c.failures > 0 {
            eprintln!("{}: {} failed trials excluded", c.label, c.failures);
        }
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_theorem(args: &TheoremArgs) -> CliResult {
    let model = read_model(&args.model)?;
    let m = match args.m_override {
        Some(m) => {
            println!("M = {m} (given)");
            m
        }
        None => {
            if args.trials == 0 {
                return Err(invalid("--trials must be at least 1"));
            }
            if args.reference_size < 2 {
                return Err(invalid("--reference-size must be at least 2"));
            }
            let est = ensemble::estimate_m(
                &model,
                args.horizon,
                args.trials,
                args.reference_size,
                args.sampler.into(),
                args.seed,
            )?;
            for w in &est.warnings {
                eprintln!("warning: {w}");
            }
            println!("k,M,stderr");
            for (k, (m, se)) in est.m.iter().zip(&est.stderr).enumerate() {
                println!("{k},{m:.6e},{se:.3e}");
            }
            if let Some(b) = est.corollary_bound {
                println!("stationary bound 2*lim E|x|^2 = {b:.6e}");
            }
            let m = est.max();
            println!("M = max_k M[k] = {m:.6e}");
            m
        }
    };
    let params = TheoremParams::new(args.epsilon, args.delta, m)?;
    let size = ensemble::ensemble_size_for(&params);
    println!("I = {size}");
    Ok(())
}

fn configure_threads(flag: Option<usize>) -> CliResult {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: 3,
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Validate { model } => cmd_validate(model),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Theorem(a) => cmd_theorem(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
