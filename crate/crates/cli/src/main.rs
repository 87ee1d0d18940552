use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quantot_cli::config::{
    default_eps_grid, default_k_grid, parse_f64_grid, parse_usize_grid, read_config_file,
    ExperimentConfig, ExperimentKind, Seeding,
};
use quantot_cli::error::CliError;
use quantot_cli::experiments;

/// Benchmark harness for quantization-accelerated Wasserstein estimation.
///
/// Emits reproducible CSV: for a fixed --seed, all error columns are
/// bitwise-identical across runs (wall times vary).
#[derive(Parser)]
#[command(name = "quantot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean relative error vs. k for the plug-in and quantized estimators.
    ErrorVsK(CommonArgs),
    /// Mean relative error and wall time per estimator, seeding, and kappa.
    CpuTime(CommonArgs),
    /// Wall time and absolute error vs. epsilon for the quantized pipeline
    /// and the bare approximate solver.
    EpsSweep(CommonArgs),
    /// Quantization error vs. k with its log-log decay slope.
    Qerr(CommonArgs),
    /// Empirical standard deviation of the estimates per k.
    Variance(CommonArgs),
    /// Quantized estimator with and without Lloyd refinement.
    Lloyd(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Dataset spec: gaussian:d=5,tau=1e-4 | hypercube:d=2 | dirac:d=3 |
    /// mixtures:m=10,d=15,tau=1e-4,n=10000,seed=0 |
    /// csv:left.csv,right.csv[,standardize][,weight-col=K] |
    /// pgm:left.pgm,right.pgm
    #[arg(long)]
    dataset: Option<String>,

    /// Comma-separated strictly increasing k values (default: 9 values
    /// log-spaced over [1, 100]).
    #[arg(long)]
    k_grid: Option<String>,

    /// Comma-separated strictly increasing epsilon values (distance scale).
    #[arg(long)]
    eps_grid: Option<String>,

    /// Oversampling fraction(s) in (0, 1]; cpu-time sweeps every value,
    /// other experiments use the first.
    #[arg(long)]
    kappa: Option<String>,

    /// Seeding method for the quantized estimator.
    #[arg(long, value_parser = ["kmeanspp", "afkmc2"])]
    seeding: Option<String>,

    /// Markov chain length for afkmc2 seeding.
    #[arg(long)]
    chain_length: Option<usize>,

    /// Lloyd refinement iterations (lloyd subcommand defaults to 5).
    #[arg(long)]
    lloyd_iters: Option<usize>,

    /// Repetitions per cell.
    #[arg(long)]
    reps: Option<usize>,

    /// Base seed; error columns are a pure function of config plus seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,

    /// Run timing cells sequentially to avoid contention skew.
    #[arg(long)]
    pin_timing: bool,

    /// Points per side when materializing continuous datasets
    /// (0 = experiment default: 2000 for eps-sweep, 1000 for qerr).
    #[arg(long)]
    sample_n: Option<usize>,

    /// Largest cloud accepted for exact reference computation.
    #[arg(long)]
    max_ref_n: Option<usize>,

    /// TOML-style key=value file supplying any of the flags above
    /// (command-line flags win).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(kind: ExperimentKind, args: CommonArgs) -> Result<ExperimentConfig, CliError> {
    let file: BTreeMap<String, String> = match &args.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let from_file = |key: &str| file.get(key).cloned();

    let dataset = args
        .dataset
        .or_else(|| from_file("dataset"))
        .ok_or_else(|| CliError::Config("--dataset is required".into()))?;
    let k_grid = match args.k_grid.or_else(|| from_file("k-grid")) {
        Some(s) => parse_usize_grid(&s)?,
        None => default_k_grid(),
    };
    let eps_grid = match args.eps_grid.or_else(|| from_file("eps-grid")) {
        Some(s) => parse_f64_grid(&s)?,
        None => default_eps_grid(),
    };
    let kappas = match args.kappa.or_else(|| from_file("kappa")) {
        Some(s) => parse_f64_grid(&s)?,
        None => vec![1.0],
    };
    let seeding = match args.seeding.or_else(|| from_file("seeding")) {
        Some(s) => Seeding::parse(&s)?,
        None => Seeding::KmeansPlusPlus,
    };
    let parse_num = |key: &str, s: Option<String>| -> Result<Option<u64>, CliError> {
        match s.or_else(|| from_file(key)) {
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| CliError::Config(format!("invalid {key}: \"{v}\""))),
            None => Ok(None),
        }
    };
    let chain_length = parse_num("chain-length", args.chain_length.map(|v| v.to_string()))?
        .unwrap_or(quantot_core::estimators::DEFAULT_CHAIN_LENGTH as u64)
        as usize;
    let lloyd_iters =
        parse_num("lloyd-iters", args.lloyd_iters.map(|v| v.to_string()))?.unwrap_or(0) as usize;
    let reps = parse_num("reps", args.reps.map(|v| v.to_string()))?.unwrap_or(10) as usize;
    let base_seed = parse_num("seed", args.seed.map(|v| v.to_string()))?.unwrap_or(0);
    let jobs = parse_num("jobs", args.jobs.map(|v| v.to_string()))?.unwrap_or(0) as usize;
    let sample_n =
        parse_num("sample-n", args.sample_n.map(|v| v.to_string()))?.unwrap_or(0) as usize;
    let max_ref_n =
        parse_num("max-ref-n", args.max_ref_n.map(|v| v.to_string()))?.unwrap_or(4096) as usize;
    let pin_timing = args.pin_timing
        || from_file("pin-timing")
            .map(|v| v == "true")
            .unwrap_or(false);
    let out = args.out.or_else(|| from_file("out").map(PathBuf::from));

    Ok(ExperimentConfig {
        kind,
        dataset,
        k_grid,
        eps_grid,
        kappas,
        seeding,
        chain_length,
        lloyd_iters,
        reps,
        base_seed,
        out,
        jobs,
        pin_timing,
        sample_n,
        max_ref_n,
    })
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::ErrorVsK(a) => (ExperimentKind::ErrorVsK, a),
        Command::CpuTime(a) => (ExperimentKind::CpuTime, a),
        Command::EpsSweep(a) => (ExperimentKind::EpsSweep, a),
        Command::Qerr(a) => (ExperimentKind::QerrVsK, a),
        Command::Variance(a) => (ExperimentKind::Variance, a),
        Command::Lloyd(a) => (ExperimentKind::Lloyd, a),
    };
    let cfg = build_config(kind, args)?;
    let csv = experiments::run(&cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(csv.as_bytes())
                .map_err(|e| CliError::Data(format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
