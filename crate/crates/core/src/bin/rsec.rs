use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsec::experiment::{run_experiment, run_to_file, ExperimentConfig, ExperimentKind};
use rsec::Error;

#[derive(Parser)]
#[command(name = "rsec", version, about = "Slice reconciliation sweeps for CV-QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized quantization efficiency per protocol, m and snr.
    QuantSweep(RunArgs),
    /// Full polar-code reconciliation per protocol, snr and block length.
    ReconSweep(RunArgs),
    /// Finite-size key rate against distance.
    KeyrateSweep(RunArgs),
    /// Build and cache frozen sets for a grid of (n, e).
    ConstructCode(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output CSV; defaults to the config's `output`, then stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "INT", default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (kind, args) = match cli.command {
        Command::QuantSweep(a) => (ExperimentKind::QuantSweep, a),
        Command::ReconSweep(a) => (ExperimentKind::ReconSweep, a),
        Command::KeyrateSweep(a) => (ExperimentKind::KeyrateSweep, a),
        Command::ConstructCode(a) => (ExperimentKind::ConstructCode, a),
    };

    let cfg = match load(&args, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("rsec: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = args.out.clone().or_else(|| cfg.output.clone());
    let result = match &out {
        Some(path) => run_to_file(&cfg, path, args.workers),
        None => run_experiment(&cfg, args.workers).map(|csv| print!("{csv}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rsec: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            })
        }
    }
}

fn load(args: &RunArgs, kind: ExperimentKind) -> rsec::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "config describes a {:?} run, not {:?}",
            cfg.kind, kind
        )));
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if args.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    Ok(cfg)
}
