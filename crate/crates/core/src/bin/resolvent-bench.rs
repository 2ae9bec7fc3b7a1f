//! Runs the three iterations on seeded random hyperplane instances and writes
//! averaged dB curves.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use resolvent_core::{emit_plot_data, run_experiment, Algorithm, Error, ExperimentConfig, WeightsMode};

#[derive(Debug, Parser)]
#[command(name = "resolvent-bench", version, about)]
struct Args {
    /// Dimension of the ambient space.
    #[arg(long = "dim", value_name = "N")]
    dim: Option<usize>,
    /// Number of hyperplanes.
    #[arg(long = "num-sets", value_name = "M")]
    num_sets: Option<usize>,
    /// `equal` or a comma-separated list of weights.
    #[arg(long, value_name = "equal|L1,L2,...")]
    weights: Option<WeightsMode>,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    #[arg(long, value_name = "K")]
    instances: Option<usize>,
    #[arg(long, value_name = "T")]
    iters: Option<usize>,
    /// Comma-separated subset of jA,jR,T.
    #[arg(long, value_name = "ALGS", value_delimiter = ',')]
    algs: Option<Vec<Algorithm>>,
    /// CSV output; the columns file goes next to it with extension .dat.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// JSON config; flags given on the command line override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_METRIC: u8 = 3;

fn load_config(args: Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.num_sets {
        cfg.num_sets = v;
    }
    if let Some(v) = args.weights {
        cfg.weights = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.instances {
        cfg.instances = v;
    }
    if let Some(v) = args.iters {
        cfg.iters = v;
    }
    if let Some(v) = args.algs {
        cfg.algorithms = v;
    }
    if let Some(v) = args.out {
        cfg.output_path = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load_config(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let table = match run_experiment(&cfg) {
        Ok(t) => t,
        Err(e @ Error::ZeroInitialResidual) => {
            eprintln!("error: every instance skipped: {e}");
            return ExitCode::from(EXIT_METRIC);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let (csv, cols) = match emit_plot_data(&table, &cfg.output_path) {
        Ok(paths) => paths,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let last = table.iters();
    for (alg, curve) in table.algorithms.iter().zip(&table.curves) {
        println!("{alg:>3}  mean dB at iteration {last}: {:.4}", curve[last]);
    }
    println!("wrote {} and {}", csv.display(), cols.display());
    if !table.skipped_seeds.is_empty() {
        eprintln!(
            "warning: skipped seeds {:?} (starting point already fixed, relative error undefined)",
            table.skipped_seeds
        );
        return ExitCode::from(EXIT_METRIC);
    }
    ExitCode::SUCCESS
}
