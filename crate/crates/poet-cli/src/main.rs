//! Command-line interface: batch entry points for estimation, factor-count
//! selection, threshold cross-validation, simulation studies, and the
//! rolling portfolio backtest.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use poet::PoetError;

#[derive(Parser)]
#[command(
    name = "poet",
    version,
    about = "Large covariance and precision matrix estimation for approximate factor models",
    after_help = "Output directory defaults to the POET_OUT_DIR environment variable, then '.'.\n\
                  Values given in --config override the corresponding command-line flags."
)]
struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    /// Results are independent of the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate covariance and precision matrices from a panel CSV.
    Estimate(commands::estimate::Args),
    /// Select the number of factors by the penalized least-squares
    /// criterion.
    SelectK(commands::select_k::Args),
    /// Cross-validate the threshold constant on the factor-fit residuals.
    Cv(commands::cv::Args),
    /// Run a seeded Monte Carlo study on a synthetic design.
    Simulate(commands::simulate::Args),
    /// Rolling minimum-variance portfolio backtest.
    Backtest(commands::backtest::Args),
    /// Fit generator parameters (loadings, factor VAR, error moments) from
    /// a panel.
    Calibrate(commands::calibrate::Args),
}

/// Exit codes: 0 ok, 2 usage/input error, 3 numeric failure, 4 internal.
fn exit_code(err: &PoetError) -> i32 {
    match err {
        PoetError::Parse { .. }
        | PoetError::InvalidParameter(_)
        | PoetError::DimensionMismatch { .. }
        | PoetError::NonFinite { .. } => 2,
        PoetError::SingularMatrix { .. }
        | PoetError::SingularIdiosyncratic { .. }
        | PoetError::NonStationary { .. }
        | PoetError::DegenerateObjective { .. }
        | PoetError::EmptyGrid { .. } => 3,
        PoetError::Io(_) | PoetError::Csv(_) => 4,
    }
}

fn kind_name(err: &PoetError) -> &'static str {
    match err {
        PoetError::Parse { .. } => "parse",
        PoetError::InvalidParameter(_) => "invalid_parameter",
        PoetError::DimensionMismatch { .. } => "dimension_mismatch",
        PoetError::NonFinite { .. } => "non_finite",
        PoetError::SingularMatrix { .. } => "singular_matrix",
        PoetError::SingularIdiosyncratic { .. } => "singular_idiosyncratic",
        PoetError::NonStationary { .. } => "non_stationary",
        PoetError::DegenerateObjective { .. } => "degenerate_objective",
        PoetError::EmptyGrid { .. } => "empty_grid",
        PoetError::Io(_) => "io",
        PoetError::Csv(_) => "csv",
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::warn!("could not configure thread pool: {e}");
        }
    }

    let result = match cli.command {
        Command::Estimate(args) => commands::estimate::run(args),
        Command::SelectK(args) => commands::select_k::run(args),
        Command::Cv(args) => commands::cv::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Backtest(args) => commands::backtest::run(args),
        Command::Calibrate(args) => commands::calibrate::run(args),
    };

    if let Err(err) = result {
        let code = exit_code(&err);
        let payload = serde_json::json!({
            "error": err.to_string(),
            "kind": kind_name(&err),
            "exit_code": code,
        });
        eprintln!("{payload}");
        std::process::exit(code);
    }
}
