use std::path::PathBuf;
use std::time::Instant;

use clap::Args as ClapArgs;
use poet::export::fmt_f64;
use poet::panel::ReturnPanel;
use poet::portfolio::{backtest as run_backtest, BacktestConfig};
use poet::{PoetError, Result};
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::output::{ensure_dir, write_meta};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Input panel CSV (raw returns; each window is demeaned internally).
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Panel layout: cols or rows.
    #[arg(long, default_value = "cols")]
    orientation: String,
    /// Trailing fit window length.
    #[arg(long, default_value_t = 252)]
    window: usize,
    /// Holding period between refits.
    #[arg(long, default_value_t = 21)]
    rebalance: usize,
    /// Estimator specs, e.g. "poet:k=auto,c=cv,rule=soft" or "sfm:k=auto"
    /// or "sample"; repeatable. Default compares POET with the strict
    /// factor model.
    #[arg(long = "estimator")]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    panel: PathBuf,
    orientation: String,
    window: usize,
    rebalance: usize,
    estimators: Vec<String>,
}

pub fn run(args: Args) -> Result<()> {
    let start = Instant::now();
    let file = FileConfig::load(args.config.as_deref())?;
    let panel_path = config::overlay_opt(args.panel, &file.panel).ok_or_else(|| {
        PoetError::InvalidParameter("--panel (or config key 'panel') is required".into())
    })?;
    if !panel_path.exists() {
        return Err(PoetError::InvalidParameter(format!(
            "panel file not found: {}",
            panel_path.display()
        )));
    }
    let estimator_specs = {
        let flags = if args.estimators.is_empty() {
            vec![
                "poet:k=auto,c=cv,rule=soft".to_string(),
                "sfm:k=auto".to_string(),
            ]
        } else {
            args.estimators
        };
        config::overlay(flags, &file.estimators)
    };
    let resolved = ResolvedConfig {
        panel: panel_path.clone(),
        orientation: config::overlay(args.orientation, &file.orientation),
        window: config::overlay(args.window, &file.window),
        rebalance: config::overlay(args.rebalance, &file.rebalance),
        estimators: estimator_specs,
    };
    let seed = config::overlay(args.seed, &file.seed);
    let out = config::resolve_out_dir(config::overlay_opt(args.out, &file.out));
    ensure_dir(&out)?;

    let orientation = super::parse_orientation(&resolved.orientation)?;
    let panel = ReturnPanel::load_csv(&panel_path, orientation)?;
    let estimators = resolved
        .estimators
        .iter()
        .map(|s| super::parse_portfolio_estimator(s, seed))
        .collect::<Result<Vec<_>>>()?;

    let bt_config = BacktestConfig {
        window: resolved.window,
        rebalance_every: resolved.rebalance,
        estimators,
    };
    let report = run_backtest(&panel, &bt_config)?;

    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let rows: Vec<Vec<String>> = report
        .records
        .iter()
        .map(|r| {
            vec![
                r.period.to_string(),
                r.eval_start.to_string(),
                r.estimator.clone(),
                opt(r.realized_risk),
                opt(r.empirical_risk),
                opt(r.gross_exposure),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    poet::export::write_records_csv(
        &out.join("periods.csv"),
        &[
            "period",
            "eval_start",
            "estimator",
            "realized_risk",
            "empirical_risk",
            "gross_exposure",
            "error",
        ],
        &rows,
    )?;

    let summary = serde_json::json!({
        "periods": report.periods,
        "failed_periods": report.failed_periods,
        "comparisons": report.comparisons,
    });
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)
            .map_err(|e| PoetError::InvalidParameter(format!("summary serialization: {e}")))?,
    )?;

    write_meta(
        &out,
        "backtest",
        seed,
        resolved,
        serde_json::json!({
            "periods": report.periods,
            "files": ["periods.csv", "summary.json"],
        }),
        start.elapsed().as_secs_f64(),
    )?;
    for c in &report.comparisons {
        println!(
            "{} vs {}: win fraction {:.3} over {} periods",
            c.challenger, c.baseline, c.win_fraction, c.periods
        );
    }
    println!("backtest complete -> {}", out.display());
    Ok(())
}
