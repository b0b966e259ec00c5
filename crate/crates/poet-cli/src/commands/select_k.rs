use std::path::PathBuf;
use std::time::Instant;

use clap::Args as ClapArgs;
use poet::panel::ReturnPanel;
use poet::{PoetError, Result};
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::output::{ensure_dir, write_meta};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Input panel CSV.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Panel layout: cols or rows.
    #[arg(long, default_value = "cols")]
    orientation: String,
    /// Upper bound for the search.
    #[arg(long, default_value_t = 8)]
    max_k: usize,
    /// Criterion variant (ic1 or ic2).
    #[arg(long, default_value = "ic1")]
    ic: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    panel: PathBuf,
    orientation: String,
    max_k: usize,
    ic: String,
}

#[derive(Debug, Serialize)]
struct Results {
    p: usize,
    t: usize,
    k_hat: usize,
    exact_low_rank: bool,
    files: Vec<String>,
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
    let resolved = ResolvedConfig {
        panel: panel_path.clone(),
        orientation: config::overlay(args.orientation, &file.orientation),
        max_k: config::overlay(args.max_k, &file.max_k),
        ic: config::overlay(args.ic, &file.ic),
    };
    let out = config::resolve_out_dir(config::overlay_opt(args.out, &file.out));
    ensure_dir(&out)?;

    let orientation = super::parse_orientation(&resolved.orientation)?;
    let variant = super::parse_ic(&resolved.ic)?;
    let panel = ReturnPanel::load_csv(&panel_path, orientation)?.demean();
    let sel = poet::factors::select_num_factors(&panel, resolved.max_k, variant)?;

    let rows: Vec<Vec<String>> = sel
        .curve
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                poet::export::fmt_f64(r.log_residual),
                poet::export::fmt_f64(r.penalty),
                poet::export::fmt_f64(r.total),
            ]
        })
        .collect();
    poet::export::write_records_csv(
        &out.join("k_curve.csv"),
        &["k", "log_residual", "penalty", "total"],
        &rows,
    )?;

    let results = Results {
        p: panel.num_assets(),
        t: panel.num_periods(),
        k_hat: sel.k_hat,
        exact_low_rank: sel.exact_low_rank,
        files: vec!["k_curve.csv".into()],
    };
    write_meta(&out, "select-k", 0, resolved, results, start.elapsed().as_secs_f64())?;
    println!("{}", sel.k_hat);
    Ok(())
}
