use std::path::PathBuf;
use std::time::Instant;

use clap::Args as ClapArgs;
use poet::panel::ReturnPanel;
use poet::selection::{cross_validate_c, min_eigenvalue_curve, CvConfig, SplitKind};
use poet::threshold::ThresholdStyle;
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
    /// Number of factors to remove before cross-validating. Omit for
    /// data-driven selection.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 8)]
    max_k: usize,
    #[arg(long, default_value = "ic1")]
    ic: String,
    /// Shrinkage rule.
    #[arg(long, default_value = "soft")]
    rule: String,
    #[arg(long, default_value_t = 3.7)]
    scad_a: f64,
    #[arg(long, default_value_t = 1.0)]
    al_eta: f64,
    /// Fold repetitions.
    #[arg(long, default_value_t = 10)]
    cv_folds: usize,
    /// Grid points on [C_min + eps, M].
    #[arg(long, default_value_t = 50)]
    cv_grid_points: usize,
    #[arg(long, default_value_t = 0.05)]
    cv_epsilon: f64,
    /// Time-split scheme: block or uniform.
    #[arg(long, default_value = "block")]
    split: String,
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
    k: Option<usize>,
    max_k: usize,
    ic: String,
    rule: String,
    cv_folds: usize,
    cv_grid_points: usize,
    cv_epsilon: f64,
    split: String,
}

#[derive(Debug, Serialize)]
struct Results {
    p: usize,
    t: usize,
    k_used: usize,
    c_star: f64,
    c_min: f64,
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
        k: config::overlay_opt(args.k, &file.k),
        max_k: config::overlay(args.max_k, &file.max_k),
        ic: config::overlay(args.ic, &file.ic),
        rule: config::overlay(args.rule, &file.rule),
        cv_folds: config::overlay(args.cv_folds, &file.cv_folds),
        cv_grid_points: config::overlay(args.cv_grid_points, &file.cv_grid_points),
        cv_epsilon: config::overlay(args.cv_epsilon, &file.cv_epsilon),
        split: args.split,
    };
    let seed = config::overlay(args.seed, &file.seed);
    let out = config::resolve_out_dir(config::overlay_opt(args.out, &file.out));
    ensure_dir(&out)?;

    let orientation = super::parse_orientation(&resolved.orientation)?;
    let rule = super::parse_rule(&resolved.rule, args.scad_a, args.al_eta)?;
    let variant = super::parse_ic(&resolved.ic)?;
    let split = match resolved.split.to_ascii_lowercase().as_str() {
        "block" => SplitKind::ContiguousBlock,
        "uniform" => SplitKind::Uniform,
        other => {
            return Err(PoetError::InvalidParameter(format!(
                "unknown split '{other}' (expected block or uniform)"
            )))
        }
    };

    let panel = ReturnPanel::load_csv(&panel_path, orientation)?.demean();
    let k_used = match resolved.k {
        Some(k) => k,
        None => poet::factors::select_num_factors(&panel, resolved.max_k, variant)?.k_hat,
    };
    let fit = poet::factors::estimate_factors(&panel, k_used)?;

    let cfg = CvConfig {
        h: resolved.cv_folds,
        grid_points: resolved.cv_grid_points,
        epsilon: resolved.cv_epsilon,
        seed,
        split,
    };
    let (c_star, cv_curve) = cross_validate_c(&fit.residuals, rule, &cfg)?;
    let c_min = poet::selection::c_min(&fit.residuals, rule, 1e-3)?;

    let rows: Vec<Vec<String>> = cv_curve
        .iter()
        .map(|(c, s)| vec![poet::export::fmt_f64(*c), poet::export::fmt_f64(*s)])
        .collect();
    poet::export::write_records_csv(&out.join("cv_curve.csv"), &["c", "score"], &rows)?;

    // Minimum-eigenvalue curve over [0, just past the grid top].
    let top = cv_curve.last().map(|(c, _)| *c).unwrap_or(1.0);
    let grid: Vec<f64> = (0..=60).map(|i| top * 1.05 * i as f64 / 60.0).collect();
    let curve = min_eigenvalue_curve(&fit.residuals, ThresholdStyle::AdaptiveTheta, rule, &grid)?;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|(c, l)| vec![poet::export::fmt_f64(*c), poet::export::fmt_f64(*l)])
        .collect();
    poet::export::write_records_csv(&out.join("mineig_curve.csv"), &["c", "lambda_min"], &rows)?;

    let results = Results {
        p: panel.num_assets(),
        t: panel.num_periods(),
        k_used,
        c_star,
        c_min,
        files: vec!["cv_curve.csv".into(), "mineig_curve.csv".into()],
    };
    write_meta(&out, "cv", seed, resolved, results, start.elapsed().as_secs_f64())?;
    println!("C* = {c_star:.6} (C_min = {c_min:.6}, K = {k_used})");
    Ok(())
}
