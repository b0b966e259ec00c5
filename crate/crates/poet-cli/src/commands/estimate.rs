use std::path::PathBuf;
use std::time::Instant;

use clap::Args as ClapArgs;
use poet::export::write_matrix_csv;
use poet::panel::ReturnPanel;
use poet::selection::{cross_validate_c, CvConfig};
use poet::threshold::ThresholdSpec;
use poet::{poet as run_poet, precision_woodbury, KChoice, PoetError, Result};
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::output::{ensure_dir, indexed_labels, write_meta};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Input panel CSV.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Panel layout: cols (assets as columns) or rows.
    #[arg(long, default_value = "cols")]
    orientation: String,
    /// Fixed number of factors. Omit for data-driven selection.
    #[arg(long)]
    k: Option<usize>,
    /// Upper bound for data-driven selection.
    #[arg(long, default_value_t = 8)]
    max_k: usize,
    /// Selection criterion (ic1 or ic2).
    #[arg(long, default_value = "ic1")]
    ic: String,
    /// Threshold constant. Ignored when --cv is set.
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    /// Choose the threshold constant by cross-validation.
    #[arg(long, default_value_t = false)]
    cv: bool,
    /// Shrinkage rule: hard, soft, scad, adaptive-lasso.
    #[arg(long, default_value = "soft")]
    rule: String,
    #[arg(long, default_value_t = 3.7)]
    scad_a: f64,
    #[arg(long, default_value_t = 1.0)]
    al_eta: f64,
    /// Threshold style: theta, correlation, constant.
    #[arg(long, default_value = "theta")]
    style: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: POET_OUT_DIR or '.').
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file; its values override flags.
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
    c: f64,
    cv: bool,
    rule: String,
    scad_a: f64,
    al_eta: f64,
    style: String,
}

#[derive(Debug, Serialize)]
struct Results {
    p: usize,
    t: usize,
    k_used: usize,
    c_used: f64,
    omega: f64,
    woodbury_residual: Option<f64>,
    precision_error: Option<String>,
    exact_low_rank: Option<bool>,
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
        c: config::overlay(args.c, &file.c),
        cv: config::overlay(args.cv, &file.cv),
        rule: config::overlay(args.rule, &file.rule),
        scad_a: config::overlay(args.scad_a, &file.scad_a),
        al_eta: config::overlay(args.al_eta, &file.al_eta),
        style: config::overlay(args.style, &file.style),
    };
    let seed = config::overlay(args.seed, &file.seed);
    let out = config::resolve_out_dir(config::overlay_opt(args.out, &file.out));
    ensure_dir(&out)?;

    let orientation = super::parse_orientation(&resolved.orientation)?;
    let rule = super::parse_rule(&resolved.rule, resolved.scad_a, resolved.al_eta)?;
    let style = super::parse_style(&resolved.style)?;
    let ic = super::parse_ic(&resolved.ic)?;

    let panel = ReturnPanel::load_csv(&panel_path, orientation)?.demean();
    let (p, t) = (panel.num_assets(), panel.num_periods());

    let k_choice = match resolved.k {
        Some(k) => KChoice::fixed(k),
        None => KChoice::Auto {
            max_factors: resolved.max_k,
            variant: ic,
        },
    };

    // Cross-validate the constant on the residuals of the resolved fit.
    let (c_used, cv_curve) = if resolved.cv {
        let k_used = match k_choice {
            KChoice::Fixed { k } => k,
            KChoice::Auto {
                max_factors,
                variant,
            } => poet::factors::select_num_factors(&panel, max_factors, variant)?.k_hat,
        };
        let fit = poet::factors::estimate_factors(&panel, k_used)?;
        let cfg = CvConfig {
            seed,
            ..CvConfig::default()
        };
        let (c_star, curve) = cross_validate_c(&fit.residuals, rule, &cfg)?;
        (c_star, Some(curve))
    } else {
        (resolved.c, None)
    };

    let omega = poet::threshold::omega(p, t);
    let spec = ThresholdSpec::new(
        c_used,
        style,
        match style {
            poet::threshold::ThresholdStyle::Constant => 1.0,
            _ => omega,
        },
    )?;
    let estimate = run_poet(&panel, k_choice, &spec, rule)?;
    // The covariance estimate stands on its own; a singular idiosyncratic
    // part only suppresses the precision outputs (the C_min search is the
    // remedy, not a failed run).
    let (estimate, precision_error) = match precision_woodbury(estimate.clone()) {
        Ok(e) => (e, None),
        Err(err) => {
            log::warn!("precision unavailable: {err}");
            (estimate, Some(err.to_string()))
        }
    };

    let ids: Vec<String> = panel.asset_ids().to_vec();
    let times: Vec<String> = panel.timestamps().to_vec();
    let factor_names = indexed_labels("factor_", estimate.k_used);

    let mut files = Vec::new();
    let mut write = |name: &str, m: &nalgebra::DMatrix<f64>, rows: &[String], cols: &[String]| -> Result<()> {
        write_matrix_csv(&out.join(name), m, rows, cols)?;
        files.push(name.to_string());
        Ok(())
    };
    write("Sigma_hat.csv", estimate.sigma_hat.matrix(), &ids, &ids)?;
    write("Sigma_u_hat.csv", estimate.sigma_u_hat.matrix(), &ids, &ids)?;
    if let Some(prec) = &estimate.precision_sigma {
        write("precision.csv", prec.matrix(), &ids, &ids)?;
    }
    if let Some(prec_u) = &estimate.precision_sigma_u {
        write("precision_u.csv", prec_u.matrix(), &ids, &ids)?;
    }
    write("loadings.csv", &estimate.factor_fit.loadings, &ids, &factor_names)?;
    write("factors.csv", &estimate.factor_fit.factors, &times, &factor_names)?;

    if let Some(sel) = &estimate.k_selection {
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
        files.push("k_curve.csv".into());
    }
    if let Some(curve) = &cv_curve {
        let rows: Vec<Vec<String>> = curve
            .iter()
            .map(|(c, s)| vec![poet::export::fmt_f64(*c), poet::export::fmt_f64(*s)])
            .collect();
        poet::export::write_records_csv(&out.join("cv_curve.csv"), &["c", "score"], &rows)?;
        files.push("cv_curve.csv".into());
    }

    let results = Results {
        p,
        t,
        k_used: estimate.k_used,
        c_used,
        omega,
        woodbury_residual: estimate.woodbury_residual,
        precision_error,
        exact_low_rank: estimate.k_selection.as_ref().map(|s| s.exact_low_rank),
        files,
    };
    write_meta(
        &out,
        "estimate",
        seed,
        resolved,
        results,
        start.elapsed().as_secs_f64(),
    )?;
    println!(
        "estimate: p={p}, T={t}, K={}, C={:.6} -> {}",
        estimate.k_used,
        c_used,
        out.display()
    );
    Ok(())
}
