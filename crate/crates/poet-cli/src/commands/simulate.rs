use std::path::PathBuf;
use std::time::Instant;

use clap::Args as ClapArgs;
use poet::export::fmt_f64;
use poet::montecarlo::{aggregate, robustness_sweep, run_replications, DesignId, SimEstimator};
use poet::sim::CalibrationParams;
use poet::threshold::ShrinkageRule;
use poet::{PoetError, Result};
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::output::{ensure_dir, write_meta};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Design: design1, design2, model1, model2, model3.
    #[arg(long)]
    design: Option<String>,
    /// Cross-section size.
    #[arg(long, default_value_t = 100)]
    p: usize,
    /// Sample length.
    #[arg(long, default_value_t = 300)]
    t: usize,
    /// Replications.
    #[arg(long, default_value_t = 50)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimator specs, e.g. "poet:k=auto,c=0.5,rule=hard" or "sample";
    /// repeatable.
    #[arg(long = "estimator")]
    estimators: Vec<String>,
    /// Robustness sweep over the retained number of components
    /// (design2 layout) instead of the estimator comparison.
    #[arg(long, default_value_t = false)]
    k_sweep: bool,
    /// Calibration parameter TOML for design1 (defaults to the built-in
    /// calibration).
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    design: String,
    p: usize,
    t: usize,
    reps: u64,
    estimators: Vec<String>,
    k_sweep: bool,
    calibration: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Results {
    replication_rows: usize,
    files: Vec<String>,
}

pub fn run(args: Args) -> Result<()> {
    let start = Instant::now();
    let file = FileConfig::load(args.config.as_deref())?;
    let design_name = config::overlay_opt(args.design, &file.design).ok_or_else(|| {
        PoetError::InvalidParameter("--design (or config key 'design') is required".into())
    })?;
    let estimator_specs = {
        let flags = if args.estimators.is_empty() {
            vec!["poet:k=auto,c=0.5,rule=hard".to_string(), "sample".to_string()]
        } else {
            args.estimators
        };
        config::overlay(flags, &file.estimators)
    };
    let resolved = ResolvedConfig {
        design: design_name.clone(),
        p: config::overlay(args.p, &file.p),
        t: config::overlay(args.t, &file.t),
        reps: config::overlay(args.reps, &file.reps),
        estimators: estimator_specs,
        k_sweep: config::overlay(args.k_sweep, &file.k_sweep),
        calibration: config::overlay_opt(args.calibration, &file.calibration),
    };
    let seed = config::overlay(args.seed, &file.seed);
    let out = config::resolve_out_dir(config::overlay_opt(args.out, &file.out));
    ensure_dir(&out)?;
    if resolved.reps == 0 {
        return Err(PoetError::InvalidParameter("need reps >= 1".into()));
    }

    let design: DesignId = resolved.design.parse()?;
    let params = match &resolved.calibration {
        None => CalibrationParams::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| {
                PoetError::InvalidParameter(format!("calibration {}: {e}", path.display()))
            })?
        }
    };

    let mut files = Vec::new();
    if resolved.k_sweep {
        let ks = [1usize, 2, 3, 4, 5, 6, 7, 8];
        let outcomes = robustness_sweep(
            resolved.p,
            resolved.t,
            resolved.reps,
            seed,
            &ks,
            10,
            0.5,
            ShrinkageRule::Hard,
        )?;
        let rows: Vec<Vec<String>> = outcomes
            .iter()
            .map(|o| {
                vec![
                    o.rep.to_string(),
                    o.k.to_string(),
                    fmt_f64(o.sigma_u_spectral),
                    fmt_f64(o.relative_spectral),
                ]
            })
            .collect();
        poet::export::write_records_csv(
            &out.join("replications.csv"),
            &["rep", "k", "sigma_u_spectral", "relative_spectral"],
            &rows,
        )?;
        let means_u = poet::montecarlo::sweep_means(&outcomes, |o| o.sigma_u_spectral);
        let means_rel = poet::montecarlo::sweep_means(&outcomes, |o| o.relative_spectral);
        let rows: Vec<Vec<String>> = means_u
            .iter()
            .zip(means_rel.iter())
            .map(|((k, mu), (_, mr))| vec![k.to_string(), fmt_f64(*mu), fmt_f64(*mr)])
            .collect();
        poet::export::write_records_csv(
            &out.join("aggregates.csv"),
            &["k", "mean_sigma_u_spectral", "mean_relative_spectral"],
            &rows,
        )?;
        files.push("replications.csv".into());
        files.push("aggregates.csv".into());
        let results = Results {
            replication_rows: outcomes.len(),
            files,
        };
        write_meta(&out, "simulate", seed, resolved, results, start.elapsed().as_secs_f64())?;
        println!("k-sweep complete -> {}", out.display());
        return Ok(());
    }

    let estimators: Vec<SimEstimator> = resolved
        .estimators
        .iter()
        .map(|s| super::parse_sim_estimator(s))
        .collect::<Result<_>>()?;
    let outcomes = run_replications(
        design,
        &params,
        resolved.p,
        resolved.t,
        resolved.reps,
        seed,
        &estimators,
    )?;

    let fmt_opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.rep.to_string(),
                o.estimator.clone(),
                o.k_used.to_string(),
                fmt_f64(o.report.weighted_quadratic),
                fmt_f64(o.report.max_abs),
                fmt_f64(o.report.spectral),
                fmt_opt(o.report.precision_spectral),
                fmt_f64(o.report.sigma_u_spectral),
                fmt_opt(o.report.sigma_u_precision_spectral),
                fmt_f64(o.report.relative_spectral),
                fmt_opt(o.report.subspace_distance),
            ]
        })
        .collect();
    poet::export::write_records_csv(
        &out.join("replications.csv"),
        &[
            "rep",
            "estimator",
            "k_used",
            "weighted_quadratic",
            "max_abs",
            "spectral",
            "precision_spectral",
            "sigma_u_spectral",
            "sigma_u_precision_spectral",
            "relative_spectral",
            "subspace_distance",
        ],
        &rows,
    )?;
    let agg = aggregate(&outcomes);
    let rows: Vec<Vec<String>> = agg
        .iter()
        .map(|r| {
            vec![
                r.estimator.clone(),
                r.metric.clone(),
                fmt_f64(r.mean),
                fmt_f64(r.sd),
                r.n.to_string(),
            ]
        })
        .collect();
    poet::export::write_records_csv(
        &out.join("aggregates.csv"),
        &["estimator", "metric", "mean", "sd", "n"],
        &rows,
    )?;
    files.push("replications.csv".into());
    files.push("aggregates.csv".into());

    let results = Results {
        replication_rows: outcomes.len(),
        files,
    };
    write_meta(&out, "simulate", seed, resolved, results, start.elapsed().as_secs_f64())?;
    println!("simulation complete -> {}", out.display());
    Ok(())
}
