use std::path::PathBuf;
use std::time::Instant;

use clap::Args as ClapArgs;
use nalgebra::DMatrix;
use poet::panel::ReturnPanel;
use poet::sim::CalibrationParams;
use poet::{PoetError, Result};
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::output::{ensure_dir, write_meta};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Input panel CSV of excess returns.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Panel layout: cols or rows.
    #[arg(long, default_value = "cols")]
    orientation: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    panel: PathBuf,
    orientation: String,
}

/// Fits the three-factor generator of the simulation studies to observed
/// data: loading moments from the factor fit, a VAR(1) for the factors,
/// and gamma/correlation moments from the residuals. Writes
/// `calibration.toml` usable with `simulate --design design1`.
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
    };
    let out = config::resolve_out_dir(config::overlay_opt(args.out, &file.out));
    ensure_dir(&out)?;

    let orientation = super::parse_orientation(&resolved.orientation)?;
    let panel = ReturnPanel::load_csv(&panel_path, orientation)?.demean();
    let (p, t) = (panel.num_assets(), panel.num_periods());
    if p < 4 || t < 10 {
        return Err(PoetError::InvalidParameter(format!(
            "calibration needs p >= 4 and T >= 10, got p = {p}, T = {t}"
        )));
    }

    let fit = poet::factors::estimate_factors(&panel, 3)?;

    // Loading moments.
    let mut mu_b = [0.0f64; 3];
    for j in 0..3 {
        mu_b[j] = fit.loadings.column(j).sum() / p as f64;
    }
    let mut sigma_b = [[0.0f64; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = 0.0;
            for i in 0..p {
                acc += (fit.loadings[(i, a)] - mu_b[a]) * (fit.loadings[(i, b)] - mu_b[b]);
            }
            sigma_b[a][b] = acc / p as f64;
        }
    }

    // VAR(1) least squares on the factor series: f_t = mu + Phi f_{t-1} + e.
    let (mu_f, phi, sigma_eps) = fit_var1(&fit.factors)?;

    // Error-moment fits.
    let sds: Vec<f64> = (0..p)
        .map(|i| {
            let row = fit.residuals.row(i);
            let mean = row.sum() / t as f64;
            (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64).sqrt()
        })
        .collect();
    let sd_mean = sds.iter().sum::<f64>() / p as f64;
    let sd_sd = (sds.iter().map(|v| (v - sd_mean).powi(2)).sum::<f64>() / p as f64).sqrt();

    let (sigma_u_raw, _) = poet::threshold::residual_moments(&fit.residuals)?;
    let mut corrs = Vec::new();
    for i in 0..p {
        for j in 0..i {
            let d = (sigma_u_raw[(i, i)] * sigma_u_raw[(j, j)]).sqrt();
            if d > 0.0 {
                let rho = sigma_u_raw[(i, j)] / d;
                if rho.abs() <= 0.95 {
                    corrs.push(rho);
                }
            }
        }
    }
    if corrs.is_empty() {
        return Err(PoetError::InvalidParameter(
            "no usable residual correlations for calibration".into(),
        ));
    }
    let corr_mean = corrs.iter().sum::<f64>() / corrs.len() as f64;
    let corr_sd = (corrs.iter().map(|v| (v - corr_mean).powi(2)).sum::<f64>()
        / corrs.len() as f64)
        .sqrt();

    let mut params = CalibrationParams {
        mu_b,
        sigma_b,
        mu_f,
        phi,
        sigma_eps,
        corr_mean,
        corr_sd,
        corr_cap: 0.95,
        ..CalibrationParams::default()
    };
    params.set_gamma_from_moments(sd_mean, sd_sd.max(1e-6 * sd_mean))?;
    params.validate()?;

    let toml_text = toml::to_string_pretty(&params)
        .map_err(|e| PoetError::InvalidParameter(format!("calibration serialization: {e}")))?;
    let path = out.join("calibration.toml");
    std::fs::write(&path, toml_text)?;

    write_meta(
        &out,
        "calibrate",
        0,
        resolved,
        serde_json::json!({
            "p": p,
            "t": t,
            "sd_mean": sd_mean,
            "sd_sd": sd_sd,
            "corr_mean": corr_mean,
            "corr_sd": corr_sd,
            "files": ["calibration.toml"],
        }),
        start.elapsed().as_secs_f64(),
    )?;
    println!("calibration written to {}", path.display());
    Ok(())
}

/// Multivariate least squares for `f_t = mu + Phi f_{t-1} + eps_t`.
fn fit_var1(factors: &DMatrix<f64>) -> Result<([f64; 3], [[f64; 3]; 3], [[f64; 3]; 3])> {
    let t = factors.nrows();
    let n = t - 1;
    // Regressors [1, f_{t-1}] (n x 4), responses f_t (n x 3).
    let mut x = DMatrix::zeros(n, 4);
    let mut y = DMatrix::zeros(n, 3);
    for r in 0..n {
        x[(r, 0)] = 1.0;
        for j in 0..3 {
            x[(r, j + 1)] = factors[(r, j)];
            y[(r, j)] = factors[(r + 1, j)];
        }
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let beta = xtx
        .lu()
        .solve(&xty)
        .ok_or(PoetError::SingularMatrix { lambda_min: 0.0 })?;
    let mut mu = [0.0; 3];
    let mut phi = [[0.0; 3]; 3];
    for j in 0..3 {
        mu[j] = beta[(0, j)];
        for i in 0..3 {
            phi[j][i] = beta[(i + 1, j)];
        }
    }
    let resid = &y - &x * beta;
    let mut sigma_eps = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            sigma_eps[a][b] = resid.column(a).dot(&resid.column(b)) / n as f64;
        }
    }
    Ok((mu, phi, sigma_eps))
}
