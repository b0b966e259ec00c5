//! Replication harness for the simulation studies: design dispatch,
//! seeded replication batches, and the robustness sweep over the number
//! of factors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PoetError, Result};
use crate::estimator::{
    evaluate_against_truth, poet, poet_known_factors, ErrorReport, KChoice, PoetEstimate,
};
use crate::factors::estimate_factors;
use crate::linalg::{norm_spectral, relative_spectral_error, SymMatrix};
use crate::panel::{sample_covariance, ReturnPanel};
use crate::rng::mix;
use crate::sim::{
    generate_ar1_sigma, generate_banded_sigma_u, simulate_calibrated, simulate_design2,
    simulate_factorless, CalibrationParams, TrueModel,
};
use crate::threshold::{residual_moments, ShrinkageRule, ThresholdSpec, ThresholdStyle};

/// The synthetic designs of the simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignId {
    /// Calibrated three-factor model with VAR(1) factors and a sparse
    /// calibrated error covariance.
    Design1,
    /// Three standard-normal factors with a banded error covariance.
    Design2,
    /// One standard-normal factor with the banded error covariance.
    Model1,
    /// No factors; the covariance is the banded matrix itself.
    Model2,
    /// No factors; cross-sectional AR(1) covariance with decay 0.85.
    Model3,
}

impl std::str::FromStr for DesignId {
    type Err = PoetError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "design1" => Ok(DesignId::Design1),
            "design2" => Ok(DesignId::Design2),
            "model1" => Ok(DesignId::Model1),
            "model2" => Ok(DesignId::Model2),
            "model3" => Ok(DesignId::Model3),
            other => Err(PoetError::InvalidParameter(format!(
                "unknown design '{other}' (expected design1, design2, model1, model2, model3)"
            ))),
        }
    }
}

impl std::fmt::Display for DesignId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            DesignId::Design1 => "design1",
            DesignId::Design2 => "design2",
            DesignId::Model1 => "model1",
            DesignId::Model2 => "model2",
            DesignId::Model3 => "model3",
        };
        write!(f, "{name}")
    }
}

/// Draws one panel plus ground truth from a design.
pub fn simulate_design(
    id: DesignId,
    params: &CalibrationParams,
    p: usize,
    t: usize,
    seed: u64,
) -> Result<(ReturnPanel, TrueModel)> {
    match id {
        DesignId::Design1 => simulate_calibrated(params, p, t, seed),
        DesignId::Design2 => simulate_design2(p, t, 3, seed),
        DesignId::Model1 => simulate_design2(p, t, 1, seed),
        DesignId::Model2 => simulate_factorless(&generate_banded_sigma_u(p, 0.5, 9), t, seed),
        DesignId::Model3 => simulate_factorless(&generate_ar1_sigma(p, 0.85), t, seed),
    }
}

/// Estimators the simulation harness can compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "estimator")]
pub enum SimEstimator {
    Poet {
        k: KChoice,
        c: f64,
        rule: ShrinkageRule,
        style: ThresholdStyle,
    },
    /// Estimator with the true factor series observed; the threshold rate
    /// omits the factor-estimation term.
    KnownFactors { c: f64, rule: ShrinkageRule },
    /// Raw sample covariance (its error report compares the same matrix on
    /// both the covariance and idiosyncratic slots).
    Sample,
}

impl SimEstimator {
    pub fn label(&self) -> String {
        match self {
            SimEstimator::Poet { k, c, rule, style } => {
                let ks = match k {
                    KChoice::Fixed { k } => format!("k{k}"),
                    KChoice::Auto { variant, .. } => format!("k-{variant}"),
                };
                let st = match style {
                    ThresholdStyle::AdaptiveTheta => "theta",
                    ThresholdStyle::Correlation => "corr",
                    ThresholdStyle::Constant => "const",
                };
                format!("poet-{ks}-c{c}-{rule}-{st}")
            }
            SimEstimator::KnownFactors { c, rule } => format!("known-factors-c{c}-{rule}"),
            SimEstimator::Sample => "sample".into(),
        }
    }

    fn fit(&self, panel: &ReturnPanel, truth: &TrueModel) -> Result<PoetEstimate> {
        let (p, t) = (panel.num_assets(), panel.num_periods());
        match self {
            SimEstimator::Poet { k, c, rule, style } => {
                let spec = ThresholdSpec::new(*c, *style, match style {
                    ThresholdStyle::Constant => 1.0,
                    _ => crate::threshold::omega(p, t),
                })?;
                poet(panel, *k, &spec, *rule)
            }
            SimEstimator::KnownFactors { c, rule } => {
                let omega = ((p as f64).ln() / t as f64).sqrt();
                let spec = ThresholdSpec::new(*c, ThresholdStyle::AdaptiveTheta, omega)?;
                poet_known_factors(panel, &truth.realized_factors, &spec, *rule)
            }
            SimEstimator::Sample => {
                let sam = sample_covariance(panel);
                let fit = estimate_factors(panel, 0)?;
                Ok(PoetEstimate {
                    sigma_hat: sam.clone(),
                    sigma_u_hat: sam.clone(),
                    low_rank: SymMatrix::zeros(p),
                    k_used: 0,
                    c_used: 0.0,
                    rule: ShrinkageRule::Hard,
                    spec: ThresholdSpec::constant(0.0)?,
                    factor_fit: fit,
                    k_selection: None,
                    precision_sigma_u: None,
                    precision_sigma: None,
                    woodbury_residual: None,
                })
            }
        }
    }
}

/// One replication's error report for one estimator.
#[derive(Debug, Clone, Serialize)]
pub struct RepOutcome {
    pub rep: u64,
    pub estimator: String,
    pub k_used: usize,
    pub report: ErrorReport,
}

/// Runs `reps` independent replications of a design, evaluating every
/// estimator against the generating truth. Replication `r` uses the
/// sub-seed `mix(seed, r)`, so results do not depend on scheduling.
pub fn run_replications(
    design: DesignId,
    params: &CalibrationParams,
    p: usize,
    t: usize,
    reps: u64,
    seed: u64,
    estimators: &[SimEstimator],
) -> Result<Vec<RepOutcome>> {
    let out: Result<Vec<Vec<RepOutcome>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (panel, truth) = simulate_design(design, params, p, t, mix(seed, rep))?;
            let panel = panel.demean();
            let mut rows = Vec::with_capacity(estimators.len());
            for est in estimators {
                let fitted = est.fit(&panel, &truth)?;
                let report = evaluate_against_truth(&fitted, &truth)?;
                rows.push(RepOutcome {
                    rep,
                    estimator: est.label(),
                    k_used: fitted.k_used,
                    report,
                });
            }
            Ok(rows)
        })
        .collect();
    Ok(out?.into_iter().flatten().collect())
}

/// Mean and standard deviation of one metric for one estimator.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub estimator: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    /// Replications contributing to the aggregate (inverse-based metrics
    /// can be absent on some replications).
    pub n: usize,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates replication outcomes into per-estimator metric rows.
pub fn aggregate(outcomes: &[RepOutcome]) -> Vec<AggregateRow> {
    let mut labels: Vec<String> = Vec::new();
    for o in outcomes {
        if !labels.contains(&o.estimator) {
            labels.push(o.estimator.clone());
        }
    }
    let metrics: [(&str, fn(&ErrorReport) -> Option<f64>); 8] = [
        ("weighted_quadratic", |r| Some(r.weighted_quadratic)),
        ("max_abs", |r| Some(r.max_abs)),
        ("spectral", |r| Some(r.spectral)),
        ("precision_spectral", |r| r.precision_spectral),
        ("sigma_u_spectral", |r| Some(r.sigma_u_spectral)),
        ("sigma_u_precision_spectral", |r| {
            r.sigma_u_precision_spectral
        }),
        ("relative_spectral", |r| Some(r.relative_spectral)),
        ("subspace_distance", |r| r.subspace_distance),
    ];
    let mut rows = Vec::new();
    for label in &labels {
        for (name, extract) in &metrics {
            let values: Vec<f64> = outcomes
                .iter()
                .filter(|o| &o.estimator == label)
                .filter_map(|o| extract(&o.report))
                .collect();
            if values.is_empty() {
                continue;
            }
            let (mean, sd) = mean_sd(&values);
            rows.push(AggregateRow {
                estimator: label.clone(),
                metric: (*name).to_string(),
                mean,
                sd,
                n: values.len(),
            });
        }
    }
    rows
}

/// One row of the robustness sweep over the number of factors.
#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub rep: u64,
    pub k: usize,
    /// `||Sigma_u_hat(K) - Sigma_u||` (spectral).
    pub sigma_u_spectral: f64,
    /// `||Sigma^{-1/2} Sigma_hat(K) Sigma^{-1/2} - I||` (spectral).
    pub relative_spectral: f64,
}

/// Robustness of the estimator to the number of retained components
/// (banded-error design): hard-thresholds the principal orthogonal
/// complement at every `K` with one threshold matrix held fixed across the
/// sweep, built from the residuals of a `theta_fit_k`-factor fit.
#[allow(clippy::too_many_arguments)]
pub fn robustness_sweep(
    p: usize,
    t: usize,
    reps: u64,
    seed: u64,
    ks: &[usize],
    theta_fit_k: usize,
    c: f64,
    rule: ShrinkageRule,
) -> Result<Vec<SweepOutcome>> {
    let out: Result<Vec<Vec<SweepOutcome>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (panel, truth) = simulate_design2(p, t, 3, mix(seed, rep))?;
            let panel = panel.demean();
            let fit = estimate_factors(&panel, theta_fit_k)?;
            let (_, theta) = residual_moments(&fit.residuals)?;
            let spec = ThresholdSpec::adaptive(c, p, t)?;
            let sam = sample_covariance(&panel);
            let mut rows = Vec::with_capacity(ks.len());
            for &k in ks {
                let (low_rank, r_k) = crate::estimator::principal_complement(&sam, k)?;
                let tau = crate::threshold::build_tau(&spec, &r_k, Some(&theta))?;
                let thr = crate::threshold::threshold_covariance(&r_k, &tau, rule)?;
                let sigma_hat = low_rank.add(&thr);
                rows.push(SweepOutcome {
                    rep,
                    k,
                    sigma_u_spectral: norm_spectral(&thr.sub(&truth.sigma_u)),
                    relative_spectral: relative_spectral_error(&sigma_hat, &truth.sigma)?,
                });
            }
            Ok(rows)
        })
        .collect();
    Ok(out?.into_iter().flatten().collect())
}

/// Mean of one sweep metric at each `K`.
pub fn sweep_means(outcomes: &[SweepOutcome], metric: impl Fn(&SweepOutcome) -> f64) -> Vec<(usize, f64)> {
    let mut ks: Vec<usize> = Vec::new();
    for o in outcomes {
        if !ks.contains(&o.k) {
            ks.push(o.k);
        }
    }
    ks.sort_unstable();
    ks.into_iter()
        .map(|k| {
            let vals: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.k == k)
                .map(&metric)
                .collect();
            (k, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::IcVariant;

    #[test]
    fn design_ids_parse_and_dispatch() {
        let params = CalibrationParams::default();
        for (name, id, k) in [
            ("design1", DesignId::Design1, 3),
            ("design2", DesignId::Design2, 3),
            ("model1", DesignId::Model1, 1),
            ("model2", DesignId::Model2, 0),
            ("model3", DesignId::Model3, 0),
        ] {
            let parsed: DesignId = name.parse().unwrap();
            assert_eq!(parsed, id);
            let (panel, truth) = simulate_design(id, &params, 12, 30, 1).unwrap();
            assert_eq!(panel.num_assets(), 12);
            assert_eq!(truth.k(), k);
        }
        assert!("modelx".parse::<DesignId>().is_err());
    }

    #[test]
    fn replications_are_deterministic_and_complete() {
        let params = CalibrationParams::default();
        let estimators = vec![
            SimEstimator::Poet {
                k: KChoice::auto(IcVariant::Ic1),
                c: 0.5,
                rule: ShrinkageRule::Soft,
                style: ThresholdStyle::AdaptiveTheta,
            },
            SimEstimator::Sample,
        ];
        let a = run_replications(DesignId::Design2, &params, 15, 40, 3, 9, &estimators).unwrap();
        let b = run_replications(DesignId::Design2, &params, 15, 40, 3, 9, &estimators).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.rep, y.rep);
            assert_eq!(x.estimator, y.estimator);
            assert_eq!(x.report.spectral, y.report.spectral);
        }
        let agg = aggregate(&a);
        // Aggregate mean equals the mean of the per-rep column.
        let spectral_rows: Vec<&RepOutcome> =
            a.iter().filter(|o| o.estimator == "sample").collect();
        let mean: f64 = spectral_rows.iter().map(|o| o.report.spectral).sum::<f64>() / 3.0;
        let agg_row = agg
            .iter()
            .find(|r| r.estimator == "sample" && r.metric == "spectral")
            .unwrap();
        assert!((agg_row.mean - mean).abs() <= 1e-12);
    }

    #[test]
    fn sweep_covers_all_k() {
        let outcomes =
            robustness_sweep(20, 60, 2, 5, &[1, 3, 5], 5, 0.5, ShrinkageRule::Hard).unwrap();
        assert_eq!(outcomes.len(), 6);
        let means = sweep_means(&outcomes, |o| o.sigma_u_spectral);
        assert_eq!(means.len(), 3);
        // Under-estimation is catastrophically worse than K = 3.
        assert!(means[0].1 > means[1].1);
    }
}
