//! Minimum-variance portfolios, risk metrics, and the rolling backtest.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PoetError, Result};
use crate::estimator::{poet, precision_woodbury, KChoice};
use crate::linalg::{norm_max, relative_spectral_error, spd_inverse, SymMatrix};
use crate::panel::{sample_covariance, ReturnPanel};
use crate::selection::{cross_validate_c, CvConfig};
use crate::threshold::{ShrinkageRule, ThresholdSpec, ThresholdStyle};

/// Fully-invested portfolio weights (`sum w_i = 1`).
#[derive(Debug, Clone)]
pub struct PortfolioWeights {
    pub w: DVector<f64>,
    /// Gross exposure `||w||_1` (reported, not constrained).
    pub gross_exposure: f64,
}

impl PortfolioWeights {
    fn from_unnormalized(x: DVector<f64>) -> Result<Self> {
        let denom = x.sum();
        if denom.abs() <= 1e-12 {
            return Err(PoetError::DegenerateObjective { value: denom });
        }
        let mut w = x / denom;
        // Pin the affine constraint exactly: absorb the rounding residue
        // into the largest-weight entry.
        let residue = 1.0 - w.sum();
        let mut imax = 0;
        for i in 1..w.len() {
            if w[i].abs() > w[imax].abs() {
                imax = i;
            }
        }
        w[imax] += residue;
        let gross_exposure = w.iter().map(|v| v.abs()).sum();
        Ok(Self { w, gross_exposure })
    }

    /// Portfolio variance under a covariance matrix.
    pub fn risk(&self, sigma: &SymMatrix) -> f64 {
        (sigma.matrix() * &self.w).dot(&self.w)
    }
}

/// Global minimum-variance weights `w = S^{-1} 1 / (1' S^{-1} 1)`.
pub fn min_variance_weights(sigma: &SymMatrix) -> Result<PortfolioWeights> {
    let p = sigma.dim();
    let ones = DVector::from_element(p, 1.0);
    let x = match sigma.matrix().clone().cholesky() {
        Some(chol) => chol.solve(&ones),
        None => {
            // Not PD; invert through the spectrum so singularity is caught
            // instead of amplifying rounding noise.
            let inv = spd_inverse(sigma).or_else(|_| {
                let spec = crate::linalg::eigh(sigma)?;
                let lmin = spec.eigenvalues[p - 1];
                let lmax = spec.eigenvalues[0].abs().max(lmin.abs());
                if spec.eigenvalues.iter().any(|l| l.abs() <= 1e-10 * lmax) {
                    return Err(PoetError::SingularMatrix { lambda_min: lmin });
                }
                // Invertible but indefinite: still well-defined algebra.
                let mut v = spec.eigenvectors.clone();
                for j in 0..p {
                    let s = 1.0 / spec.eigenvalues[j];
                    for i in 0..p {
                        v[(i, j)] *= s;
                    }
                }
                SymMatrix::from_matrix(&v * spec.eigenvectors.transpose())
            })?;
            inv.matrix() * &ones
        }
    };
    PortfolioWeights::from_unnormalized(x)
}

/// Same weights computed from a precomputed precision matrix.
pub fn min_variance_weights_from_precision(precision: &SymMatrix) -> Result<PortfolioWeights> {
    let p = precision.dim();
    let ones = DVector::from_element(p, 1.0);
    PortfolioWeights::from_unnormalized(precision.matrix() * ones)
}

/// Actual, empirical and oracle risk of a portfolio.
#[derive(Debug, Clone, Serialize)]
pub struct RiskMetrics {
    /// `w' Sigma w` under the true covariance.
    pub actual: f64,
    /// `w' Sigma_hat w` under the estimated covariance.
    pub empirical: f64,
    /// Risk of the minimum-variance portfolio built from the truth.
    pub oracle: f64,
    /// `actual - oracle`, non-negative.
    pub regret: f64,
}

pub fn risk_metrics(
    w: &PortfolioWeights,
    sigma_true: &SymMatrix,
    sigma_hat: &SymMatrix,
) -> Result<RiskMetrics> {
    let oracle_w = min_variance_weights(sigma_true)?;
    let actual = w.risk(sigma_true);
    let oracle = oracle_w.risk(sigma_true);
    Ok(RiskMetrics {
        actual,
        empirical: w.risk(sigma_hat),
        oracle,
        regret: actual - oracle,
    })
}

/// Both sides of the risk-error inequalities:
/// `|w'S_hat w - w'S w| <= ||S_hat - S||_max ||w||_1^2` and
/// `|w'S_hat w / w'S w - 1| <= ||S^{-1/2} S_hat S^{-1/2} - I||`.
#[derive(Debug, Clone, Serialize)]
pub struct RiskErrorBounds {
    pub absolute_lhs: f64,
    pub absolute_rhs: f64,
    pub relative_lhs: f64,
    pub relative_rhs: f64,
}

impl RiskErrorBounds {
    pub fn holds(&self) -> bool {
        let slack = 1.0 + 1e-12;
        self.absolute_lhs <= self.absolute_rhs * slack + 1e-15
            && self.relative_lhs <= self.relative_rhs * slack + 1e-15
    }
}

pub fn risk_error_bounds(
    w: &PortfolioWeights,
    sigma_hat: &SymMatrix,
    sigma_true: &SymMatrix,
) -> Result<RiskErrorBounds> {
    let actual = w.risk(sigma_true);
    let empirical = w.risk(sigma_hat);
    let diff = sigma_hat.sub(sigma_true);
    Ok(RiskErrorBounds {
        absolute_lhs: (empirical - actual).abs(),
        absolute_rhs: norm_max(&diff) * w.gross_exposure * w.gross_exposure,
        relative_lhs: (empirical / actual - 1.0).abs(),
        relative_rhs: relative_spectral_error(sigma_hat, sigma_true)?,
    })
}

/// How the threshold constant is chosen inside a backtest estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CSelect {
    Fixed { c: f64 },
    CrossValidate { h: usize, grid_points: usize, seed: u64 },
}

impl Default for CSelect {
    fn default() -> Self {
        CSelect::Fixed { c: 0.5 }
    }
}

/// Covariance estimators the backtest can run side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "estimator")]
pub enum PortfolioEstimator {
    Poet {
        k: KChoice,
        c: CSelect,
        rule: ShrinkageRule,
        style: ThresholdStyle,
    },
    /// Strict factor model: the idiosyncratic part is forced diagonal.
    StrictFactor { k: KChoice },
    /// Raw sample covariance.
    Sample,
}

impl PortfolioEstimator {
    pub fn label(&self) -> String {
        match self {
            PortfolioEstimator::Poet { k, c, rule, .. } => {
                let ks = match k {
                    KChoice::Fixed { k } => format!("k{k}"),
                    KChoice::Auto { variant, .. } => format!("k-{variant}"),
                };
                let cs = match c {
                    CSelect::Fixed { c } => format!("c{c}"),
                    CSelect::CrossValidate { .. } => "cv".to_string(),
                };
                format!("poet-{ks}-{cs}-{rule}")
            }
            PortfolioEstimator::StrictFactor { k } => match k {
                KChoice::Fixed { k } => format!("sfm-k{k}"),
                KChoice::Auto { variant, .. } => format!("sfm-k-{variant}"),
            },
            PortfolioEstimator::Sample => "sample".into(),
        }
    }

    /// Fits the estimator on a demeaned window and returns the covariance
    /// together with its precision when one is available.
    pub fn fit(&self, window: &ReturnPanel) -> Result<(SymMatrix, Option<SymMatrix>)> {
        let (p, t) = (window.num_assets(), window.num_periods());
        match self {
            PortfolioEstimator::Poet { k, c, rule, style } => {
                let c_value = match *c {
                    CSelect::Fixed { c } => c,
                    CSelect::CrossValidate {
                        h,
                        grid_points,
                        seed,
                    } => {
                        let (k_used, _) = match *k {
                            KChoice::Fixed { k } => (k, None),
                            KChoice::Auto {
                                max_factors,
                                variant,
                            } => {
                                let sel = crate::factors::select_num_factors(
                                    window,
                                    max_factors,
                                    variant,
                                )?;
                                (sel.k_hat, Some(sel))
                            }
                        };
                        let fit = crate::factors::estimate_factors(window, k_used)?;
                        let cfg = CvConfig {
                            h,
                            grid_points,
                            seed,
                            ..CvConfig::default()
                        };
                        cross_validate_c(&fit.residuals, *rule, &cfg)?.0
                    }
                };
                let spec = ThresholdSpec::new(c_value, *style, crate::threshold::omega(p, t))?;
                let est = poet(window, *k, &spec, *rule)?;
                let est = precision_woodbury(est)?;
                Ok((est.sigma_hat, est.precision_sigma))
            }
            PortfolioEstimator::StrictFactor { k } => {
                let spec = ThresholdSpec::constant(1e30)?;
                let est = poet(window, *k, &spec, ShrinkageRule::Hard)?;
                let est = precision_woodbury(est)?;
                Ok((est.sigma_hat, est.precision_sigma))
            }
            PortfolioEstimator::Sample => {
                let sigma = sample_covariance(window);
                let precision = spd_inverse(&sigma).ok();
                Ok((sigma, precision))
            }
        }
    }
}

/// Rolling-backtest configuration: fit on a trailing `window`, hold for
/// `rebalance_every` observations, realize the risk over the held period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub window: usize,
    pub rebalance_every: usize,
    pub estimators: Vec<PortfolioEstimator>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 252,
            rebalance_every: 21,
            estimators: vec![
                PortfolioEstimator::Poet {
                    k: KChoice::auto(crate::factors::IcVariant::Ic1),
                    c: CSelect::default(),
                    rule: ShrinkageRule::Soft,
                    style: ThresholdStyle::AdaptiveTheta,
                },
                PortfolioEstimator::StrictFactor {
                    k: KChoice::auto(crate::factors::IcVariant::Ic1),
                },
            ],
        }
    }
}

/// One estimator's outcome in one holding period.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodRecord {
    pub period: usize,
    /// Index of the first evaluation observation.
    pub eval_start: usize,
    pub estimator: String,
    pub realized_risk: Option<f64>,
    pub empirical_risk: Option<f64>,
    pub gross_exposure: Option<f64>,
    pub error: Option<String>,
}

/// Head-to-head aggregate of the first estimator against another.
#[derive(Debug, Clone, Serialize)]
pub struct PairwiseComparison {
    pub challenger: String,
    pub baseline: String,
    /// Number of periods where both estimators produced a portfolio.
    pub periods: usize,
    /// Fraction of periods the challenger realized lower risk; ties count
    /// one half.
    pub win_fraction: f64,
    /// Mean of `(R_base - R_chal) / R_base` over winning periods.
    pub mean_risk_reduction_on_wins: f64,
    /// Mean of `(R_chal - R_base) / R_base` over losing periods.
    pub mean_risk_increase_on_losses: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub records: Vec<PeriodRecord>,
    pub comparisons: Vec<PairwiseComparison>,
    pub periods: usize,
    /// Periods skipped entirely because every estimator failed.
    pub failed_periods: usize,
}

impl BacktestReport {
    /// Realized risks of one estimator, indexed by period; `None` where it
    /// failed.
    pub fn risk_series(&self, label: &str) -> Vec<Option<f64>> {
        let mut out = vec![None; self.periods];
        for r in &self.records {
            if r.estimator == label {
                out[r.period] = r.realized_risk;
            }
        }
        out
    }
}

/// Runs the rolling minimum-variance backtest.
///
/// Each period fits every estimator on the demeaned trailing window,
/// builds weights from the precision when available, and realizes
/// `w' (h^{-1} sum y_t y_t') w` over the next `rebalance_every` raw
/// observations. Estimator failures flag the record and drop the period
/// from that estimator's aggregates.
pub fn backtest(panel: &ReturnPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    let t_total = panel.num_periods();
    let (window, hold) = (config.window, config.rebalance_every);
    if hold == 0 || window < 2 {
        return Err(PoetError::InvalidParameter(
            "need window >= 2 and rebalance_every >= 1".into(),
        ));
    }
    if t_total < window + hold {
        return Err(PoetError::InvalidParameter(format!(
            "panel length {t_total} is shorter than window + rebalance_every = {}",
            window + hold
        )));
    }
    if config.estimators.is_empty() {
        return Err(PoetError::InvalidParameter("no estimators configured".into()));
    }

    let n_periods = (t_total - window) / hold;
    let labels: Vec<String> = config.estimators.iter().map(|e| e.label()).collect();
    let mut records = Vec::with_capacity(n_periods * labels.len());
    let mut failed_periods = 0usize;

    for period in 0..n_periods {
        let fit_start = period * hold;
        let eval_start = fit_start + window;
        let train = panel.window(fit_start, window)?.demean();

        // Estimators within a period are independent; evaluate in parallel
        // and collect by index.
        let outcomes: Vec<(Option<PortfolioWeights>, Option<f64>, Option<String>)> = config
            .estimators
            .par_iter()
            .map(|est| match est.fit(&train) {
                Ok((sigma, precision)) => {
                    let weights = match &precision {
                        Some(prec) => min_variance_weights_from_precision(prec),
                        None => min_variance_weights(&sigma),
                    };
                    match weights {
                        Ok(w) => {
                            let empirical = w.risk(&sigma);
                            (Some(w), Some(empirical), None)
                        }
                        Err(e) => (None, None, Some(e.to_string())),
                    }
                }
                Err(e) => (None, None, Some(e.to_string())),
            })
            .collect();

        let mut any_ok = false;
        for (idx, (weights, empirical, error)) in outcomes.into_iter().enumerate() {
            let realized = weights.as_ref().map(|w| {
                let mut acc = 0.0;
                for t in eval_start..eval_start + hold {
                    let mut s = 0.0;
                    for i in 0..panel.num_assets() {
                        s += w.w[i] * panel.values()[(i, t)];
                    }
                    acc += s * s;
                }
                acc / hold as f64
            });
            if realized.is_some() {
                any_ok = true;
            }
            records.push(PeriodRecord {
                period,
                eval_start,
                estimator: labels[idx].clone(),
                realized_risk: realized,
                empirical_risk: empirical,
                gross_exposure: weights.as_ref().map(|w| w.gross_exposure),
                error,
            });
        }
        if !any_ok {
            failed_periods += 1;
        }
    }

    // Head-to-head aggregates of the first estimator against the rest.
    let mut comparisons = Vec::new();
    if labels.len() >= 2 {
        let series: Vec<Vec<Option<f64>>> = labels
            .iter()
            .map(|l| {
                let mut out = vec![None; n_periods];
                for r in records.iter().filter(|r| &r.estimator == l) {
                    out[r.period] = r.realized_risk;
                }
                out
            })
            .collect();
        for b in 1..labels.len() {
            let mut wins = 0.0;
            let mut n = 0usize;
            let mut reductions = Vec::new();
            let mut increases = Vec::new();
            for period in 0..n_periods {
                if let (Some(rc), Some(rb)) = (series[0][period], series[b][period]) {
                    n += 1;
                    if rc < rb {
                        wins += 1.0;
                        reductions.push((rb - rc) / rb);
                    } else if rc > rb {
                        increases.push((rc - rb) / rb);
                    } else {
                        wins += 0.5;
                    }
                }
            }
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    0.0
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            comparisons.push(PairwiseComparison {
                challenger: labels[0].clone(),
                baseline: labels[b].clone(),
                periods: n,
                win_fraction: if n > 0 { wins / n as f64 } else { 0.0 },
                mean_risk_reduction_on_wins: mean(&reductions),
                mean_risk_increase_on_losses: mean(&increases),
            });
        }
    }

    Ok(BacktestReport {
        records,
        comparisons,
        periods: n_periods,
        failed_periods,
    })
}
