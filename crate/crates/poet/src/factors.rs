//! Constrained least-squares factor estimation (equivalently PCA on the
//! sample covariance) and data-driven selection of the number of factors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PoetError, Result};
use crate::linalg::{eigh, SymMatrix};
use crate::panel::{sample_covariance, ReturnPanel};

/// Least-squares factor fit.
///
/// `factors` is `T x K` (row `t` holds the estimated factor vector at time
/// `t`), `loadings` is `p x K`, and `residuals` is defined as
/// `Y - loadings * factors'`, so the decomposition identity is exact. The
/// normalization is `T^{-1} F'F = I_K` with `Lambda'Lambda` diagonal.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub k: usize,
    pub factors: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// Leading eigenvalues of the sample covariance, descending; also the
    /// diagonal of `V`, the eigenvalue matrix of `T^{-1} Y'Y`.
    pub top_eigenvalues: DVector<f64>,
}

impl FactorFit {
    /// `K x K` diagonal matrix of the leading eigenvalues of `T^{-1} Y'Y`.
    pub fn v_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.top_eigenvalues)
    }

    /// Fitted common component `Lambda F'` (`p x T`).
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.loadings * self.factors.transpose()
    }
}

/// Estimates `K` factors from a demeaned panel.
///
/// The columns of `F / sqrt(T)` are the top eigenvectors of the `T x T`
/// Gram matrix `Y'Y`; the loadings follow as `T^{-1} Y F`. When `p < T`
/// the algebraically identical `p x p` route is used instead. Factor
/// columns carry the deterministic sign convention (largest-magnitude
/// component positive).
pub fn estimate_factors(panel: &ReturnPanel, k: usize) -> Result<FactorFit> {
    let y = panel.values();
    let (p, t) = (y.nrows(), y.ncols());
    if k > p.min(t) {
        return Err(PoetError::InvalidParameter(format!(
            "K = {k} exceeds min(p, T) = {}",
            p.min(t)
        )));
    }
    if !panel.is_demeaned(1e-8) {
        log::warn!("estimate_factors: panel rows are not mean zero; demean() first");
    }

    if k == 0 {
        return Ok(FactorFit {
            k,
            factors: DMatrix::zeros(t, 0),
            loadings: DMatrix::zeros(p, 0),
            residuals: y.clone(),
            top_eigenvalues: DVector::zeros(0),
        });
    }

    let tf = t as f64;
    let (mut factors, top_eigenvalues) = if p < t {
        // p x p route: eigenvectors xi of Sigma_sam, F column i = Y' xi_i /
        // sqrt(lambda_i). Falls back to the T x T route if the needed
        // eigenvalues are numerically zero.
        let spec = eigh(&sample_covariance(panel))?;
        let floor = spec.eigenvalues[0].abs() * 1e-14;
        if (0..k).any(|i| spec.eigenvalues[i] <= floor) {
            gram_route(y, k)?
        } else {
            let mut f = DMatrix::zeros(t, k);
            for i in 0..k {
                let xi = spec.eigenvectors.column(i);
                let col = y.transpose() * xi / spec.eigenvalues[i].sqrt();
                f.set_column(i, &col);
            }
            (f, DVector::from_fn(k, |i, _| spec.eigenvalues[i]))
        }
    } else {
        gram_route(y, k)?
    };

    fix_column_signs(&mut factors);
    let loadings = y * &factors / tf;
    let residuals = y - &loadings * factors.transpose();

    Ok(FactorFit {
        k,
        factors,
        loadings,
        residuals,
        top_eigenvalues,
    })
}

/// `T x T` route: F = sqrt(T) * top-K eigenvectors of Y'Y.
fn gram_route(y: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let t = y.ncols();
    let tf = t as f64;
    let gram = SymMatrix::from_matrix(y.transpose() * y)?;
    let spec = eigh(&gram)?;
    let mut f = DMatrix::zeros(t, k);
    for i in 0..k {
        f.set_column(i, &(spec.eigenvectors.column(i) * tf.sqrt()));
    }
    // Eigenvalues of Y'Y over T equal the leading sample-covariance ones.
    let top = DVector::from_fn(k, |i, _| spec.eigenvalues[i] / tf);
    Ok((f, top))
}

fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let mut best = 0usize;
        for r in 1..col.len() {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            for r in 0..m.nrows() {
                m[(r, j)] = -m[(r, j)];
            }
        }
    }
}

/// Penalty variant for the number-of-factors criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IcVariant {
    Ic1,
    Ic2,
}

impl std::fmt::Display for IcVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IcVariant::Ic1 => write!(f, "IC1"),
            IcVariant::Ic2 => write!(f, "IC2"),
        }
    }
}

/// Penalty `g(T, p)` per factor:
/// IC1 is `(p+T)/(pT) log(pT/(p+T))`, IC2 is `(p+T)/(pT) log min(p, T)`.
pub fn ic_penalty(t: usize, p: usize, variant: IcVariant) -> f64 {
    let (pf, tf) = (p as f64, t as f64);
    let scale = (pf + tf) / (pf * tf);
    match variant {
        IcVariant::Ic1 => scale * (pf * tf / (pf + tf)).ln(),
        IcVariant::Ic2 => scale * pf.min(tf).ln(),
    }
}

/// One row of the selection objective curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub k: usize,
    pub log_residual: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Outcome of the number-of-factors search.
#[derive(Debug, Clone)]
pub struct KSelection {
    pub k_hat: usize,
    pub curve: Vec<ObjectiveRow>,
    /// Set when the panel is exactly low rank (residual sums hit zero at
    /// some `K <= M`); `k_hat` is then the exact rank.
    pub exact_low_rank: bool,
}

/// Selects the number of factors by penalized least squares:
/// `argmin_{0 <= K <= M} log((pT)^{-1} ||Y - P_K Y||_F^2) + K g(T, p)`,
/// with `K = 0` competing via `log((pT)^{-1} ||Y||_F^2)`. Ties go to the
/// smallest `K`.
pub fn select_num_factors(
    panel: &ReturnPanel,
    max_factors: usize,
    variant: IcVariant,
) -> Result<KSelection> {
    let y = panel.values();
    let (p, t) = (y.nrows(), y.ncols());
    if max_factors + 1 > p.min(t) {
        return Err(PoetError::InvalidParameter(format!(
            "M = {max_factors} must satisfy M <= min(p, T) - 1 = {}",
            p.min(t) - 1
        )));
    }
    if !panel.is_demeaned(1e-8) {
        log::warn!("select_num_factors: panel rows are not mean zero; demean() first");
    }

    // The residual sum at K equals the eigenvalue tail of the Gram matrix,
    // so one decomposition of the smaller side covers every candidate.
    let gram = if p <= t {
        SymMatrix::from_matrix(y * y.transpose())?
    } else {
        SymMatrix::from_matrix(y.transpose() * y)?
    };
    let spec = eigh(&gram)?;
    let total: f64 = spec.eigenvalues.iter().map(|l| l.max(0.0)).sum();

    let pt = (p * t) as f64;
    let g = ic_penalty(t, p, variant);
    let mut curve = Vec::with_capacity(max_factors + 1);
    let mut exact_rank: Option<usize> = None;
    let mut tail = total;
    for k in 0..=max_factors {
        if k > 0 {
            tail -= spec.eigenvalues[k - 1].max(0.0);
        }
        let residual = tail.max(0.0);
        if residual <= total * 1e-12 && exact_rank.is_none() {
            exact_rank = Some(k);
        }
        let log_residual = (residual / pt).max(1e-300).ln();
        let penalty = k as f64 * g;
        curve.push(ObjectiveRow {
            k,
            log_residual,
            penalty,
            total: log_residual + penalty,
        });
    }

    // On an exactly low-rank panel the log term chases rounding noise past
    // the true rank, so the search returns the rank itself, flagged.
    let k_hat = match exact_rank {
        Some(rank) => rank,
        None => {
            let mut best = 0usize;
            for row in &curve {
                if row.total < curve[best].total {
                    best = row.k;
                }
            }
            best
        }
    };

    Ok(KSelection {
        k_hat,
        curve,
        exact_low_rank: exact_rank.is_some(),
    })
}
