//! The covariance estimator: spectral-complement and least-squares
//! substitution routes, Woodbury precision matrices, and error reports
//! against a known truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PoetError, Result};
use crate::factors::{estimate_factors, select_num_factors, FactorFit, IcVariant, KSelection};
use crate::linalg::{
    eigh, matrix_norm_max, norm_spectral, relative_spectral_error, spd_inverse,
    weighted_quadratic_norm, SymMatrix, PD_RTOL,
};
use crate::panel::{sample_covariance, ReturnPanel};
use crate::sim::TrueModel;
use crate::threshold::{
    build_tau, residual_moments, threshold_covariance, ShrinkageRule, ThresholdSpec,
    ThresholdStyle,
};

/// How the number of factors is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum KChoice {
    Fixed { k: usize },
    Auto { max_factors: usize, variant: IcVariant },
}

impl KChoice {
    pub fn fixed(k: usize) -> Self {
        KChoice::Fixed { k }
    }

    /// Data-driven selection with the default upper bound `M = 8`.
    pub fn auto(variant: IcVariant) -> Self {
        KChoice::Auto {
            max_factors: 8,
            variant,
        }
    }
}

/// Assembled covariance estimate.
#[derive(Debug, Clone)]
pub struct PoetEstimate {
    /// Estimated covariance (low-rank part plus thresholded complement).
    pub sigma_hat: SymMatrix,
    /// Thresholded idiosyncratic covariance.
    pub sigma_u_hat: SymMatrix,
    /// Low-rank common component.
    pub low_rank: SymMatrix,
    pub k_used: usize,
    pub c_used: f64,
    pub rule: ShrinkageRule,
    pub spec: ThresholdSpec,
    pub factor_fit: FactorFit,
    /// Present when the number of factors was data-driven.
    pub k_selection: Option<KSelection>,
    pub precision_sigma_u: Option<SymMatrix>,
    pub precision_sigma: Option<SymMatrix>,
    /// `||sigma_hat * precision_sigma - I||_max`, recorded when the
    /// precision has been computed.
    pub woodbury_residual: Option<f64>,
}

/// Splits the sample covariance into its leading rank-`K` spectral part and
/// the principal orthogonal complement. The complement is formed by
/// subtraction, so `low_rank + r_k == sigma_sam` holds entrywise.
pub fn principal_complement(
    sigma_sam: &SymMatrix,
    k: usize,
) -> Result<(SymMatrix, SymMatrix)> {
    let p = sigma_sam.dim();
    if k > p {
        return Err(PoetError::InvalidParameter(format!(
            "K = {k} exceeds the matrix dimension {p}"
        )));
    }
    if k == 0 {
        return Ok((SymMatrix::zeros(p), sigma_sam.clone()));
    }
    let spec = eigh(sigma_sam)?;
    let low_rank = spec.partial_reconstruction(0..k);
    let r_k = sigma_sam.sub(&low_rank);
    Ok((low_rank, r_k))
}

fn resolve_k(panel: &ReturnPanel, k: KChoice) -> Result<(usize, Option<KSelection>)> {
    match k {
        KChoice::Fixed { k } => Ok((k, None)),
        KChoice::Auto {
            max_factors,
            variant,
        } => {
            let sel = select_num_factors(panel, max_factors, variant)?;
            Ok((sel.k_hat, Some(sel)))
        }
    }
}

/// Builds the threshold matrix for a raw complement/residual covariance.
/// The adaptive-theta style reads the residual moments of the factor fit;
/// the correlation style reads the raw diagonal.
fn tau_for(
    spec: &ThresholdSpec,
    raw: &SymMatrix,
    theta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    match spec.style {
        ThresholdStyle::AdaptiveTheta => build_tau(spec, raw, Some(theta)),
        _ => build_tau(spec, raw, None),
    }
}

/// The covariance estimator, spectral route: keep the top-`K` principal
/// components of the sample covariance and shrink the complement
/// entrywise.
///
/// The threshold is built from the residual moments of the least-squares
/// factor fit (adaptive-theta style) or from the complement's diagonal
/// (correlation style), so the spectral and substitution routes share the
/// same `tau` and remain numerically equivalent.
pub fn poet(
    panel: &ReturnPanel,
    k: KChoice,
    spec: &ThresholdSpec,
    rule: ShrinkageRule,
) -> Result<PoetEstimate> {
    rule.validate()?;
    let (k_used, k_selection) = resolve_k(panel, k)?;
    let fit = estimate_factors(panel, k_used)?;
    let (_, theta) = residual_moments(&fit.residuals)?;
    let sam = sample_covariance(panel);
    let (low_rank, r_k) = principal_complement(&sam, k_used)?;
    let tau = tau_for(spec, &r_k, &theta)?;
    let r_k_tau = threshold_covariance(&r_k, &tau, rule)?;

    // sigma_hat = sam + (r_k_tau - r_k), entrywise: entries the shrinkage
    // left untouched contribute an exact zero delta, so tau = 0 reproduces
    // the sample covariance bit for bit.
    let p = sam.dim();
    let mut sigma_hat = sam.matrix().clone();
    for j in 0..p {
        for i in 0..p {
            sigma_hat[(i, j)] += r_k_tau[(i, j)] - r_k[(i, j)];
        }
    }

    Ok(PoetEstimate {
        sigma_hat: SymMatrix::from_matrix(sigma_hat)?,
        sigma_u_hat: r_k_tau,
        low_rank,
        k_used,
        c_used: spec.c,
        rule,
        spec: *spec,
        factor_fit: fit,
        k_selection,
        precision_sigma_u: None,
        precision_sigma: None,
        woodbury_residual: None,
    })
}

/// The covariance estimator, least-squares substitution route:
/// `Lambda Lambda' + thresholded residual covariance`. Numerically
/// identical to [`poet`] for the same `K` and thresholds.
pub fn poet_substitution(
    panel: &ReturnPanel,
    k: KChoice,
    spec: &ThresholdSpec,
    rule: ShrinkageRule,
) -> Result<PoetEstimate> {
    rule.validate()?;
    let (k_used, k_selection) = resolve_k(panel, k)?;
    let fit = estimate_factors(panel, k_used)?;
    let (sigma_u_raw, theta) = residual_moments(&fit.residuals)?;
    let tau = tau_for(spec, &sigma_u_raw, &theta)?;
    let sigma_u_tau = threshold_covariance(&sigma_u_raw, &tau, rule)?;
    let low_rank = SymMatrix::from_matrix(&fit.loadings * fit.loadings.transpose())?;
    let sigma_hat = low_rank.add(&sigma_u_tau);

    Ok(PoetEstimate {
        sigma_hat,
        sigma_u_hat: sigma_u_tau,
        low_rank,
        k_used,
        c_used: spec.c,
        rule,
        spec: *spec,
        factor_fit: fit,
        k_selection,
        precision_sigma_u: None,
        precision_sigma: None,
        woodbury_residual: None,
    })
}

/// Covariance estimator with observed factors: regress the panel on the
/// given `T x K` factor series, shrink the residual covariance, and
/// assemble `B_hat cov(f) B_hat' + Sigma_u_hat`.
///
/// The factor fit is renormalized to `T^{-1} F'F = I_K` so the Woodbury
/// precision applies unchanged.
pub fn poet_known_factors(
    panel: &ReturnPanel,
    factors: &DMatrix<f64>,
    spec: &ThresholdSpec,
    rule: ShrinkageRule,
) -> Result<PoetEstimate> {
    rule.validate()?;
    let y = panel.values();
    let t = y.ncols();
    if factors.nrows() != t {
        return Err(PoetError::DimensionMismatch {
            expected: format!("{t} factor observations"),
            actual: format!("{}", factors.nrows()),
        });
    }
    let k = factors.ncols();
    if k == 0 {
        return poet(panel, KChoice::fixed(0), spec, rule);
    }

    // Demean the factor series to match the demeaned panel.
    let mut f_c = factors.clone();
    for j in 0..k {
        let mean = f_c.column(j).sum() / t as f64;
        for i in 0..t {
            f_c[(i, j)] -= mean;
        }
    }
    let cov_f = SymMatrix::from_matrix(f_c.transpose() * &f_c / t as f64)?;
    let gram = f_c.transpose() * &f_c;
    let b_hat = (gram.clone().lu().solve(&(f_c.transpose() * y.transpose())))
        .ok_or(PoetError::SingularMatrix { lambda_min: 0.0 })?
        .transpose();
    let residuals = y - &b_hat * f_c.transpose();

    let (sigma_u_raw, theta) = residual_moments(&residuals)?;
    let tau = tau_for(spec, &sigma_u_raw, &theta)?;
    let sigma_u_tau = threshold_covariance(&sigma_u_raw, &tau, rule)?;

    // Renormalize: Lambda = B_hat cov^{1/2}, F = F_c cov^{-1/2}.
    let cov_spec = eigh(&cov_f)?;
    if cov_spec.eigenvalues[k - 1] <= PD_RTOL * cov_spec.eigenvalues[0].max(0.0) {
        return Err(PoetError::SingularMatrix {
            lambda_min: cov_spec.eigenvalues[k - 1],
        });
    }
    let half = {
        let mut v = cov_spec.eigenvectors.clone();
        for j in 0..k {
            let s = cov_spec.eigenvalues[j].sqrt();
            for i in 0..k {
                v[(i, j)] *= s;
            }
        }
        &v * cov_spec.eigenvectors.transpose()
    };
    let inv_half = {
        let mut v = cov_spec.eigenvectors.clone();
        for j in 0..k {
            let s = 1.0 / cov_spec.eigenvalues[j].sqrt();
            for i in 0..k {
                v[(i, j)] *= s;
            }
        }
        &v * cov_spec.eigenvectors.transpose()
    };
    let loadings = &b_hat * &half;
    let factors_norm = &f_c * &inv_half;

    let low_rank = SymMatrix::from_matrix(&loadings * loadings.transpose())?;
    let sigma_hat = low_rank.add(&sigma_u_tau);
    let top = nalgebra::DVector::from_fn(k, |i, _| {
        loadings.column(i).norm_squared()
    });

    Ok(PoetEstimate {
        sigma_hat,
        sigma_u_hat: sigma_u_tau,
        low_rank,
        k_used: k,
        c_used: spec.c,
        rule,
        spec: *spec,
        factor_fit: FactorFit {
            k,
            factors: factors_norm,
            loadings,
            residuals,
            top_eigenvalues: top,
        },
        k_selection: None,
        precision_sigma_u: None,
        precision_sigma: None,
        woodbury_residual: None,
    })
}

/// Fills the precision fields by the Sherman-Morrison-Woodbury identity:
/// with `A = (Sigma_u_hat)^{-1}`,
/// `Sigma_hat^{-1} = A - A L (I_K + L'A L)^{-1} L'A`.
pub fn precision_woodbury(mut estimate: PoetEstimate) -> Result<PoetEstimate> {
    let spec_u = eigh(&estimate.sigma_u_hat)?;
    let p = estimate.sigma_u_hat.dim();
    let lmin = spec_u.eigenvalues[p - 1];
    let lmax = spec_u.eigenvalues[0];
    if lmin <= PD_RTOL * lmax.max(0.0) || lmin <= 0.0 {
        return Err(PoetError::SingularIdiosyncratic {
            lambda_min: lmin,
            c: estimate.c_used,
        });
    }
    let a = spd_inverse(&estimate.sigma_u_hat)?;

    let precision = if estimate.k_used == 0 {
        a.clone()
    } else {
        let lambda = &estimate.factor_fit.loadings;
        let k = lambda.ncols();
        let al = a.matrix() * lambda;
        let middle = DMatrix::<f64>::identity(k, k) + lambda.transpose() * &al;
        let solved = middle
            .clone()
            .lu()
            .solve(&al.transpose())
            .ok_or(PoetError::SingularMatrix { lambda_min: 0.0 })?;
        let correction = &al * solved;
        SymMatrix::from_matrix(a.matrix() - correction)?
    };

    let residual = {
        let product = estimate.sigma_hat.matrix() * precision.matrix();
        let id = DMatrix::<f64>::identity(p, p);
        matrix_norm_max(&(product - id))
    };
    if residual > 1e-6 {
        log::warn!(
            "Woodbury inverse residual {residual:.3e} exceeds 1e-6; the estimate may be \
             ill-conditioned"
        );
    }

    estimate.precision_sigma_u = Some(a);
    estimate.precision_sigma = Some(precision);
    estimate.woodbury_residual = Some(residual);
    Ok(estimate)
}

/// Estimation-error report against a known truth.
///
/// Inverse-based metrics are `None` when the corresponding matrix could not
/// be inverted; a singular truth is an error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Weighted quadratic norm of `sigma_hat - sigma`.
    pub weighted_quadratic: f64,
    /// `||sigma_hat - sigma||_max`.
    pub max_abs: f64,
    /// `||sigma_hat - sigma||` (spectral).
    pub spectral: f64,
    /// `||sigma_hat^{-1} - sigma^{-1}||` (spectral).
    pub precision_spectral: Option<f64>,
    /// `||sigma_u_hat - sigma_u||` (spectral).
    pub sigma_u_spectral: f64,
    /// `||sigma_u_hat^{-1} - sigma_u^{-1}||` (spectral).
    pub sigma_u_precision_spectral: Option<f64>,
    /// `||sigma^{-1/2} sigma_hat sigma^{-1/2} - I||` (spectral).
    pub relative_spectral: f64,
    /// Sine of the largest principal angle between the estimated and true
    /// loading spaces; a rotation-free proxy for loading accuracy.
    pub subspace_distance: Option<f64>,
}

/// Evaluates an estimate against the generating truth.
pub fn evaluate_against_truth(
    estimate: &PoetEstimate,
    truth: &TrueModel,
) -> Result<ErrorReport> {
    let p = truth.sigma.dim();
    if estimate.sigma_hat.dim() != p {
        return Err(PoetError::DimensionMismatch {
            expected: format!("{p}x{p} estimate"),
            actual: format!("{0}x{0}", estimate.sigma_hat.dim()),
        });
    }
    let sigma_inv = spd_inverse(&truth.sigma)?;
    let sigma_u_inv = spd_inverse(&truth.sigma_u)?;

    let diff = estimate.sigma_hat.sub(&truth.sigma);
    let diff_u = estimate.sigma_u_hat.sub(&truth.sigma_u);

    // Use stored precisions, otherwise attempt Woodbury; absent on failure.
    let (prec_sigma, prec_sigma_u) = match (&estimate.precision_sigma, &estimate.precision_sigma_u)
    {
        (Some(s), Some(u)) => (Some(s.clone()), Some(u.clone())),
        _ => match precision_woodbury(estimate.clone()) {
            Ok(e) => (e.precision_sigma, e.precision_sigma_u),
            Err(_) => (None, None),
        },
    };

    let precision_spectral = prec_sigma
        .as_ref()
        .map(|ps| norm_spectral(&ps.sub(&sigma_inv)));
    let sigma_u_precision_spectral = prec_sigma_u
        .as_ref()
        .map(|pu| norm_spectral(&pu.sub(&sigma_u_inv)));

    let subspace_distance = if truth.k() > 0 && estimate.k_used > 0 {
        Some(subspace_sine(
            &truth.loadings,
            &estimate.factor_fit.loadings,
        )?)
    } else {
        None
    };

    Ok(ErrorReport {
        weighted_quadratic: weighted_quadratic_norm(&estimate.sigma_hat, &truth.sigma)?,
        max_abs: crate::linalg::norm_max(&diff),
        spectral: norm_spectral(&diff),
        precision_spectral,
        sigma_u_spectral: norm_spectral(&diff_u),
        sigma_u_precision_spectral,
        relative_spectral: relative_spectral_error(&estimate.sigma_hat, &truth.sigma)?,
        subspace_distance,
    })
}

/// Sine of the largest principal angle between the column spaces of two
/// `p x k` matrices.
fn subspace_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let cross = qa.transpose() * qb;
    let svd = cross.svd(false, false);
    let smin = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s))
        .min(1.0);
    Ok((1.0 - smin * smin).max(0.0).sqrt())
}

fn orthonormal_basis(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = m.clone().qr();
    let q = qr.q();
    Ok(q)
}
