//! Generalized shrinkage functions and entry-adaptive thresholds.
//!
//! Every rule satisfies the shrinkage contract: `s(z, tau) = 0` whenever
//! `|z| <= tau`, `|s(z, tau) - z| <= tau`, `|s(z, tau)| <= |z|`, and
//! `s(-z, tau) = -s(z, tau)`. The contract implies that the boundary
//! `|z| = tau` is always killed; for the hard rule this means survival is
//! strict inequality.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PoetError, Result};
use crate::linalg::SymMatrix;

/// Shrinkage rule applied to off-diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShrinkageRule {
    Hard,
    Soft,
    /// Three-piece SCAD rule with knots at `tau`, `2 tau` and `a tau`.
    Scad { a: f64 },
    /// `sign(z) (|z| - tau^eta |z|^{1-eta})_+` (Rothman et al.);
    /// `eta = 1` reduces to soft thresholding.
    AdaptiveLasso { eta: f64 },
}

impl ShrinkageRule {
    /// SCAD with the conventional `a = 3.7`.
    pub fn scad() -> Self {
        ShrinkageRule::Scad { a: 3.7 }
    }

    /// Adaptive lasso with the default exponent `eta = 1`.
    pub fn adaptive_lasso() -> Self {
        ShrinkageRule::AdaptiveLasso { eta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ShrinkageRule::Scad { a } if a <= 2.0 => Err(PoetError::InvalidParameter(format!(
                "SCAD parameter must exceed 2, got {a}"
            ))),
            ShrinkageRule::AdaptiveLasso { eta } if eta < 1.0 => Err(PoetError::InvalidParameter(
                format!("adaptive-lasso exponent must be >= 1, got {eta}"),
            )),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for ShrinkageRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShrinkageRule::Hard => write!(f, "hard"),
            ShrinkageRule::Soft => write!(f, "soft"),
            ShrinkageRule::Scad { a } => write!(f, "scad(a={a})"),
            ShrinkageRule::AdaptiveLasso { eta } => write!(f, "adaptive_lasso(eta={eta})"),
        }
    }
}

/// Applies the shrinkage rule to a single entry. `tau` must be
/// non-negative.
///
/// The identity regions return `z` bit-exactly, so thresholding with
/// `tau = 0` is the identity map.
pub fn shrink(z: f64, tau: f64, rule: ShrinkageRule) -> Result<f64> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(PoetError::InvalidParameter(format!(
            "threshold must be finite and non-negative, got {tau}"
        )));
    }
    rule.validate()?;
    let a = z.abs();
    if a <= tau {
        return Ok(0.0);
    }
    Ok(match rule {
        ShrinkageRule::Hard => z,
        ShrinkageRule::Soft => soft(z, tau),
        ShrinkageRule::Scad { a: knot } => {
            if a <= 2.0 * tau {
                soft(z, tau)
            } else if a <= knot * tau {
                // Clamp to |z|: the branch meets z at the outer knot and
                // rounding must not overshoot the |s| <= |z| contract.
                let s = ((knot - 1.0) * z - z.signum() * knot * tau) / (knot - 2.0);
                if s.abs() > a {
                    z
                } else {
                    s
                }
            } else {
                z
            }
        }
        ShrinkageRule::AdaptiveLasso { eta } => {
            let cut = tau.powf(eta) * a.powf(1.0 - eta);
            if a <= cut {
                0.0
            } else {
                z.signum() * (a - cut)
            }
        }
    })
}

fn soft(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// Uniform estimation-rate scale `omega_T = 1/sqrt(p) + sqrt(log(p)/T)`
/// entering all thresholds (natural log).
pub fn omega(p: usize, t: usize) -> f64 {
    let pf = p as f64;
    let tf = t as f64;
    1.0 / pf.sqrt() + (pf.ln() / tf).sqrt()
}

/// How the entry-dependent threshold matrix is built from the constant `C`
/// and the rate `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStyle {
    /// `tau_ij = C sqrt(theta_hat_ij) omega` (the default throughout).
    AdaptiveTheta,
    /// `tau_ij = C omega sqrt(r_ii r_jj)`: thresholding the correlation
    /// matrix of the raw input.
    Correlation,
    /// `tau_ij = C omega` everywhere.
    Constant,
}

/// Threshold specification: user constant, style and the rate `omega_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub c: f64,
    pub style: ThresholdStyle,
    pub omega: f64,
}

impl ThresholdSpec {
    pub fn new(c: f64, style: ThresholdStyle, omega: f64) -> Result<Self> {
        if c < 0.0 || !c.is_finite() {
            return Err(PoetError::InvalidParameter(format!(
                "threshold constant must be finite and non-negative, got {c}"
            )));
        }
        if omega < 0.0 || !omega.is_finite() {
            return Err(PoetError::InvalidParameter(format!(
                "omega must be finite and non-negative, got {omega}"
            )));
        }
        Ok(Self { c, style, omega })
    }

    /// Adaptive-theta spec with `omega` computed from the panel dimensions.
    pub fn adaptive(c: f64, p: usize, t: usize) -> Result<Self> {
        Self::new(c, ThresholdStyle::AdaptiveTheta, omega(p, t))
    }

    /// Correlation-style spec with `omega` computed from the dimensions.
    pub fn correlation(c: f64, p: usize, t: usize) -> Result<Self> {
        Self::new(c, ThresholdStyle::Correlation, omega(p, t))
    }

    /// Constant threshold `tau = c` everywhere (`omega = 1`).
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(c, ThresholdStyle::Constant, 1.0)
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

/// Residual second and fourth moments:
/// `sigma_hat_ij = T^{-1} sum_t u_it u_jt` and
/// `theta_hat_ij = T^{-1} sum_t (u_it u_jt - sigma_hat_ij)^2`.
pub fn residual_moments(u_hat: &DMatrix<f64>) -> Result<(SymMatrix, DMatrix<f64>)> {
    let (p, t) = (u_hat.nrows(), u_hat.ncols());
    if t < 2 {
        return Err(PoetError::InvalidParameter(format!(
            "residual moments need T >= 2, got T = {t}"
        )));
    }
    let tf = t as f64;
    let mut sigma = DMatrix::zeros(p, p);
    let mut theta = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..t {
                s += u_hat[(i, k)] * u_hat[(j, k)];
            }
            let sij = s / tf;
            let mut q = 0.0;
            for k in 0..t {
                let d = u_hat[(i, k)] * u_hat[(j, k)] - sij;
                q += d * d;
            }
            let thij = q / tf;
            sigma[(i, j)] = sij;
            sigma[(j, i)] = sij;
            theta[(i, j)] = thij;
            theta[(j, i)] = thij;
        }
    }
    Ok((SymMatrix::from_matrix(sigma)?, theta))
}

/// Builds the entry-dependent threshold matrix for a spec. The
/// adaptive-theta style needs the `theta_hat` moments.
pub fn build_tau(
    spec: &ThresholdSpec,
    raw: &SymMatrix,
    theta_hat: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let p = raw.dim();
    let base = spec.c * spec.omega;
    match spec.style {
        ThresholdStyle::AdaptiveTheta => {
            let theta = theta_hat.ok_or_else(|| {
                PoetError::InvalidParameter(
                    "adaptive-theta threshold requires residual theta moments".into(),
                )
            })?;
            if theta.nrows() != p || theta.ncols() != p {
                return Err(PoetError::DimensionMismatch {
                    expected: format!("{p}x{p} theta"),
                    actual: format!("{}x{}", theta.nrows(), theta.ncols()),
                });
            }
            Ok(DMatrix::from_fn(p, p, |i, j| {
                base * theta[(i, j)].max(0.0).sqrt()
            }))
        }
        ThresholdStyle::Correlation => {
            let d = raw.diagonal();
            Ok(DMatrix::from_fn(p, p, |i, j| {
                base * (d[i].max(0.0) * d[j].max(0.0)).sqrt()
            }))
        }
        ThresholdStyle::Constant => Ok(DMatrix::from_element(p, p, base)),
    }
}

/// Applies shrinkage to the off-diagonal entries of a symmetric matrix.
/// The diagonal is copied untouched and the output is exactly symmetric.
pub fn threshold_covariance(
    raw: &SymMatrix,
    tau: &DMatrix<f64>,
    rule: ShrinkageRule,
) -> Result<SymMatrix> {
    let p = raw.dim();
    if tau.nrows() != p || tau.ncols() != p {
        return Err(PoetError::DimensionMismatch {
            expected: format!("{p}x{p} tau"),
            actual: format!("{}x{}", tau.nrows(), tau.ncols()),
        });
    }
    let mut out = DMatrix::zeros(p, p);
    for i in 0..p {
        out[(i, i)] = raw[(i, i)];
        for j in 0..i {
            let v = shrink(raw[(i, j)], tau[(i, j)], rule)?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    SymMatrix::from_matrix(out)
}

/// Generalized sparsity measure `m_p = max_i sum_j |sigma_ij|^q`. For
/// `q = 0`, `0^0 := 0`, so the measure counts the nonzeros of the densest
/// row.
pub fn sparsity_measure(sigma_u: &SymMatrix, q: f64) -> f64 {
    let p = sigma_u.dim();
    let mut best: f64 = 0.0;
    for i in 0..p {
        let mut row = 0.0;
        for j in 0..p {
            let a = sigma_u[(i, j)].abs();
            if a > 0.0 {
                row += if q == 0.0 { 1.0 } else { a.powf(q) };
            }
        }
        best = best.max(row);
    }
    best
}
