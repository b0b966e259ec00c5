//! Data-driven choice of the threshold constant: the finite-sample
//! positive-definiteness constant `C_min` and multifold cross-validation
//! for `C*`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PoetError, Result};
use crate::linalg::{eigh, SymMatrix};
use crate::rng::stream_rng;
use crate::threshold::{
    build_tau, residual_moments, threshold_covariance, ShrinkageRule, ThresholdSpec,
    ThresholdStyle,
};

/// How cross-validation splits the residual sample in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Random contiguous block as the training set (respects serial
    /// dependence). The default.
    ContiguousBlock,
    /// Uniformly random assignment of time points.
    Uniform,
}

/// Cross-validation configuration.
///
/// The training size follows `T(J1) = T (1 - 1/log T)`, rounded; the grid
/// has `grid_points` linear steps on `[C_min + epsilon, M]` where `M` is
/// the smallest constant that makes the thresholded matrix diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub h: usize,
    pub grid_points: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub split: SplitKind,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            h: 10,
            grid_points: 50,
            epsilon: 0.05,
            seed: 0,
            split: SplitKind::ContiguousBlock,
        }
    }
}

impl CvConfig {
    pub fn validate(&self, t: usize) -> Result<()> {
        if self.h == 0 || self.grid_points < 2 {
            return Err(PoetError::InvalidParameter(
                "cross-validation needs h >= 1 and at least a 2-point grid".into(),
            ));
        }
        if t < 4 {
            return Err(PoetError::InvalidParameter(format!(
                "cross-validation needs T >= 4, got {t}"
            )));
        }
        if self.epsilon < 0.0 {
            return Err(PoetError::InvalidParameter(
                "epsilon must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Training-set size `round(T (1 - 1/log T))`, clamped so that both
    /// folds stay non-empty and moments remain computable.
    pub fn train_len(&self, t: usize) -> usize {
        let raw = (t as f64 * (1.0 - 1.0 / (t as f64).ln())).round() as usize;
        raw.clamp(2, t - 1)
    }
}

fn adaptive_spec(c: f64, omega: f64) -> ThresholdSpec {
    ThresholdSpec {
        c,
        style: ThresholdStyle::AdaptiveTheta,
        omega,
    }
}

fn min_eig(m: &SymMatrix) -> f64 {
    let spec = eigh(m).expect("finite by construction");
    spec.eigenvalues[m.dim() - 1]
}

fn thresholded_at(
    sigma: &SymMatrix,
    theta: &DMatrix<f64>,
    omega: f64,
    c: f64,
    rule: ShrinkageRule,
) -> Result<SymMatrix> {
    let spec = adaptive_spec(c, omega);
    let tau = build_tau(&spec, sigma, Some(theta))?;
    threshold_covariance(sigma, &tau, rule)
}

fn is_diagonal(m: &SymMatrix) -> bool {
    let p = m.dim();
    for i in 0..p {
        for j in 0..i {
            if m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Smallest constant (by doubling scan, then bisection to `0.01`) at which
/// the thresholded matrix is exactly diagonal.
fn diagonalizing_cap(
    sigma: &SymMatrix,
    theta: &DMatrix<f64>,
    omega: f64,
    rule: ShrinkageRule,
) -> Result<f64> {
    if is_diagonal(&thresholded_at(sigma, theta, omega, 0.0, rule)?) {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while !is_diagonal(&thresholded_at(sigma, theta, omega, hi, rule)?) {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(PoetError::InvalidParameter(
                "no finite threshold constant diagonalizes the matrix \
                 (an off-diagonal entry has zero variance)"
                    .into(),
            ));
        }
    }
    let mut lo = hi / 2.0;
    while hi - lo > 0.01 {
        let mid = 0.5 * (lo + hi);
        if is_diagonal(&thresholded_at(sigma, theta, omega, mid, rule)?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Minimum eigenvalue of the thresholded residual covariance along a grid
/// of threshold constants.
pub fn min_eigenvalue_curve(
    u_hat: &DMatrix<f64>,
    style: ThresholdStyle,
    rule: ShrinkageRule,
    c_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let (sigma, theta) = residual_moments(u_hat)?;
    let omega = crate::threshold::omega(u_hat.nrows(), u_hat.ncols());
    let mut out = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let spec = ThresholdSpec { c, style, omega };
        let tau = match style {
            ThresholdStyle::AdaptiveTheta => build_tau(&spec, &sigma, Some(&theta))?,
            _ => build_tau(&spec, &sigma, None)?,
        };
        let thr = threshold_covariance(&sigma, &tau, rule)?;
        out.push((c, min_eig(&thr)));
    }
    Ok(out)
}

/// `C_min` from raw residual moments: the smallest constant above which
/// every sampled larger constant keeps the thresholded matrix positive
/// definite, refined by bisection between the bracketing grid points.
pub fn c_min_from_moments(
    sigma: &SymMatrix,
    theta: &DMatrix<f64>,
    omega: f64,
    rule: ShrinkageRule,
    resolution: f64,
) -> Result<f64> {
    let p = sigma.dim();
    for i in 0..p {
        if sigma[(i, i)] <= 0.0 {
            return Err(PoetError::InvalidParameter(format!(
                "diagonal entry {i} is not positive; residual variances must be > 0"
            )));
        }
    }
    if resolution <= 0.0 {
        return Err(PoetError::InvalidParameter(
            "resolution must be positive".into(),
        ));
    }

    let cap = diagonalizing_cap(sigma, theta, omega, rule)?;
    if cap == 0.0 {
        return Ok(0.0);
    }

    // lambda_min(C) is not provably monotone, so scan a grid and take the
    // smallest point from which positivity holds for every larger sample.
    let grid_n = 41;
    let mut lambda = Vec::with_capacity(grid_n);
    for i in 0..grid_n {
        let c = cap * i as f64 / (grid_n - 1) as f64;
        lambda.push((c, min_eig(&thresholded_at(sigma, theta, omega, c, rule)?)));
    }
    let mut start = grid_n;
    for i in (0..grid_n).rev() {
        if lambda[i].1 > 0.0 {
            start = i;
        } else {
            break;
        }
    }
    if start == grid_n {
        // Not positive definite even at the diagonalizing cap; impossible
        // with positive variances.
        return Err(PoetError::InvalidParameter(
            "thresholded matrix is not PD even when diagonal".into(),
        ));
    }
    if start == 0 {
        return Ok(0.0);
    }

    let (mut lo, mut hi) = (lambda[start - 1].0, lambda[start].0);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if min_eig(&thresholded_at(sigma, theta, omega, mid, rule)?) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `C_min` for a residual panel, with the adaptive-theta threshold.
pub fn c_min(u_hat: &DMatrix<f64>, rule: ShrinkageRule, resolution: f64) -> Result<f64> {
    let (sigma, theta) = residual_moments(u_hat)?;
    let omega = crate::threshold::omega(u_hat.nrows(), u_hat.ncols());
    c_min_from_moments(&sigma, &theta, omega, rule, resolution)
}

fn split_indices(
    t: usize,
    train_len: usize,
    split: SplitKind,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    match split {
        SplitKind::ContiguousBlock => {
            let start = rng.random_range(0..=(t - train_len));
            let train: Vec<usize> = (start..start + train_len).collect();
            let validate: Vec<usize> = (0..start).chain(start + train_len..t).collect();
            (train, validate)
        }
        SplitKind::Uniform => {
            let mut idx: Vec<usize> = (0..t).collect();
            idx.shuffle(rng);
            let train = idx[..train_len].to_vec();
            let validate = idx[train_len..].to_vec();
            (train, validate)
        }
    }
}

fn columns(u: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let p = u.nrows();
    let mut out = DMatrix::zeros(p, idx.len());
    for (j, &src) in idx.iter().enumerate() {
        out.set_column(j, &u.column(src));
    }
    out
}

/// Cross-validation of the threshold constant.
///
/// For each of `h` random splits, thresholds the training residual
/// covariance at every grid constant and scores it against the raw
/// validation covariance in squared Frobenius norm; returns the argmin over
/// `[C_min + epsilon, M]` (ties to the smallest constant) together with the
/// averaged curve.
pub fn cross_validate_c(
    u_hat: &DMatrix<f64>,
    rule: ShrinkageRule,
    cfg: &CvConfig,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let (p, t) = (u_hat.nrows(), u_hat.ncols());
    cfg.validate(t)?;
    let omega = crate::threshold::omega(p, t);

    let (sigma_full, theta_full) = residual_moments(u_hat)?;
    let lower = c_min_from_moments(&sigma_full, &theta_full, omega, rule, 1e-3)? + cfg.epsilon;
    let cap = diagonalizing_cap(&sigma_full, &theta_full, omega, rule)?;
    if lower >= cap {
        return Err(PoetError::EmptyGrid {
            lower,
            upper: cap,
        });
    }
    let grid: Vec<f64> = (0..cfg.grid_points)
        .map(|i| lower + (cap - lower) * i as f64 / (cfg.grid_points - 1) as f64)
        .collect();

    let train_len = cfg.train_len(t);
    let mut scores = vec![0.0f64; grid.len()];
    let mut rng = stream_rng(cfg.seed, 20);
    for _fold in 0..cfg.h {
        let (train, validate) = split_indices(t, train_len, cfg.split, &mut rng);
        let u_train = columns(u_hat, &train);
        let (sigma_train, theta_train) = residual_moments(&u_train)?;
        let u_val = columns(u_hat, &validate);
        let t2 = validate.len() as f64;
        let sigma_val = SymMatrix::from_matrix(&u_val * u_val.transpose() / t2)?;
        for (gi, &c) in grid.iter().enumerate() {
            let thr = thresholded_at(&sigma_train, &theta_train, omega, c, rule)?;
            let diff = thr.sub(&sigma_val);
            let fro = crate::linalg::norm_frobenius(&diff);
            scores[gi] += fro * fro;
        }
    }
    let h = cfg.h as f64;
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .zip(scores.iter())
        .map(|(&c, &s)| (c, s / h))
        .collect();

    let mut best = 0usize;
    for (i, &(_, s)) in curve.iter().enumerate() {
        if s < curve[best].1 {
            best = i;
        }
    }
    Ok((curve[best].0, curve))
}
