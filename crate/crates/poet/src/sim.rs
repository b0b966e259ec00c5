//! Synthetic panel generators: the calibrated three-factor design, the
//! banded-error design, and the sparse / AR(1) comparison models.
//!
//! All generators are deterministic functions of `(params, p, T, seed)`;
//! replication batches should vary the seed per replication.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PoetError, Result};
use crate::linalg::{eigh, SymMatrix};
use crate::panel::ReturnPanel;
use crate::rng::stream_rng;

/// Ground truth behind a simulated panel.
#[derive(Debug, Clone)]
pub struct TrueModel {
    /// `p x K` loading matrix.
    pub loadings: DMatrix<f64>,
    /// Stationary covariance of the factor process (`K x K`).
    pub factor_cov: SymMatrix,
    /// Idiosyncratic covariance (`p x p`).
    pub sigma_u: SymMatrix,
    /// Implied covariance `B cov(f) B' + Sigma_u`.
    pub sigma: SymMatrix,
    /// The factor draws actually used (`T x K`), for known-factor
    /// comparisons.
    pub realized_factors: DMatrix<f64>,
    /// The idiosyncratic draws actually used (`p x T`).
    pub realized_errors: DMatrix<f64>,
}

impl TrueModel {
    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }
}

/// Parameters of the calibrated generator: loading distribution, VAR(1)
/// factor process, and the sparse error-covariance construction.
///
/// The default loading and factor-process values reproduce the published
/// calibration; the gamma and correlation moments are synthetic defaults
/// (the original residual statistics are unpublished) and should be refit
/// with the `calibrate` pipeline when real residuals are available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Mean of the loading distribution.
    pub mu_b: [f64; 3],
    /// Covariance of the loading distribution.
    pub sigma_b: [[f64; 3]; 3],
    /// Intercept of the factor VAR(1).
    pub mu_f: [f64; 3],
    /// VAR(1) coefficient matrix (spectral radius < 1).
    pub phi: [[f64; 3]; 3],
    /// Innovation covariance of the factor VAR(1).
    pub sigma_eps: [[f64; 3]; 3],
    /// Gamma shape for the error standard deviations.
    pub gamma_shape: f64,
    /// Gamma scale for the error standard deviations.
    pub gamma_scale: f64,
    /// Mean of the raw error correlations.
    pub corr_mean: f64,
    /// Standard deviation of the raw error correlations.
    pub corr_sd: f64,
    /// Truncation cap for the raw correlations (must lie in (0, 1)).
    pub corr_cap: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        // Loading moments and the factor VAR coefficients are the published
        // calibration to the 100 industrial portfolios; sigma_eps is implied
        // by the published cov(f) via sigma_eps = C - Phi C Phi'.
        let phi = [
            [-0.0712, 0.0468, 0.1413],
            [-0.0764, -0.0008, 0.0646],
            [0.0195, -0.0071, -0.0544],
        ];
        let cov_f = [
            [1.0037, 0.0011, -0.0009],
            [0.0011, 0.9999, 0.0042],
            [-0.0009, 0.0042, 0.9973],
        ];
        let phi_m = DMatrix::from_fn(3, 3, |i, j| phi[i][j]);
        let c_m = DMatrix::from_fn(3, 3, |i, j| cov_f[i][j]);
        let eps = &c_m - &phi_m * &c_m * phi_m.transpose();
        let mut sigma_eps = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                sigma_eps[i][j] = 0.5 * (eps[(i, j)] + eps[(j, i)]);
            }
        }
        // Gamma moments chosen to give well-conditioned error covariances:
        // sd mean 0.4, sd 0.1 (shape 16, scale 0.025 by method of moments).
        Self {
            mu_b: [0.0047, 0.0007, -1.8078],
            sigma_b: [
                [0.0767, -0.00004, 0.0087],
                [-0.00004, 0.0841, 0.0013],
                [0.0087, 0.0013, 0.1649],
            ],
            mu_f: [-0.0050, 0.0335, -0.0756],
            phi,
            sigma_eps,
            gamma_shape: 16.0,
            gamma_scale: 0.025,
            corr_mean: 0.0,
            corr_sd: 0.2,
            corr_cap: 0.95,
        }
    }
}

impl CalibrationParams {
    /// Gamma parameters from the target mean and standard deviation of the
    /// error standard deviations (method of moments).
    pub fn set_gamma_from_moments(&mut self, mean: f64, sd: f64) -> Result<()> {
        if mean <= 0.0 || sd <= 0.0 {
            return Err(PoetError::InvalidParameter(
                "gamma moments must be positive".into(),
            ));
        }
        self.gamma_shape = (mean / sd).powi(2);
        self.gamma_scale = sd * sd / mean;
        Ok(())
    }

    pub fn phi_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| self.phi[i][j])
    }

    pub fn sigma_eps_matrix(&self) -> Result<SymMatrix> {
        SymMatrix::from_matrix(DMatrix::from_fn(3, 3, |i, j| self.sigma_eps[i][j]))
    }

    pub fn sigma_b_matrix(&self) -> Result<SymMatrix> {
        SymMatrix::from_matrix(DMatrix::from_fn(3, 3, |i, j| self.sigma_b[i][j]))
    }

    pub fn validate(&self) -> Result<()> {
        let radius = spectral_radius(&self.phi_matrix());
        if radius >= 1.0 {
            return Err(PoetError::NonStationary { radius });
        }
        if self.gamma_shape <= 0.0 || self.gamma_scale <= 0.0 {
            return Err(PoetError::InvalidParameter(
                "gamma parameters must be positive".into(),
            ));
        }
        if !(0.0 < self.corr_cap && self.corr_cap < 1.0) {
            return Err(PoetError::InvalidParameter(format!(
                "correlation cap must lie in (0, 1), got {}",
                self.corr_cap
            )));
        }
        if self.corr_sd < 0.0 {
            return Err(PoetError::InvalidParameter(
                "correlation sd must be non-negative".into(),
            ));
        }
        if self.corr_sd == 0.0 && self.corr_mean.abs() > self.corr_cap {
            return Err(PoetError::InvalidParameter(
                "degenerate correlation draw outside the cap".into(),
            ));
        }
        for (name, m) in [
            ("sigma_b", self.sigma_b_matrix()?),
            ("sigma_eps", self.sigma_eps_matrix()?),
        ] {
            let spec = eigh(&m)?;
            let lmin = spec.eigenvalues[2];
            if lmin < -1e-10 * spec.eigenvalues[0].abs().max(1.0) {
                return Err(PoetError::InvalidParameter(format!(
                    "{name} must be positive semi-definite (lambda_min = {lmin:.3e})"
                )));
            }
        }
        Ok(())
    }
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.norm()))
}

/// Stationary covariance of a VAR(1) process: solves the discrete Lyapunov
/// equation `C = Phi C Phi' + Sigma_eps` by vectorization,
/// `vec(C) = (I - Phi (x) Phi)^{-1} vec(Sigma_eps)`.
pub fn var1_stationary_covariance(phi: &DMatrix<f64>, sigma_eps: &SymMatrix) -> Result<SymMatrix> {
    let k = phi.nrows();
    if phi.ncols() != k || sigma_eps.dim() != k {
        return Err(PoetError::DimensionMismatch {
            expected: format!("{k}x{k} phi and sigma_eps"),
            actual: format!(
                "{}x{} and {}x{}",
                phi.nrows(),
                phi.ncols(),
                sigma_eps.dim(),
                sigma_eps.dim()
            ),
        });
    }
    let radius = spectral_radius(phi);
    if radius >= 1.0 {
        return Err(PoetError::NonStationary { radius });
    }
    let kron = phi.kronecker(phi);
    let system = DMatrix::<f64>::identity(k * k, k * k) - kron;
    let rhs = DVector::from_fn(k * k, |idx, _| sigma_eps[(idx % k, idx / k)]);
    let sol = system.lu().solve(&rhs).ok_or(PoetError::SingularMatrix {
        lambda_min: 0.0,
    })?;
    let c = DMatrix::from_fn(k, k, |i, j| sol[j * k + i]);
    let c = SymMatrix::from_matrix(c)?;

    let residual = c.matrix() - phi * c.matrix() * phi.transpose() - sigma_eps.matrix();
    if crate::linalg::matrix_norm_max(&residual) > 1e-10 * (1.0 + crate::linalg::norm_max(&c)) {
        return Err(PoetError::InvalidParameter(
            "Lyapunov solve failed the residual check".into(),
        ));
    }
    Ok(c)
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Square-root factor of a PSD matrix through its spectrum; tiny negative
/// eigenvalues are clamped to zero so degenerate covariances can be
/// sampled.
fn psd_factor(m: &SymMatrix) -> Result<DMatrix<f64>> {
    let spec = eigh(m)?;
    let lmax = spec.eigenvalues[0].max(0.0);
    let lmin = spec.eigenvalues[spec.dim() - 1];
    if lmin < -1e-10 * lmax.max(1.0) {
        return Err(PoetError::SingularMatrix { lambda_min: lmin });
    }
    let mut f = spec.eigenvectors.clone();
    for j in 0..f.ncols() {
        let s = spec.eigenvalues[j].max(0.0).sqrt();
        for i in 0..f.nrows() {
            f[(i, j)] *= s;
        }
    }
    Ok(f)
}

/// Sparse error covariance `Sigma_u = D Sigma_0 D`.
///
/// `D` holds independent Gamma standard deviations. The raw correlations
/// are truncated normals capped at `corr_cap`; `Sigma_0` is then
/// hard-thresholded at the smallest grid value (descending from 1 in steps
/// of 0.01) that still leaves it positive definite.
pub fn calibrate_error_covariance(
    params: &CalibrationParams,
    p: usize,
    seed: u64,
) -> Result<SymMatrix> {
    params.validate()?;
    let gamma = Gamma::new(params.gamma_shape, params.gamma_scale)
        .map_err(|e| PoetError::InvalidParameter(format!("gamma parameters: {e}")))?;
    let mut rng = stream_rng(seed, 10);
    let sds = DVector::from_fn(p, |_, _| gamma.sample(&mut rng));

    let mut rng = stream_rng(seed, 11);
    let mut raw = DMatrix::<f64>::identity(p, p);
    for i in 0..p {
        for j in 0..i {
            let rho = truncated_normal(params.corr_mean, params.corr_sd, params.corr_cap, &mut rng)?;
            raw[(i, j)] = rho;
            raw[(j, i)] = rho;
        }
    }

    // Walk the threshold grid down from 1.00 and keep the last PD matrix.
    let mut last_pd: Option<DMatrix<f64>> = None;
    for step in (0..=100).rev() {
        let thr = step as f64 / 100.0;
        let mut candidate = raw.clone();
        for i in 0..p {
            for j in 0..p {
                if i != j && candidate[(i, j)].abs() <= thr {
                    candidate[(i, j)] = 0.0;
                }
            }
        }
        if candidate.clone().cholesky().is_some() {
            last_pd = Some(candidate);
        } else {
            break;
        }
    }
    let sigma0 = last_pd.ok_or_else(|| {
        PoetError::InvalidParameter("correlation matrix not PD even at threshold 1".into())
    })?;

    let mut sigma_u = sigma0;
    for i in 0..p {
        for j in 0..p {
            sigma_u[(i, j)] *= sds[i] * sds[j];
        }
    }
    SymMatrix::from_matrix(sigma_u)
}

fn truncated_normal(mean: f64, sd: f64, cap: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    if sd == 0.0 {
        return Ok(mean);
    }
    for _ in 0..10_000 {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + sd * z;
        if x.abs() <= cap {
            return Ok(x);
        }
    }
    Err(PoetError::InvalidParameter(
        "truncated normal rejection sampling did not terminate".into(),
    ))
}

/// VAR(1) factor path of length `t` after a 500-step burn-in from the
/// stationary mean. Returns a `t x k` matrix (one factor vector per row).
fn var1_path(
    params: &CalibrationParams,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let phi = params.phi_matrix();
    let eps_factor = psd_factor(&params.sigma_eps_matrix()?)?;
    let mu = DVector::from_fn(3, |i, _| params.mu_f[i]);
    // Stationary mean (I - Phi)^{-1} mu.
    let mut f = (DMatrix::<f64>::identity(3, 3) - &phi)
        .lu()
        .solve(&mu)
        .ok_or(PoetError::NonStationary { radius: 1.0 })?;
    let burn_in = 500;
    let mut path = DMatrix::zeros(t, 3);
    for step in 0..(burn_in + t) {
        let z = DVector::from_fn(3, |_, _| StandardNormal.sample(rng));
        f = &mu + &phi * &f + &eps_factor * z;
        if step >= burn_in {
            path.set_row(step - burn_in, &f.transpose());
        }
    }
    Ok(path)
}

/// Calibrated three-factor design: loadings `N_3(mu_B, Sigma_B)`, factors
/// from the VAR(1), errors `N_p(0, Sigma_u)` with the sparse calibrated
/// covariance. A non-PD error covariance draw is regenerated with a new
/// sub-seed, at most 100 times.
pub fn simulate_calibrated(
    params: &CalibrationParams,
    p: usize,
    t: usize,
    seed: u64,
) -> Result<(ReturnPanel, TrueModel)> {
    params.validate()?;
    if p < 1 || t < 2 {
        return Err(PoetError::InvalidParameter(format!(
            "need p >= 1 and T >= 2, got p = {p}, T = {t}"
        )));
    }

    // Loadings.
    let b_factor = psd_factor(&params.sigma_b_matrix()?)?;
    let mut rng_b = stream_rng(seed, 0);
    let mut loadings = DMatrix::zeros(p, 3);
    for i in 0..p {
        let z = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng_b));
        let b = DVector::from_fn(3, |r, _| params.mu_b[r]) + &b_factor * z;
        loadings.set_row(i, &b.transpose());
    }

    // Error covariance, regenerating on (numerically) non-PD draws.
    let mut sigma_u = None;
    let mut error_factor = None;
    for attempt in 0..100u64 {
        let candidate = calibrate_error_covariance(params, p, crate::rng::mix(seed, attempt))?;
        if let Some(chol) = candidate.matrix().clone().cholesky() {
            error_factor = Some(chol.l());
            sigma_u = Some(candidate);
            break;
        }
    }
    let sigma_u = sigma_u.ok_or_else(|| {
        PoetError::InvalidParameter("no positive-definite error covariance in 100 attempts".into())
    })?;
    let error_factor = error_factor.expect("set alongside sigma_u");

    // Factors and errors.
    let mut rng_f = stream_rng(seed, 2);
    let factors = var1_path(params, t, &mut rng_f)?;
    let mut rng_u = stream_rng(seed, 3);
    let errors = &error_factor * standard_normal_matrix(p, t, &mut rng_u);

    let y = &loadings * factors.transpose() + &errors;
    let panel = ReturnPanel::from_matrix(y)?;

    let factor_cov = var1_stationary_covariance(&params.phi_matrix(), &params.sigma_eps_matrix()?)?;
    let sigma = SymMatrix::from_matrix(
        &loadings * factor_cov.matrix() * loadings.transpose() + sigma_u.matrix(),
    )?;

    Ok((
        panel,
        TrueModel {
            loadings,
            factor_cov,
            sigma_u,
            sigma,
            realized_factors: factors,
            realized_errors: errors,
        },
    ))
}

/// Banded idiosyncratic covariance: `0.5^{|i-j|}` inside the band,
/// zero outside, ones on the diagonal.
pub fn generate_banded_sigma_u(p: usize, decay: f64, bandwidth: usize) -> SymMatrix {
    SymMatrix::from_fn(p, |i, j| {
        let d = i.abs_diff(j);
        if d == 0 {
            1.0
        } else if d <= bandwidth {
            decay.powi(d as i32)
        } else {
            0.0
        }
    })
    .expect("banded entries are finite")
}

/// Dense Toeplitz covariance `rho^{|i-j|}` (cross-sectional AR(1)).
pub fn generate_ar1_sigma(p: usize, rho: f64) -> SymMatrix {
    SymMatrix::from_fn(p, |i, j| rho.powi(i.abs_diff(j) as i32))
        .expect("Toeplitz entries are finite")
}

/// Banded-error design: `K` standard-normal factors and loadings, banded
/// `Sigma_u` with decay 0.5 and bandwidth 9.
pub fn simulate_design2(
    p: usize,
    t: usize,
    k: usize,
    seed: u64,
) -> Result<(ReturnPanel, TrueModel)> {
    if p < 1 || t < 2 {
        return Err(PoetError::InvalidParameter(format!(
            "need p >= 1 and T >= 2, got p = {p}, T = {t}"
        )));
    }
    let sigma_u = generate_banded_sigma_u(p, 0.5, 9);
    let chol = sigma_u
        .matrix()
        .clone()
        .cholesky()
        .ok_or(PoetError::SingularMatrix { lambda_min: 0.0 })?;

    let mut rng_b = stream_rng(seed, 0);
    let loadings = standard_normal_matrix(p, k, &mut rng_b);
    let mut rng_f = stream_rng(seed, 1);
    let factors = standard_normal_matrix(t, k, &mut rng_f);
    let mut rng_u = stream_rng(seed, 2);
    let errors = chol.l() * standard_normal_matrix(p, t, &mut rng_u);

    let y = &loadings * factors.transpose() + &errors;
    let panel = ReturnPanel::from_matrix(y)?;
    let factor_cov = SymMatrix::identity(k);
    let sigma = SymMatrix::from_matrix(&loadings * loadings.transpose() + sigma_u.matrix())?;
    Ok((
        panel,
        TrueModel {
            loadings,
            factor_cov,
            sigma_u,
            sigma,
            realized_factors: factors,
            realized_errors: errors,
        },
    ))
}

/// Factorless panel drawn from a given covariance: `y_t ~ N_p(0, Sigma)`.
/// The truth records `K = 0` with `Sigma_u = Sigma`.
pub fn simulate_factorless(
    sigma: &SymMatrix,
    t: usize,
    seed: u64,
) -> Result<(ReturnPanel, TrueModel)> {
    let p = sigma.dim();
    if t < 2 {
        return Err(PoetError::InvalidParameter("need T >= 2".into()));
    }
    let factor = psd_factor(sigma)?;
    let mut rng = stream_rng(seed, 2);
    let errors = &factor * standard_normal_matrix(p, t, &mut rng);
    let panel = ReturnPanel::from_matrix(errors.clone())?;
    Ok((
        panel,
        TrueModel {
            loadings: DMatrix::zeros(p, 0),
            factor_cov: SymMatrix::zeros(0),
            sigma_u: sigma.clone(),
            sigma: sigma.clone(),
            realized_factors: DMatrix::zeros(t, 0),
            realized_errors: errors,
        },
    ))
}
