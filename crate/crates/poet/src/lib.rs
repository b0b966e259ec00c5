//! POET: large covariance and precision matrix estimation for approximate
//! factor models.
//!
//! The estimator keeps the leading `K` principal components of the sample
//! covariance and applies entry-adaptive shrinkage to the remaining
//! (principal orthogonal complement) part, which is assumed sparse. The
//! crate covers the full pipeline:
//!
//! - [`panel`]: return-panel ingestion, demeaning, sample covariance;
//! - [`sim`]: calibrated and stylized synthetic data generators;
//! - [`factors`]: least-squares factor/loading estimation and data-driven
//!   selection of the number of factors;
//! - [`threshold`]: generalized shrinkage rules and adaptive thresholds;
//! - [`estimator`]: the covariance estimator itself, both the spectral and
//!   the least-squares substitution routes, plus Woodbury precision
//!   matrices and error reports against a known truth;
//! - [`selection`]: the positive-definiteness constant `C_min` and
//!   cross-validation of the threshold constant;
//! - [`portfolio`]: minimum-variance weights, risk metrics and a rolling
//!   backtest.

pub mod error;
pub mod estimator;
pub mod export;
pub mod factors;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod portfolio;
pub mod rng;
pub mod selection;
pub mod sim;
pub mod threshold;

pub use error::{PoetError, Result};
pub use estimator::{
    evaluate_against_truth, poet, poet_known_factors, poet_substitution, precision_woodbury,
    principal_complement, ErrorReport, KChoice, PoetEstimate,
};
pub use factors::{estimate_factors, ic_penalty, select_num_factors, FactorFit, IcVariant,
    KSelection};
pub use linalg::{
    eigh, inv_sqrt, norm_frobenius, norm_l1, norm_max, norm_spectral, relative_spectral_error,
    spd_inverse, weighted_quadratic_norm, SymMatrix, SymmetricSpectrum,
};
pub use montecarlo::{
    aggregate, robustness_sweep, run_replications, simulate_design, sweep_means, DesignId,
    SimEstimator,
};
pub use panel::{Orientation, ReturnPanel};
pub use portfolio::{
    backtest, min_variance_weights, min_variance_weights_from_precision, risk_error_bounds,
    risk_metrics, BacktestConfig, BacktestReport, PortfolioEstimator, PortfolioWeights,
};
pub use selection::{c_min, c_min_from_moments, cross_validate_c, min_eigenvalue_curve, CvConfig,
    SplitKind};
pub use sim::{
    calibrate_error_covariance, generate_ar1_sigma, generate_banded_sigma_u, simulate_calibrated,
    simulate_design2, var1_stationary_covariance, CalibrationParams, TrueModel,
};
pub use threshold::{
    build_tau, omega, residual_moments, shrink, sparsity_measure, threshold_covariance,
    ShrinkageRule, ThresholdSpec, ThresholdStyle,
};
