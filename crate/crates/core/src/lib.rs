//! Risk-controlling prediction sets calibrated from a single trajectory of a
//! stochastic dynamical system.
//!
//! The pipeline: simulate (or import) a trajectory of a linear system, score
//! a black-box point model by its residuals, pick the smallest prediction-set
//! radius whose (possibly weighted) empirical risk meets a tolerance `ε`, and
//! certify how far the true risk can exceed `ε` given how strongly the data
//! is temporally dependent. Closed-form degradation terms cover three
//! regimes:
//!
//! - `γ` for block-calibrated trajectories from geometrically mixing systems,
//! - `ν` for evaluation at a finite lag past the training data,
//! - `γ(w)` and the discrepancy `η(w)` for weighted calibration on general
//!   adapted data.
//!
//! The [`harness`] module carries exact scalar oracles and Monte Carlo
//! machinery that verify every certificate empirically.

pub mod calibration;
pub mod error;
pub mod gauss;
pub mod harness;
pub mod lti;
pub mod matrix;
pub mod predictor;
pub mod rng;

pub use calibration::{
    calibrate_blocked, calibrate_iid_standard, calibrate_weighted, certify, choose_blocks,
    gamma_theorem1, gamma_theorem2, nu_corollary1, BlockSchedule, CalibrationCertificate,
    CalibrationRule, CertificateRecord, CertifyOptions,
};
pub use error::{Error, Result};
pub use harness::{
    check_blocking_inequality, coverage_experiment, estimate_beta_scalar, estimate_eta,
    eta_for_trajectory, exact_risk_scalar, mc_risk, BlockStatistic, BlockingReport,
    CoverageConfig, ExperimentReport, RiskQuery, RiskTarget, TrialRecord,
};
pub use lti::{
    mixing_bound, resolvent_sup_norm, simulate, simulate_stream, solve_lyapunov, spectral_radius,
    InitMode, LtiSystem, MixingBound, StationaryCovariance, Trajectory,
};
pub use matrix::Matrix;
pub use predictor::{
    empirical_risk, empirical_risk_weighted, residuals, LinearModel, LossKind, LossSpec,
    NestedPredictor, PointModel, WeightVector,
};
