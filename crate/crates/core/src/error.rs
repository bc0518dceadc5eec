//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Stationary-distribution operations on a non-contractive system.
    #[error("no stationary distribution: spectral radius {rho} is not below 1")]
    NoStationaryDistribution { rho: f64 },

    /// Lyapunov fixed-point iteration cannot converge.
    #[error("Lyapunov iteration diverges: spectral radius {rho} is not below 1")]
    LyapunovDiverges { rho: f64 },

    /// Resolvent norm requested on or inside the spectrum.
    #[error("resolvent evaluated inside spectrum: radius {radius} <= spectral radius {rho}")]
    ResolventInsideSpectrum { radius: f64, rho: f64 },

    /// The blocked-calibration standing assumption delta > B*T*beta(n) fails.
    #[error(
        "burn-in unsatisfied: delta <= B*T*beta(n) (delta = {delta}, B*T*beta(n) = {product})"
    )]
    BurnInUnsatisfied { delta: f64, product: f64 },

    /// Hoeffding deflation drives the standard-rule target below zero.
    #[error(
        "insufficient samples for standard RCPS: deflated target {deflated} is negative"
    )]
    InsufficientSamples { deflated: f64 },

    /// Block-count recipe demands more blocks than there are samples.
    #[error("trajectory shorter than burn-in: need {needed} blocks but T = {available}")]
    TrajectoryTooShort { needed: usize, available: usize },

    /// Sequence lengths that must agree do not.
    #[error("{context}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// A calibration rule was invoked without one of its required inputs.
    #[error("missing required option: {0}")]
    MissingOption(&'static str),

    /// The closed-form risk oracle does not cover this configuration.
    #[error("exact risk oracle unsupported ({reason}); use the Monte Carlo oracle instead")]
    ExactOracleUnsupported { reason: String },

    /// The trajectory-conditional discrepancy oracle is scalar-linear only.
    #[error("eta oracle requires scalar linear setting")]
    EtaRequiresScalarLinear,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
