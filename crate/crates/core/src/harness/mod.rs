//! Monte Carlo and closed-form oracles that check the guarantees at desk
//! scale: exact risk evaluation for scalar linear systems, empirical mixing
//! estimation, the blocking-technique gap check, the trajectory-conditional
//! discrepancy, and full coverage experiments.

mod experiment;
mod mixing;
mod risk;

pub use experiment::{
    coverage_experiment, estimate_eta, eta_for_trajectory, CoverageConfig, ExperimentReport,
    TrialRecord,
};
pub use mixing::{check_blocking_inequality, estimate_beta_scalar, BlockStatistic, BlockingReport};
pub use risk::{exact_risk_scalar, mc_risk};

use crate::error::{Error, Result};
use crate::lti::InitMode;
use crate::predictor::LossSpec;

/// Which distribution the true risk is evaluated under.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskTarget {
    /// The stationary law of the pair process.
    Stationary,
    /// The marginal law of the pair at time `train_len + lag`, for a
    /// trajectory started from `init`.
    MarginalAtLag {
        lag: usize,
        train_len: usize,
        init: InitMode,
    },
    /// The law of the next pair given the realized trajectory, which fixes
    /// the test feature `x_{T+1}`.
    ConditionalGiven { x_next: Vec<f64> },
}

/// A true-risk evaluation request.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskQuery {
    pub target: RiskTarget,
    pub lambda: f64,
    pub loss: LossSpec,
}

impl RiskQuery {
    pub fn new(target: RiskTarget, lambda: f64, loss: LossSpec) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("lambda", "must be finite and nonnegative"));
        }
        match &target {
            RiskTarget::MarginalAtLag { lag, train_len, .. } => {
                if *lag == 0 {
                    return Err(Error::invalid("lag", "must be at least 1"));
                }
                if *train_len == 0 {
                    return Err(Error::invalid("train_len", "must be at least 1"));
                }
            }
            RiskTarget::ConditionalGiven { x_next } => {
                if x_next.is_empty() || x_next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("x_next", "must be finite and nonempty"));
                }
            }
            RiskTarget::Stationary => {}
        }
        Ok(Self {
            target,
            lambda,
            loss,
        })
    }
}
