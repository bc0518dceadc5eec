//! Trajectory-conditional discrepancy oracle and end-to-end coverage
//! experiments.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{
    certify, choose_blocks, gamma_theorem1, gamma_theorem2, nu_corollary1, CalibrationRule,
    CertifyOptions,
};
use crate::error::{Error, Result};
use crate::gauss;
use crate::lti::{mixing_bound, simulate_stream, InitMode, LtiSystem, Trajectory};
use crate::predictor::{residuals, LinearModel, LossSpec, WeightVector};

use super::{exact_risk_scalar, RiskQuery, RiskTarget};

fn scalar_coefficients(system: &LtiSystem, model: &LinearModel) -> Result<(f64, f64)> {
    match (system.scalar_coefficient(), model.scalar_coefficient()) {
        (Some(a), Some(a_hat)) => Ok((a, a_hat)),
        _ => Err(Error::EtaRequiresScalarLinear),
    }
}

/// Exact trajectory-conditional discrepancy at radius `lambda`:
/// the conditional expected loss of the next pair minus the weighted sum of
/// one-step-ahead conditional expected losses along the trajectory.
///
/// Conditioning on `Z_{1:t-1}` fixes `x_t` (the previous label), so each term
/// is a Gaussian loss expectation with mean `(a - â)·x_t`; the `t = 1` term
/// conditions on the realized first state, which is exact for deterministic
/// starts.
pub fn eta_for_trajectory(
    system: &LtiSystem,
    model: &LinearModel,
    weights: &WeightVector,
    trajectory: &Trajectory,
    loss: &LossSpec,
    lambda: f64,
) -> Result<f64> {
    let (a, a_hat) = scalar_coefficients(system, model)?;
    let pairs = trajectory.len();
    if weights.len() != pairs {
        return Err(Error::LengthMismatch {
            context: "eta weights",
            left: weights.len(),
            right: pairs,
        });
    }
    let gap = a - a_hat;
    let noise = system.noise_std();
    let future = gauss::loss_expectation(
        gap * trajectory.state(pairs)[0],
        noise,
        loss,
        lambda,
    );
    let mut past = 0.0;
    for (t, w) in weights.as_slice().iter().enumerate() {
        let x_t = trajectory.state(t)[0];
        past += w * gauss::loss_expectation(gap * x_t, noise, loss, lambda);
    }
    Ok(future - past)
}

/// Monte Carlo distribution `(mean, standard error)` of the discrepancy over
/// fresh zero-started trajectories, at a fixed radius.
#[allow(clippy::too_many_arguments)]
pub fn estimate_eta(
    system: &LtiSystem,
    model: &LinearModel,
    weights: &WeightVector,
    loss: &LossSpec,
    lambda: f64,
    train_len: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    scalar_coefficients(system, model)?;
    if samples < 100 {
        return Err(Error::invalid("samples", "at least 100 draws required"));
    }
    if weights.len() != train_len {
        return Err(Error::LengthMismatch {
            context: "eta weights",
            left: weights.len(),
            right: train_len,
        });
    }
    let mut total = 0.0;
    let mut total_sq = 0.0;
    for i in 0..samples {
        let traj = simulate_stream(system, train_len, &InitMode::Zero, seed, i as u64)?;
        let eta = eta_for_trajectory(system, model, weights, &traj, loss, lambda)?;
        total += eta;
        total_sq += eta * eta;
    }
    let n = samples as f64;
    let mean = total / n;
    let var = (total_sq - n * mean * mean).max(0.0) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Full configuration of a coverage experiment.
#[derive(Debug, Clone)]
pub struct CoverageConfig {
    pub system: LtiSystem,
    pub model: LinearModel,
    pub rule: CalibrationRule,
    pub loss: LossSpec,
    pub epsilon: f64,
    pub delta: f64,
    pub train_len: usize,
    /// Evaluate against the marginal law this many steps past the trajectory
    /// (attaches the lag penalty for the blocked rule).
    pub lag: Option<usize>,
    /// Required for the weighted rule.
    pub weights: Option<WeightVector>,
    pub trials: usize,
    pub seed: u64,
    /// Decay-rate margin used to build the mixing certificate (blocked rule).
    pub margin: f64,
    pub init: InitMode,
    /// Worker-thread cap for the trial loop; `Some(0)` and `None` pick
    /// automatically.
    pub threads: Option<usize>,
}

/// One trial of a coverage experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub lambda_hat: Option<f64>,
    pub true_risk: Option<f64>,
    pub eta: Option<f64>,
    pub certified_level: Option<f64>,
    pub success: bool,
    pub error: Option<String>,
}

/// Aggregated outcome of a coverage experiment.
///
/// `coverage_rate` estimates the probability (over training draws) that the
/// certificate holds; `mean_true_risk` is the marginal-risk diagnostic, the
/// average of exact per-trial risks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rule: CalibrationRule,
    pub trials: usize,
    pub success_count: usize,
    pub config_failures: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: Option<f64>,
    pub nu: Option<f64>,
    pub vacuous: bool,
    pub target_rate: f64,
    pub coverage_rate: f64,
    pub standard_error: f64,
    pub mean_true_risk: Option<f64>,
    pub seed: u64,
    pub train_len: usize,
    pub lag: Option<usize>,
    pub per_trial: Vec<TrialRecord>,
}

/// Run `trials` independent calibrate-then-evaluate rounds.
///
/// Each trial simulates a fresh trajectory from substream `(seed, trial)`,
/// calibrates with the configured rule, evaluates the exact true risk under
/// the rule's target distribution (stationary for blocked, marginal at the
/// lag when one is set, conditional on the realized trajectory for
/// weighted), and counts success when the risk is at most the certified
/// level (plus the per-trial discrepancy for the weighted rule). Trials run
/// concurrently over derived streams with deterministic aggregation.
pub fn coverage_experiment(config: &CoverageConfig) -> Result<ExperimentReport> {
    if config.trials < 100 {
        return Err(Error::invalid("trials", "at least 100 trials required"));
    }
    scalar_coefficients(&config.system, &config.model).map_err(|_| {
        Error::ExactOracleUnsupported {
            reason: "coverage experiments need the scalar linear oracle".to_string(),
        }
    })?;
    if config.train_len == 0 {
        return Err(Error::invalid("train_len", "must be at least 1"));
    }

    // Rule-level inputs are data-independent and shared by all trials.
    let mut options = CertifyOptions {
        seed: Some(config.seed),
        ..Default::default()
    };
    let mut nu = None;
    let gamma = match config.rule {
        CalibrationRule::Blocked => {
            let bound = mixing_bound(&config.system, config.margin)?;
            let (schedule, _) = choose_blocks(
                config.train_len,
                config.delta,
                config.loss.bound,
                &bound,
            )?;
            let gamma = gamma_theorem1(
                &schedule,
                config.delta,
                config.loss.bound,
                bound.bound(schedule.num_blocks()),
            )
            .ok();
            if let Some(lag) = config.lag {
                nu = nu_corollary1(lag, config.loss.bound, &bound).ok();
                options.lag = Some(lag);
            }
            options.schedule = Some(schedule);
            options.bound = Some(bound);
            gamma
        }
        CalibrationRule::IidStandard => Some(0.0),
        CalibrationRule::Weighted => {
            let weights = config
                .weights
                .clone()
                .ok_or(Error::MissingOption("weights"))?;
            if weights.len() != config.train_len {
                return Err(Error::LengthMismatch {
                    context: "weights",
                    left: weights.len(),
                    right: config.train_len,
                });
            }
            let gamma = gamma_theorem2(&weights, config.loss.bound, config.delta).ok();
            options.weights = Some(weights);
            gamma
        }
    };
    let vacuous = config.epsilon + gamma.unwrap_or(0.0) + nu.unwrap_or(0.0) >= config.loss.bound;

    let attempt = |trial: usize| -> Result<TrialRecord> {
        let traj = simulate_stream(
            &config.system,
            config.train_len,
            &config.init,
            config.seed,
            trial as u64,
        )?;
        let rs = residuals(&traj, &config.model);
        let cert = certify(
            config.rule,
            &rs,
            &config.loss,
            config.epsilon,
            config.delta,
            &options,
        )?;
        let (target, eta) = match config.rule {
            CalibrationRule::Weighted => {
                let x_next = traj.state(config.train_len)[0];
                let eta = eta_for_trajectory(
                    &config.system,
                    &config.model,
                    options.weights.as_ref().expect("validated"),
                    &traj,
                    &config.loss,
                    cert.lambda_hat,
                )?;
                (
                    RiskTarget::ConditionalGiven {
                        x_next: vec![x_next],
                    },
                    Some(eta),
                )
            }
            _ => match config.lag {
                Some(lag) => (
                    RiskTarget::MarginalAtLag {
                        lag,
                        train_len: config.train_len,
                        init: config.init.clone(),
                    },
                    None,
                ),
                None => (RiskTarget::Stationary, None),
            },
        };
        let query = RiskQuery::new(target, cert.lambda_hat, config.loss)?;
        let true_risk = exact_risk_scalar(&config.system, &config.model, &query)?;
        let level = cert.certified_level() + eta.unwrap_or(0.0);
        Ok(TrialRecord {
            trial,
            lambda_hat: Some(cert.lambda_hat),
            true_risk: Some(true_risk),
            eta,
            certified_level: Some(level),
            success: true_risk <= level,
            error: None,
        })
    };
    let run_trial = |trial: usize| -> TrialRecord {
        attempt(trial).unwrap_or_else(|err| TrialRecord {
            trial,
            lambda_hat: None,
            true_risk: None,
            eta: None,
            certified_level: None,
            success: false,
            error: Some(err.to_string()),
        })
    };

    let run = || (0..config.trials).into_par_iter().map(run_trial).collect::<Vec<_>>();
    let per_trial = match config.threads {
        None => run(),
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?
            .install(run),
    };

    let success_count = per_trial.iter().filter(|r| r.success).count();
    let config_failures = per_trial.iter().filter(|r| r.error.is_some()).count();
    let trials = config.trials;
    let coverage_rate = success_count as f64 / trials as f64;
    let standard_error = (coverage_rate * (1.0 - coverage_rate) / trials as f64).sqrt();
    let risks: Vec<f64> = per_trial.iter().filter_map(|r| r.true_risk).collect();
    let mean_true_risk = if risks.is_empty() {
        None
    } else {
        Some(risks.iter().sum::<f64>() / risks.len() as f64)
    };
    Ok(ExperimentReport {
        rule: config.rule,
        trials,
        success_count,
        config_failures,
        epsilon: config.epsilon,
        delta: config.delta,
        gamma,
        nu,
        vacuous,
        target_rate: 1.0 - config.delta,
        coverage_rate,
        standard_error,
        mean_true_risk,
        seed: config.seed,
        train_len: config.train_len,
        lag: config.lag,
        per_trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::simulate;

    fn base_config(rule: CalibrationRule) -> CoverageConfig {
        CoverageConfig {
            system: LtiSystem::scalar(0.9, 1.0).unwrap(),
            model: LinearModel::scalar(0.9).unwrap(),
            rule,
            loss: LossSpec::indicator(),
            epsilon: 0.1,
            delta: 0.1,
            train_len: 2_000,
            lag: None,
            weights: None,
            trials: 100,
            seed: 17,
            margin: 0.5,
            init: InitMode::Zero,
            threads: None,
        }
    }

    #[test]
    fn eta_zero_for_memoryless_zero_model() {
        let system = LtiSystem::scalar(0.0, 1.0).unwrap();
        let model = LinearModel::scalar(0.0).unwrap();
        let weights = WeightVector::uniform(50).unwrap();
        let traj = simulate(&system, 50, &InitMode::Zero, 1).unwrap();
        let eta = eta_for_trajectory(
            &system,
            &model,
            &weights,
            &traj,
            &LossSpec::indicator(),
            0.5,
        )
        .unwrap();
        // All conditional expectations equal the same constant; only the
        // rounding of the weighted sum survives.
        assert!(eta.abs() < 1e-13, "eta {eta}");
    }

    #[test]
    fn eta_zero_for_perfect_model() {
        let system = LtiSystem::scalar(0.85, 1.0).unwrap();
        let model = LinearModel::scalar(0.85).unwrap();
        let weights = WeightVector::exponential_smoothing(80, 0.9).unwrap();
        let traj = simulate(&system, 80, &InitMode::Zero, 2).unwrap();
        let eta = eta_for_trajectory(
            &system,
            &model,
            &weights,
            &traj,
            &LossSpec::indicator(),
            1.3,
        )
        .unwrap();
        assert!(eta.abs() < 1e-13, "eta {eta}");
    }

    #[test]
    fn eta_depends_on_the_weighting() {
        let system = LtiSystem::scalar(0.99, 1.0).unwrap();
        let model = LinearModel::scalar(0.5).unwrap();
        let uniform = WeightVector::uniform(200).unwrap();
        let smoothed = WeightVector::exponential_smoothing(200, 0.9).unwrap();
        let (eta_u, se_u) = estimate_eta(
            &system,
            &model,
            &uniform,
            &LossSpec::indicator(),
            1.5,
            200,
            300,
            5,
        )
        .unwrap();
        let (eta_s, se_s) = estimate_eta(
            &system,
            &model,
            &smoothed,
            &LossSpec::indicator(),
            1.5,
            200,
            300,
            5,
        )
        .unwrap();
        assert!(eta_u.is_finite() && eta_s.is_finite());
        assert!(se_u > 0.0 && se_s > 0.0);
        assert_ne!(eta_u, eta_s);
    }

    #[test]
    fn eta_rejects_non_scalar_settings() {
        let a = crate::matrix::Matrix::identity(2).scale(0.5);
        let system = LtiSystem::new(a.clone(), 1.0).unwrap();
        let model = LinearModel::new(a).unwrap();
        let weights = WeightVector::uniform(10).unwrap();
        assert!(matches!(
            estimate_eta(
                &system,
                &model,
                &weights,
                &LossSpec::indicator(),
                1.0,
                10,
                200,
                0
            ),
            Err(Error::EtaRequiresScalarLinear)
        ));
    }

    #[test]
    fn blocked_coverage_meets_target() {
        let config = base_config(CalibrationRule::Blocked);
        let report = coverage_experiment(&config).unwrap();
        assert_eq!(report.config_failures, 0);
        let threshold = 1.0 - config.delta - 3.0 * report.standard_error;
        assert!(
            report.coverage_rate >= threshold,
            "coverage {} vs threshold {threshold}",
            report.coverage_rate
        );
    }

    #[test]
    fn zero_noise_perfect_model_always_succeeds() {
        let mut config = base_config(CalibrationRule::Blocked);
        config.system = LtiSystem::scalar(0.9, 0.0).unwrap();
        config.train_len = 1_000;
        let report = coverage_experiment(&config).unwrap();
        assert_eq!(report.coverage_rate, 1.0);
        assert_eq!(report.config_failures, 0);
        for record in &report.per_trial {
            assert_eq!(record.lambda_hat, Some(0.0));
            assert_eq!(record.true_risk, Some(0.0));
        }
    }

    #[test]
    fn weighted_point_mass_is_vacuous_but_reported() {
        let mut config = base_config(CalibrationRule::Weighted);
        config.weights = Some(WeightVector::point_mass(config.train_len, 0).unwrap());
        config.delta = 0.01;
        let report = coverage_experiment(&config).unwrap();
        assert!(report.vacuous);
        assert_eq!(report.success_count, report.trials);
    }

    #[test]
    fn reports_are_deterministic_across_thread_counts() {
        let mut config = base_config(CalibrationRule::Blocked);
        config.train_len = 500;
        let a = coverage_experiment(&config).unwrap();
        config.threads = Some(1);
        let b = coverage_experiment(&config).unwrap();
        config.threads = Some(4);
        let c = coverage_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn tiny_trial_counts_are_rejected() {
        let mut config = base_config(CalibrationRule::Blocked);
        config.trials = 0;
        assert!(coverage_experiment(&config).is_err());
        config.trials = 99;
        assert!(coverage_experiment(&config).is_err());
    }

    #[test]
    fn weighted_rule_requires_weights() {
        let config = base_config(CalibrationRule::Weighted);
        assert!(matches!(
            coverage_experiment(&config),
            Err(Error::MissingOption("weights"))
        ));
    }
}
