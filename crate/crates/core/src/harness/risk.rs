//! True-risk oracles: closed-form for scalar linear systems, Monte Carlo
//! for everything else.
//!
//! In the scalar linear setting the residual of the test pair is Gaussian,
//! `y - â·x = (a - â)·x + w`, so every risk target reduces to
//! [`crate::gauss::loss_expectation`] with the right mean and variance.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gauss;
use crate::lti::{simulate_stream, solve_lyapunov, InitMode, LtiSystem};
use crate::predictor::{LinearModel, PointModel};
use crate::rng;

use super::{RiskQuery, RiskTarget};

/// Mean and variance of the state at absolute time `t` (one-based), for a
/// scalar system started from `init`.
fn scalar_state_moments(system: &LtiSystem, init: &InitMode, t: usize) -> Result<(f64, f64)> {
    let a = system.scalar_coefficient().expect("scalar system");
    let noise_var = system.noise_std() * system.noise_std();
    let (mu1, var1) = match init {
        InitMode::Zero => (0.0, 0.0),
        InitMode::Explicit(x) => {
            if x.len() != 1 {
                return Err(Error::LengthMismatch {
                    context: "initial state",
                    left: x.len(),
                    right: 1,
                });
            }
            (x[0], 0.0)
        }
        InitMode::Stationary => {
            if !system.is_contractive() {
                return Err(Error::NoStationaryDistribution {
                    rho: system.spectral_radius(),
                });
            }
            (0.0, noise_var / (1.0 - a * a))
        }
    };
    let steps = (t - 1) as f64;
    let decay = (a * a).powf(steps);
    let accumulated = if (a.abs() - 1.0).abs() < 1e-15 {
        noise_var * steps
    } else {
        noise_var * (1.0 - decay) / (1.0 - a * a)
    };
    Ok((a.powf(steps) * mu1, decay * var1 + accumulated))
}

/// Exact risk for a scalar system with a scalar linear model.
///
/// Unsupported configurations (dimension above one, nonlinear models) error
/// out and point the caller at [`mc_risk`].
pub fn exact_risk_scalar(
    system: &LtiSystem,
    model: &LinearModel,
    query: &RiskQuery,
) -> Result<f64> {
    if system.dim() != 1 {
        return Err(Error::ExactOracleUnsupported {
            reason: format!("state dimension {} exceeds 1", system.dim()),
        });
    }
    let a = system.scalar_coefficient().expect("scalar system");
    let a_hat = model.scalar_coefficient().ok_or(Error::ExactOracleUnsupported {
        reason: "model is not scalar linear".to_string(),
    })?;
    let gap = a - a_hat;
    let noise = system.noise_std();
    let (mu, sigma) = match &query.target {
        RiskTarget::Stationary => {
            if !system.is_contractive() {
                return Err(Error::NoStationaryDistribution {
                    rho: system.spectral_radius(),
                });
            }
            let stationary_var = noise * noise / (1.0 - a * a);
            (0.0, (gap * gap * stationary_var + noise * noise).sqrt())
        }
        RiskTarget::MarginalAtLag {
            lag,
            train_len,
            init,
        } => {
            let (state_mean, state_var) = scalar_state_moments(system, init, train_len + lag)?;
            (
                gap * state_mean,
                (gap * gap * state_var + noise * noise).sqrt(),
            )
        }
        RiskTarget::ConditionalGiven { x_next } => {
            if x_next.len() != 1 {
                return Err(Error::LengthMismatch {
                    context: "x_next",
                    left: x_next.len(),
                    right: 1,
                });
            }
            (gap * x_next[0], noise)
        }
    };
    Ok(gauss::loss_expectation(mu, sigma, &query.loss, query.lambda))
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo risk estimate `(mean, standard error)` for any dimension and
/// any point model.
pub fn mc_risk<M: PointModel>(
    system: &LtiSystem,
    model: &M,
    query: &RiskQuery,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 100 {
        return Err(Error::invalid("samples", "at least 100 draws required"));
    }
    let d = system.dim();
    let noise = system.noise_std();
    let losses: Vec<f64> = match &query.target {
        RiskTarget::Stationary => {
            if !system.is_contractive() {
                return Err(Error::NoStationaryDistribution {
                    rho: system.spectral_radius(),
                });
            }
            let factor = solve_lyapunov(system)?.sigma_inf.cholesky_psd()?;
            let mut rng = rng::stream(seed, 0);
            (0..samples)
                .map(|_| {
                    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let x = factor.matvec(&z);
                    let mut y = system.dynamics().matvec(&x);
                    for item in y.iter_mut() {
                        let w: f64 = rng.sample(StandardNormal);
                        *item += noise * w;
                    }
                    pair_loss(model, &x, &y, query)
                })
                .collect()
        }
        RiskTarget::MarginalAtLag {
            lag,
            train_len,
            init,
        } => {
            let steps = train_len + lag;
            let mut losses = Vec::with_capacity(samples);
            for i in 0..samples {
                let traj = simulate_stream(system, steps, init, seed, i as u64)?;
                let (x, y) = (traj.state(steps - 1), traj.state(steps));
                losses.push(pair_loss(model, x, y, query));
            }
            losses
        }
        RiskTarget::ConditionalGiven { x_next } => {
            if x_next.len() != d {
                return Err(Error::LengthMismatch {
                    context: "x_next",
                    left: x_next.len(),
                    right: d,
                });
            }
            let mut rng = rng::stream(seed, 0);
            (0..samples)
                .map(|_| {
                    let mut y = system.dynamics().matvec(x_next);
                    for item in y.iter_mut() {
                        let w: f64 = rng.sample(StandardNormal);
                        *item += noise * w;
                    }
                    pair_loss(model, x_next, &y, query)
                })
                .collect()
        }
    };
    Ok(mean_and_se(&losses))
}

fn pair_loss<M: PointModel>(model: &M, x: &[f64], y: &[f64], query: &RiskQuery) -> f64 {
    let pred = model.predict(x);
    let residual = y
        .iter()
        .zip(&pred)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt();
    query.loss.loss(residual, query.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::LossSpec;

    #[test]
    fn stationary_indicator_standard_tail() {
        // Perfect model: residual is a standard normal draw.
        let system = LtiSystem::scalar(0.9, 1.0).unwrap();
        let model = LinearModel::scalar(0.9).unwrap();
        let query = RiskQuery::new(RiskTarget::Stationary, 1.6449, LossSpec::indicator()).unwrap();
        let risk = exact_risk_scalar(&system, &model, &query).unwrap();
        assert!((risk - 0.10).abs() < 1e-4);
    }

    #[test]
    fn zero_radius_risk_is_one() {
        let system = LtiSystem::scalar(0.5, 1.0).unwrap();
        let model = LinearModel::scalar(0.2).unwrap();
        let query = RiskQuery::new(RiskTarget::Stationary, 0.0, LossSpec::indicator()).unwrap();
        assert_eq!(exact_risk_scalar(&system, &model, &query).unwrap(), 1.0);
    }

    #[test]
    fn perfect_model_conditional_matches_stationary() {
        let system = LtiSystem::scalar(0.8, 1.0).unwrap();
        let model = LinearModel::scalar(0.8).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            let conditional = RiskQuery::new(
                RiskTarget::ConditionalGiven { x_next: vec![x] },
                1.0,
                LossSpec::indicator(),
            )
            .unwrap();
            let stationary =
                RiskQuery::new(RiskTarget::Stationary, 1.0, LossSpec::indicator()).unwrap();
            let c = exact_risk_scalar(&system, &model, &conditional).unwrap();
            let s = exact_risk_scalar(&system, &model, &stationary).unwrap();
            assert!((c - s).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_init_marginal_equals_stationary() {
        let system = LtiSystem::scalar(0.7, 1.0).unwrap();
        let model = LinearModel::scalar(0.4).unwrap();
        let stationary =
            RiskQuery::new(RiskTarget::Stationary, 0.8, LossSpec::indicator()).unwrap();
        let marginal = RiskQuery::new(
            RiskTarget::MarginalAtLag {
                lag: 3,
                train_len: 7,
                init: InitMode::Stationary,
            },
            0.8,
            LossSpec::indicator(),
        )
        .unwrap();
        let s = exact_risk_scalar(&system, &model, &stationary).unwrap();
        let m = exact_risk_scalar(&system, &model, &marginal).unwrap();
        assert!((s - m).abs() < 1e-12);
    }

    #[test]
    fn marginal_converges_to_stationary_in_lag() {
        let system = LtiSystem::scalar(0.9, 1.0).unwrap();
        let model = LinearModel::scalar(0.6).unwrap();
        let stationary =
            RiskQuery::new(RiskTarget::Stationary, 1.2, LossSpec::indicator()).unwrap();
        let s = exact_risk_scalar(&system, &model, &stationary).unwrap();
        let mut prev_gap = f64::INFINITY;
        for lag in [1usize, 5, 20, 100, 400] {
            let marginal = RiskQuery::new(
                RiskTarget::MarginalAtLag {
                    lag,
                    train_len: 2,
                    init: InitMode::Explicit(vec![10.0]),
                },
                1.2,
                LossSpec::indicator(),
            )
            .unwrap();
            let m = exact_risk_scalar(&system, &model, &marginal).unwrap();
            let gap = (m - s).abs();
            assert!(gap <= prev_gap + 1e-12);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-6);
    }

    #[test]
    fn mc_agrees_with_exact_on_random_scalar_configurations() {
        let mut seeds = 0u64;
        let mut state = 0x853C49E6748FEA9Bu64;
        let mut uniform = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for case in 0..20 {
            let a = 0.95 * (2.0 * uniform() - 1.0);
            let a_hat = 1.5 * (2.0 * uniform() - 1.0);
            let noise = 0.2 + uniform();
            let lambda = 2.0 * uniform();
            let system = LtiSystem::scalar(a, noise).unwrap();
            let model = LinearModel::scalar(a_hat).unwrap();
            let query =
                RiskQuery::new(RiskTarget::Stationary, lambda, LossSpec::indicator()).unwrap();
            let exact = exact_risk_scalar(&system, &model, &query).unwrap();
            seeds += 1;
            let (estimate, se) = mc_risk(&system, &model, &query, 20_000, 1000 + seeds).unwrap();
            assert!(
                (estimate - exact).abs() <= 3.0 * se.max(1e-4),
                "case {case}: exact {exact}, mc {estimate} +- {se}"
            );
        }
    }

    #[test]
    fn mc_se_shrinks_with_samples() {
        let system = LtiSystem::scalar(0.5, 1.0).unwrap();
        let model = LinearModel::scalar(0.3).unwrap();
        let query = RiskQuery::new(RiskTarget::Stationary, 0.7, LossSpec::indicator()).unwrap();
        let (_, se1) = mc_risk(&system, &model, &query, 5_000, 5).unwrap();
        let (_, se2) = mc_risk(&system, &model, &query, 20_000, 5).unwrap();
        let ratio = se1 / se2;
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn mc_zero_noise_perfect_model_is_zero() {
        let system = LtiSystem::scalar(0.5, 0.0).unwrap();
        let model = LinearModel::scalar(0.5).unwrap();
        let query = RiskQuery::new(RiskTarget::Stationary, 0.1, LossSpec::indicator()).unwrap();
        let (estimate, se) = mc_risk(&system, &model, &query, 500, 0).unwrap();
        assert_eq!(estimate, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn mc_rejects_tiny_sample_counts() {
        let system = LtiSystem::scalar(0.5, 1.0).unwrap();
        let model = LinearModel::scalar(0.5).unwrap();
        let query = RiskQuery::new(RiskTarget::Stationary, 0.1, LossSpec::indicator()).unwrap();
        assert!(mc_risk(&system, &model, &query, 50, 0).is_err());
    }

    #[test]
    fn exact_oracle_rejects_multidimensional_systems() {
        let a = crate::matrix::Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let system = LtiSystem::new(a.clone(), 1.0).unwrap();
        let model = LinearModel::new(a).unwrap();
        let query = RiskQuery::new(RiskTarget::Stationary, 1.0, LossSpec::indicator()).unwrap();
        assert!(matches!(
            exact_risk_scalar(&system, &model, &query),
            Err(Error::ExactOracleUnsupported { .. })
        ));
    }
}
