//! Radius calibration rules and their validity certificates.
//!
//! Three ways of picking the prediction-set radius from calibration
//! residuals:
//!
//! - **standard** (iid baseline): smallest radius whose empirical risk meets
//!   the Hoeffding-deflated target `ε - sqrt(log(1/δ)/T)`;
//! - **blocked**: smallest radius whose plain empirical risk meets `ε`, with
//!   validity degradation `γ = sqrt(log(n / (δ - B·T·β(n))) / m)` certified
//!   through an interleaved block schedule and a geometric dependence bound;
//! - **weighted**: smallest radius whose weighted empirical risk meets `ε`,
//!   with degradation `γ(w) = B‖w‖₂·sqrt(8 log(1/δ))` valid for any adapted
//!   data source.
//!
//! Each calibration returns a [`CalibrationCertificate`] bundling the radius
//! with `(ε, δ, γ, ν)` and the schedule or weights that produced it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::MixingBound;
use crate::predictor::{
    empirical_risk, empirical_risk_weighted, LossKind, LossSpec, WeightVector,
};

/// Which calibration rule produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationRule {
    IidStandard,
    Blocked,
    Weighted,
}

impl std::fmt::Display for CalibrationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CalibrationRule::IidStandard => write!(f, "iid_standard"),
            CalibrationRule::Blocked => write!(f, "blocked"),
            CalibrationRule::Weighted => write!(f, "weighted"),
        }
    }
}

/// Partition of a length-`T` trajectory into `n` interleaved blocks of `m`
/// samples each; `trimmed` samples are dropped from the head so `m·n`
/// divides evenly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    block_len: usize,
    num_blocks: usize,
    trimmed: usize,
}

impl BlockSchedule {
    pub fn new(block_len: usize, num_blocks: usize, trimmed: usize) -> Result<Self> {
        if block_len == 0 || num_blocks == 0 {
            return Err(Error::invalid(
                "schedule",
                "block length and block count must be positive",
            ));
        }
        if trimmed >= num_blocks {
            return Err(Error::invalid(
                "schedule",
                format!("trimmed {trimmed} must be below the block count {num_blocks}"),
            ));
        }
        Ok(Self {
            block_len,
            num_blocks,
            trimmed,
        })
    }

    /// Block length `m`.
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Number of blocks `n`.
    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    /// Samples dropped from the trajectory head.
    pub fn trimmed(&self) -> usize {
        self.trimmed
    }

    /// Samples actually used: `m·n`.
    pub fn t_used(&self) -> usize {
        self.block_len * self.num_blocks
    }
}

fn validate_epsilon(epsilon: f64, bound: f64) -> Result<()> {
    if !(0.0..=bound).contains(&epsilon) {
        return Err(Error::invalid(
            "epsilon",
            format!("must lie in [0, {bound}], got {epsilon}"),
        ));
    }
    Ok(())
}

fn validate_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("must lie strictly in (0, 1), got {delta}"),
        ));
    }
    Ok(())
}

/// Largest exceedance count `j` with `j/T <= epsilon` under the same
/// floating-point comparison the empirical risk uses. Working with the count
/// keeps the order-statistic rule exactly consistent with a direct search
/// over thresholds, which `ceil((1-epsilon)·T)` is not under rounding.
fn max_allowed_exceedances(t: usize, epsilon: f64) -> usize {
    let tf = t as f64;
    let guess = (epsilon * tf).floor();
    let mut j = if guess.is_finite() && guess > 0.0 {
        (guess as usize).min(t)
    } else {
        0
    };
    while j + 1 <= t && (j + 1) as f64 / tf <= epsilon {
        j += 1;
    }
    while j > 0 && j as f64 / tf > epsilon {
        j -= 1;
    }
    j
}

/// Exact order-statistic radius for the indicator loss at uniform weights.
fn indicator_lambda_hat(residuals: &[f64], epsilon: f64) -> f64 {
    let t = residuals.len();
    let allowed = max_allowed_exceedances(t, epsilon);
    if allowed >= t {
        return 0.0; // even the empty set meets the tolerance
    }
    let rank = t - allowed;
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[rank - 1]
}

/// Bisection for general monotone losses: smallest radius with risk below
/// the target, returned from the feasible side of a 1e-9 bracket.
fn bisection_lambda_hat(risk_at: impl Fn(f64) -> f64, epsilon: f64, max_residual: f64) -> f64 {
    if risk_at(0.0) <= epsilon {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = max_residual;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if risk_at(mid) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn require_residuals(residuals: &[f64]) -> Result<()> {
    if residuals.is_empty() {
        return Err(Error::invalid("residuals", "at least one residual required"));
    }
    if residuals.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::invalid(
            "residuals",
            "residuals must be finite and nonnegative",
        ));
    }
    Ok(())
}

/// Smallest radius whose plain empirical risk over all `T` pairs meets `ε`.
pub fn calibrate_blocked(residuals: &[f64], loss: &LossSpec, epsilon: f64) -> Result<f64> {
    require_residuals(residuals)?;
    validate_epsilon(epsilon, loss.bound)?;
    match loss.kind {
        LossKind::Indicator => Ok(indicator_lambda_hat(residuals, epsilon)),
        LossKind::HingeCapped { .. } => {
            let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
            Ok(bisection_lambda_hat(
                |lambda| empirical_risk(residuals, loss, lambda),
                epsilon,
                max_residual,
            ))
        }
    }
}

/// The iid baseline: identical search against the Hoeffding-deflated target
/// `ε - sqrt(log(1/δ)/T)`.
pub fn calibrate_iid_standard(
    residuals: &[f64],
    loss: &LossSpec,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    require_residuals(residuals)?;
    validate_epsilon(epsilon, loss.bound)?;
    validate_delta(delta)?;
    let t = residuals.len() as f64;
    let deflated = epsilon - ((1.0 / delta).ln() / t).sqrt();
    if deflated < 0.0 {
        return Err(Error::InsufficientSamples { deflated });
    }
    calibrate_blocked(residuals, loss, deflated)
}

/// Smallest radius whose weighted empirical risk meets `ε`.
pub fn calibrate_weighted(
    residuals: &[f64],
    loss: &LossSpec,
    epsilon: f64,
    weights: &WeightVector,
) -> Result<f64> {
    require_residuals(residuals)?;
    validate_epsilon(epsilon, loss.bound)?;
    if residuals.len() != weights.len() {
        return Err(Error::LengthMismatch {
            context: "weighted calibration",
            left: residuals.len(),
            right: weights.len(),
        });
    }
    // Uniform weights are definitionally the unweighted rule; delegating
    // keeps the two paths bit-identical.
    if weights.is_uniform() {
        return calibrate_blocked(residuals, loss, epsilon);
    }
    match loss.kind {
        LossKind::Indicator => {
            // Scan candidate thresholds {0} ∪ {r_t} in ascending order and
            // return the first whose weighted exceed-mass meets the target.
            // Feasibility is evaluated with the same summation the empirical
            // risk uses, so this is exactly the infimum under f64 arithmetic.
            let mut candidates = residuals.to_vec();
            candidates.push(0.0);
            candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            candidates.dedup();
            for candidate in candidates {
                if empirical_risk_weighted(residuals, loss, candidate, weights)? <= epsilon {
                    return Ok(candidate);
                }
            }
            unreachable!("risk at the largest residual is zero");
        }
        LossKind::HingeCapped { .. } => {
            let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
            Ok(bisection_lambda_hat(
                |lambda| {
                    empirical_risk_weighted(residuals, loss, lambda, weights)
                        .expect("lengths validated")
                },
                epsilon,
                max_residual,
            ))
        }
    }
}

/// Concentration width for the blocked rule:
/// `γ = sqrt(log(n / (δ - B·T·β(n))) / m)` with `T = m·n`.
///
/// Requires the standing assumption `δ > B·T·β(n)`.
pub fn gamma_theorem1(
    schedule: &BlockSchedule,
    delta: f64,
    loss_bound: f64,
    beta_at_n: f64,
) -> Result<f64> {
    validate_delta(delta)?;
    if !(loss_bound > 0.0) {
        return Err(Error::invalid("loss bound", "must be positive"));
    }
    if !(0.0..=1.0).contains(&beta_at_n) {
        return Err(Error::invalid("beta_at_n", "must lie in [0, 1]"));
    }
    let t_used = schedule.t_used() as f64;
    let product = loss_bound * t_used * beta_at_n;
    if !(delta > product) {
        return Err(Error::BurnInUnsatisfied { delta, product });
    }
    let n = schedule.num_blocks() as f64;
    let m = schedule.block_len() as f64;
    Ok(((n / (delta - product)).ln() / m).sqrt())
}

/// Block-schedule recipe for geometric mixing:
/// `n = ceil(log(4ΓBT/δ) / (1-ρ))`, `m = floor(T/n)`,
/// `γ = sqrt(log(2n/δ)/m)`, with `Γ` the pair-process constant.
///
/// The count is bumped until the dependence mass obeys
/// `2·B·T_used·Γ·ρ^n <= δ/2`, so the certified failure budget splits evenly
/// between dependence and concentration.
pub fn choose_blocks(
    t: usize,
    delta: f64,
    loss_bound: f64,
    bound: &MixingBound,
) -> Result<(BlockSchedule, f64)> {
    if t == 0 {
        return Err(Error::invalid("T", "trajectory length must be positive"));
    }
    validate_delta(delta)?;
    if !(loss_bound > 0.0) {
        return Err(Error::invalid("loss bound", "must be positive"));
    }
    let rho = bound.decay_rate;
    let gamma_pair = bound.pair_factor * bound.gamma_const;
    let raw = (4.0 * gamma_pair * loss_bound * t as f64 / delta).ln() / (1.0 - rho);
    let mut n = if raw.is_finite() && raw > 1.0 {
        raw.ceil() as usize
    } else {
        1
    };
    loop {
        if n > t {
            return Err(Error::TrajectoryTooShort {
                needed: n,
                available: t,
            });
        }
        let m = t / n;
        let t_used = m * n;
        let mass = 2.0 * loss_bound * t_used as f64 * gamma_pair * rho.powf(n as f64);
        if mass <= delta / 2.0 {
            let gamma = ((2.0 * n as f64 / delta).ln() / m as f64).sqrt();
            let schedule = BlockSchedule::new(m, n, t - t_used)?;
            return Ok((schedule, gamma));
        }
        n += 1;
    }
}

/// Lag-`k` nonstationarity penalty: `ν = min(B, B·β(k))`.
pub fn nu_corollary1(lag: usize, loss_bound: f64, bound: &MixingBound) -> Result<f64> {
    if lag == 0 {
        return Err(Error::invalid("lag", "must be at least 1"));
    }
    if !(loss_bound > 0.0) {
        return Err(Error::invalid("loss bound", "must be positive"));
    }
    Ok((loss_bound * bound.bound(lag)).min(loss_bound))
}

/// Concentration width for the weighted rule: `γ(w) = B‖w‖₂·sqrt(8 log(1/δ))`.
pub fn gamma_theorem2(weights: &WeightVector, loss_bound: f64, delta: f64) -> Result<f64> {
    validate_delta(delta)?;
    if !(loss_bound > 0.0) {
        return Err(Error::invalid("loss bound", "must be positive"));
    }
    Ok(loss_bound * weights.l2_norm() * (8.0 * (1.0 / delta).ln()).sqrt())
}

/// Inputs a rule may need beyond the residuals.
#[derive(Debug, Clone, Default)]
pub struct CertifyOptions {
    pub schedule: Option<BlockSchedule>,
    pub weights: Option<WeightVector>,
    pub lag: Option<usize>,
    pub bound: Option<MixingBound>,
    pub seed: Option<u64>,
}

/// A calibrated radius together with the terms that certify it.
///
/// The certified risk level is `ε + γ (+ ν)`; the certificate is flagged
/// `vacuous` when that level reaches the loss bound `B`, in which case it is
/// still reported but carries no information.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCertificate {
    pub rule: CalibrationRule,
    pub lambda_hat: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub nu: Option<f64>,
    pub schedule: Option<BlockSchedule>,
    pub weights: Option<WeightVector>,
    pub loss_bound: f64,
    pub vacuous: bool,
    pub seed: Option<u64>,
}

impl CalibrationCertificate {
    /// Certified risk level `ε + γ (+ ν)`.
    pub fn certified_level(&self) -> f64 {
        self.epsilon + self.gamma + self.nu.unwrap_or(0.0)
    }

    /// Flat record for JSON/CSV serialization.
    pub fn to_record(&self) -> CertificateRecord {
        CertificateRecord {
            rule: self.rule,
            lambda_hat: self.lambda_hat,
            epsilon: self.epsilon,
            delta: self.delta,
            gamma: self.gamma,
            nu: self.nu,
            certified_level: self.certified_level(),
            vacuous: self.vacuous,
            loss_bound: self.loss_bound,
            block_len: self.schedule.as_ref().map(BlockSchedule::block_len),
            num_blocks: self.schedule.as_ref().map(BlockSchedule::num_blocks),
            t_used: self.schedule.as_ref().map(BlockSchedule::t_used),
            trimmed: self.schedule.as_ref().map(BlockSchedule::trimmed),
            weight_count: self.weights.as_ref().map(WeightVector::len),
            weight_l2_norm: self.weights.as_ref().map(WeightVector::l2_norm),
            seed: self.seed,
        }
    }
}

/// Flat key-value view of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub rule: CalibrationRule,
    pub lambda_hat: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub nu: Option<f64>,
    pub certified_level: f64,
    pub vacuous: bool,
    pub loss_bound: f64,
    pub block_len: Option<usize>,
    pub num_blocks: Option<usize>,
    pub t_used: Option<usize>,
    pub trimmed: Option<usize>,
    pub weight_count: Option<usize>,
    pub weight_l2_norm: Option<f64>,
    pub seed: Option<u64>,
}

/// Run the selected rule and attach its guarantee terms.
///
/// The blocked rule needs `schedule` and `bound`; the weighted rule needs
/// `weights`; `ν` is attached whenever `lag` and `bound` are both present.
pub fn certify(
    rule: CalibrationRule,
    residuals: &[f64],
    loss: &LossSpec,
    epsilon: f64,
    delta: f64,
    options: &CertifyOptions,
) -> Result<CalibrationCertificate> {
    validate_delta(delta)?;
    let (lambda_hat, gamma, schedule, weights) = match rule {
        CalibrationRule::Blocked => {
            let schedule = options
                .schedule
                .clone()
                .ok_or(Error::MissingOption("schedule"))?;
            let bound = options.bound.as_ref().ok_or(Error::MissingOption("bound"))?;
            if schedule.t_used() + schedule.trimmed() != residuals.len() {
                return Err(Error::LengthMismatch {
                    context: "block schedule",
                    left: schedule.t_used() + schedule.trimmed(),
                    right: residuals.len(),
                });
            }
            // Drop the oldest samples so m·n divides evenly; they are the
            // most distant from the test point.
            let used = &residuals[schedule.trimmed()..];
            let lambda_hat = calibrate_blocked(used, loss, epsilon)?;
            let gamma = gamma_theorem1(
                &schedule,
                delta,
                loss.bound,
                bound.bound(schedule.num_blocks()),
            )?;
            (lambda_hat, gamma, Some(schedule), None)
        }
        CalibrationRule::IidStandard => {
            // The Hoeffding width is folded into the calibration target, so
            // the certified level is epsilon itself.
            let lambda_hat = calibrate_iid_standard(residuals, loss, epsilon, delta)?;
            (lambda_hat, 0.0, None, None)
        }
        CalibrationRule::Weighted => {
            let weights = options
                .weights
                .clone()
                .ok_or(Error::MissingOption("weights"))?;
            let lambda_hat = calibrate_weighted(residuals, loss, epsilon, &weights)?;
            let gamma = gamma_theorem2(&weights, loss.bound, delta)?;
            (lambda_hat, gamma, None, Some(weights))
        }
    };
    let nu = match (options.lag, options.bound.as_ref()) {
        (Some(lag), Some(bound)) => Some(nu_corollary1(lag, loss.bound, bound)?),
        (Some(_), None) => return Err(Error::MissingOption("bound")),
        _ => None,
    };
    let certified = epsilon + gamma + nu.unwrap_or(0.0);
    Ok(CalibrationCertificate {
        rule,
        lambda_hat,
        epsilon,
        delta,
        gamma,
        nu,
        schedule,
        weights,
        loss_bound: loss.bound,
        vacuous: certified >= loss.bound,
        seed: options.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn blocked_zero_tolerance_covers_everything() {
        let rs = vec![0.4, 1.7, 0.2, 0.9];
        let loss = LossSpec::indicator();
        assert_eq!(calibrate_blocked(&rs, &loss, 0.0).unwrap(), 1.7);
    }

    #[test]
    fn blocked_order_statistic_enumeration() {
        let rs = ramp(10);
        let loss = LossSpec::indicator();
        let lambda = calibrate_blocked(&rs, &loss, 0.2).unwrap();
        assert_eq!(lambda, 0.8);
        assert!(empirical_risk(&rs, &loss, lambda) <= 0.2);
    }

    #[test]
    fn blocked_tie_case() {
        let rs = vec![2.5; 7];
        let loss = LossSpec::indicator();
        for epsilon in [0.0, 0.3, 0.99] {
            assert_eq!(calibrate_blocked(&rs, &loss, epsilon).unwrap(), 2.5);
        }
        assert_eq!(calibrate_blocked(&rs, &loss, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn blocked_rejects_bad_epsilon() {
        let rs = vec![1.0];
        let loss = LossSpec::indicator();
        assert!(calibrate_blocked(&rs, &loss, -0.1).is_err());
        assert!(calibrate_blocked(&rs, &loss, 1.5).is_err());
    }

    #[test]
    fn iid_standard_deflates_target() {
        // 100 residuals, delta = 1/e: deflation is exactly 0.1, so the
        // effective target is 0.1 and the radius is the 90th order statistic.
        let rs = ramp(100);
        let loss = LossSpec::indicator();
        let lambda = calibrate_iid_standard(&rs, &loss, 0.2, (-1.0_f64).exp()).unwrap();
        assert!((lambda - 0.90).abs() < 1e-12);
    }

    #[test]
    fn iid_standard_rejects_short_trajectories() {
        let rs = ramp(25);
        let loss = LossSpec::indicator();
        assert!(matches!(
            calibrate_iid_standard(&rs, &loss, 0.1, (-1.0_f64).exp()),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn iid_standard_approaches_blocked_from_above() {
        let loss = LossSpec::indicator();
        let mut prev_gap = f64::INFINITY;
        for n in [100usize, 1000, 10_000] {
            let rs = ramp(n);
            let blocked = calibrate_blocked(&rs, &loss, 0.2).unwrap();
            let standard = calibrate_iid_standard(&rs, &loss, 0.2, 0.1).unwrap();
            let gap = standard - blocked;
            assert!(gap >= 0.0);
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn weighted_enumerated_examples() {
        let rs = vec![1.0, 2.0, 3.0];
        let loss = LossSpec::indicator();
        let last = WeightVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(calibrate_weighted(&rs, &loss, 0.0, &last).unwrap(), 3.0);
        assert_eq!(calibrate_weighted(&rs, &loss, 0.5, &last).unwrap(), 3.0);
        let first_two = WeightVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(calibrate_weighted(&rs, &loss, 0.5, &first_two).unwrap(), 1.0);
    }

    #[test]
    fn weighted_point_mass_selects_its_residual() {
        let rs = vec![0.3, 2.0, 1.1, 0.7];
        let loss = LossSpec::indicator();
        let w = WeightVector::point_mass(4, 2).unwrap();
        assert_eq!(calibrate_weighted(&rs, &loss, 0.5, &w).unwrap(), 1.1);
    }

    #[test]
    fn weighted_uniform_reduces_bitwise() {
        let rs = vec![0.93, 0.11, 4.6, 2.2, 0.005, 1.0, 1.0];
        let loss = LossSpec::indicator();
        let uniform = WeightVector::uniform(rs.len()).unwrap();
        for epsilon in [0.0, 0.2, 0.51, 0.6, 0.99] {
            let blocked = calibrate_blocked(&rs, &loss, epsilon).unwrap();
            let weighted = calibrate_weighted(&rs, &loss, epsilon, &uniform).unwrap();
            assert_eq!(blocked.to_bits(), weighted.to_bits());
        }
    }

    #[test]
    fn gamma_theorem1_degenerate_single_block() {
        // One block of the whole trajectory with no dependence reproduces
        // the iid Hoeffding width.
        let schedule = BlockSchedule::new(400, 1, 0).unwrap();
        let gamma = gamma_theorem1(&schedule, 0.05, 1.0, 0.0).unwrap();
        assert!((gamma - ((1.0f64 / 0.05).ln() / 400.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gamma_theorem1_direct_value() {
        let schedule = BlockSchedule::new(100, 50, 0).unwrap();
        let gamma = gamma_theorem1(&schedule, 0.1, 1.0, 1e-5).unwrap();
        let expected = ((50.0f64 / (0.1 - 0.05)).ln() / 100.0).sqrt();
        assert!((gamma - expected).abs() < 1e-12);
        assert!((gamma - 0.2628).abs() < 1e-4);
    }

    #[test]
    fn gamma_theorem1_burn_in_boundary() {
        let schedule = BlockSchedule::new(100, 50, 0).unwrap();
        // B*T*beta = 5000 * 2e-5 = 0.1 = delta exactly.
        assert!(matches!(
            gamma_theorem1(&schedule, 0.1, 1.0, 2e-5),
            Err(Error::BurnInUnsatisfied { .. })
        ));
    }

    #[test]
    fn choose_blocks_reference_schedule() {
        let bound = MixingBound::new(5.0, 0.9, 2.0).unwrap();
        let (schedule, gamma) = choose_blocks(10_000, 0.1, 1.0, &bound).unwrap();
        assert_eq!(schedule.num_blocks(), 153);
        assert_eq!(schedule.block_len(), 65);
        assert_eq!(schedule.trimmed(), 10_000 - 153 * 65);
        let expected = ((2.0 * 153.0f64 / 0.1).ln() / 65.0).sqrt();
        assert!((gamma - expected).abs() < 1e-12);
    }

    #[test]
    fn choose_blocks_no_dependence_needs_one_block() {
        let bound = MixingBound::new(0.0, 0.5, 2.0).unwrap();
        let (schedule, _) = choose_blocks(500, 0.1, 1.0, &bound).unwrap();
        assert_eq!(schedule.num_blocks(), 1);
        assert_eq!(schedule.block_len(), 500);
        assert_eq!(schedule.trimmed(), 0);
    }

    #[test]
    fn choose_blocks_rejects_short_trajectory() {
        let bound = MixingBound::new(5.0, 0.9, 2.0).unwrap();
        assert!(matches!(
            choose_blocks(20, 0.1, 1.0, &bound),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn choose_blocks_delta_halving_increment() {
        let bound = MixingBound::new(5.0, 0.9, 2.0).unwrap();
        let max_bump = ((2.0f64).ln() / (1.0 - 0.9)).ceil() as usize;
        for delta in [0.4, 0.2, 0.1, 0.05] {
            let (a, _) = choose_blocks(100_000, delta, 1.0, &bound).unwrap();
            let (b, _) = choose_blocks(100_000, delta / 2.0, 1.0, &bound).unwrap();
            assert!(b.num_blocks() >= a.num_blocks());
            assert!(b.num_blocks() - a.num_blocks() <= max_bump);
        }
    }

    #[test]
    fn choose_blocks_enforcement_identity() {
        let mut rng_state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let gamma_const = 50.0 * next();
            let rho = 0.3 + 0.65 * next();
            let t = 1000 + (next() * 50_000.0) as usize;
            let delta = 0.01 + 0.3 * next();
            let bound = MixingBound::new(gamma_const, rho, 2.0).unwrap();
            if let Ok((schedule, _)) = choose_blocks(t, delta, 1.0, &bound) {
                let gamma_pair = bound.pair_factor * bound.gamma_const;
                let mass = 2.0
                    * schedule.t_used() as f64
                    * gamma_pair
                    * rho.powf(schedule.num_blocks() as f64);
                assert!(mass <= delta / 2.0, "mass {mass} vs delta/2 {}", delta / 2.0);
            }
        }
    }

    #[test]
    fn nu_direct_value_and_clipping() {
        let bound = MixingBound::new(1.0, 0.5, 2.0).unwrap();
        assert!((nu_corollary1(3, 1.0, &bound).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(nu_corollary1(1, 1.0, &bound).unwrap(), 1.0); // 2*0.5 clips at 1
        let mut prev = f64::INFINITY;
        for k in 1..60 {
            let nu = nu_corollary1(k, 1.0, &bound).unwrap();
            assert!(nu <= prev);
            prev = nu;
        }
        assert!(nu_corollary1(60, 1.0, &bound).unwrap() < 1e-12);
    }

    #[test]
    fn gamma_theorem2_uniform_value() {
        let w = WeightVector::uniform(32).unwrap();
        let gamma = gamma_theorem2(&w, 1.0, (-2.0f64).exp()).unwrap();
        assert!((gamma - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gamma_theorem2_point_mass_vacuous_scale() {
        let w = WeightVector::point_mass(10, 0).unwrap();
        let gamma = gamma_theorem2(&w, 1.0, (-1.0f64).exp()).unwrap();
        assert!((gamma - 8.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn certify_blocked_carries_all_terms() {
        let bound = MixingBound::new(5.0, 0.9, 2.0).unwrap();
        let (schedule, _) = choose_blocks(10_000, 0.1, 1.0, &bound).unwrap();
        let rs = ramp(10_000);
        let options = CertifyOptions {
            schedule: Some(schedule),
            bound: Some(bound),
            lag: Some(5),
            seed: Some(7),
            ..Default::default()
        };
        let cert = certify(
            CalibrationRule::Blocked,
            &rs,
            &LossSpec::indicator(),
            0.1,
            0.1,
            &options,
        )
        .unwrap();
        assert!(cert.lambda_hat.is_finite() && cert.lambda_hat > 0.0);
        assert!(cert.gamma.is_finite() && cert.gamma > 0.0);
        assert!(cert.nu.unwrap().is_finite());
        assert_eq!(cert.seed, Some(7));
        let record = cert.to_record();
        assert_eq!(record.num_blocks, Some(153));
        assert_eq!(record.t_used, Some(153 * 65));
    }

    #[test]
    fn certify_weighted_uniform_gamma_matches_formula() {
        let rs = ramp(64);
        let w = WeightVector::uniform(64).unwrap();
        let options = CertifyOptions {
            weights: Some(w.clone()),
            ..Default::default()
        };
        let cert = certify(
            CalibrationRule::Weighted,
            &rs,
            &LossSpec::indicator(),
            0.2,
            0.05,
            &options,
        )
        .unwrap();
        assert_eq!(cert.gamma, gamma_theorem2(&w, 1.0, 0.05).unwrap());
    }

    #[test]
    fn certify_max_tolerance_is_trivial() {
        let rs = ramp(20);
        let cert = certify(
            CalibrationRule::Blocked,
            &rs,
            &LossSpec::indicator(),
            1.0,
            0.1,
            &CertifyOptions {
                schedule: Some(BlockSchedule::new(20, 1, 0).unwrap()),
                bound: Some(MixingBound::new(0.0, 0.5, 2.0).unwrap()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(cert.lambda_hat, 0.0);
        assert!(cert.vacuous);
    }

    #[test]
    fn certify_missing_options_are_named() {
        let rs = ramp(10);
        let err = certify(
            CalibrationRule::Weighted,
            &rs,
            &LossSpec::indicator(),
            0.2,
            0.1,
            &CertifyOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingOption("weights")));
        let err = certify(
            CalibrationRule::Blocked,
            &rs,
            &LossSpec::indicator(),
            0.2,
            0.1,
            &CertifyOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingOption("schedule")));
    }

    proptest! {
        // The calibrated radius shrinks as the tolerance grows, and the
        // empirical risk at the radius is always feasible.
        #[test]
        fn radius_nonincreasing_in_epsilon(
            rs in proptest::collection::vec(0.0..4.0f64, 1..30),
            eps1 in 0.0..1.0f64,
            step in 0.0..1.0f64,
        ) {
            let eps2 = (eps1 + step).min(1.0);
            let loss = LossSpec::indicator();
            let l1 = calibrate_blocked(&rs, &loss, eps1).unwrap();
            let l2 = calibrate_blocked(&rs, &loss, eps2).unwrap();
            prop_assert!(l2 <= l1);
            prop_assert!(empirical_risk(&rs, &loss, l1) <= eps1);
        }

        #[test]
        fn hinge_radius_nonincreasing_and_feasible(
            rs in proptest::collection::vec(0.0..4.0f64, 1..30),
            eps1 in 0.0..2.0f64,
            step in 0.0..2.0f64,
        ) {
            let loss = LossSpec::hinge_capped(2.0, 0.5).unwrap();
            let eps2 = (eps1 + step).min(2.0);
            let l1 = calibrate_blocked(&rs, &loss, eps1).unwrap();
            let l2 = calibrate_blocked(&rs, &loss, eps2).unwrap();
            prop_assert!(l2 <= l1 + 1e-9);
            prop_assert!(empirical_risk(&rs, &loss, l1) <= eps1);
        }

        #[test]
        fn gamma2_uniform_is_minimal(
            raw in proptest::collection::vec(0.001..1.0f64, 2..40),
        ) {
            let total: f64 = raw.iter().sum();
            let normalized: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let t = normalized.len();
            let w = WeightVector::new(normalized).unwrap();
            let uniform = WeightVector::uniform(t).unwrap();
            let g_w = gamma_theorem2(&w, 1.0, 0.1).unwrap();
            let g_u = gamma_theorem2(&uniform, 1.0, 0.1).unwrap();
            prop_assert!(g_w >= g_u - 1e-12);
        }
    }
}
