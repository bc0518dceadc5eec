//! Empirical dependence measurements: mixing-coefficient estimation and the
//! blocking-technique gap check.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::calibration::BlockSchedule;
use crate::error::{Error, Result};
use crate::gauss;
use crate::lti::{simulate_stream, InitMode, LtiSystem, MixingBound};
use crate::rng;

/// Monte Carlo estimate `(mean, standard error)` of the expected total
/// variation between the lag-`k` conditional state law and the stationary
/// law, at time `t` and for a scalar contractive system.
///
/// Conditioned on `x_t`, the state `k` steps later is
/// `N(a^k x_t, σ²(1-a^{2k})/(1-a²))`, and the stationary law is
/// `N(0, σ²/(1-a²))`; the distance between the two univariate Gaussians is
/// computed exactly and averaged over `x_t ~ N(0, Σ_t)` (the zero-start
/// marginal at time `t`).
pub fn estimate_beta_scalar(
    system: &LtiSystem,
    k: usize,
    t: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if system.dim() != 1 {
        return Err(Error::invalid("system", "mixing estimation requires d = 1"));
    }
    if !system.is_contractive() {
        return Err(Error::NoStationaryDistribution {
            rho: system.spectral_radius(),
        });
    }
    if system.noise_std() == 0.0 {
        return Err(Error::invalid(
            "system",
            "mixing estimation requires positive noise",
        ));
    }
    if k == 0 || t == 0 {
        return Err(Error::invalid("lag", "k and t must be at least 1"));
    }
    if samples < 100 {
        return Err(Error::invalid("samples", "at least 100 draws required"));
    }
    let a = system.scalar_coefficient().expect("scalar system");
    let noise_var = system.noise_std() * system.noise_std();
    let stationary_sd = (noise_var / (1.0 - a * a)).sqrt();
    let marginal_sd = (noise_var * (1.0 - (a * a).powf((t - 1) as f64)) / (1.0 - a * a)).sqrt();
    let conditional_sd = (noise_var * (1.0 - (a * a).powf(k as f64)) / (1.0 - a * a)).sqrt();
    let shift = a.powf(k as f64);

    let mut rng = rng::stream(seed, 0);
    let mut total = 0.0;
    let mut total_sq = 0.0;
    for _ in 0..samples {
        let z: f64 = rng.sample(StandardNormal);
        let x_t = marginal_sd * z;
        let tv = gauss::tv_distance(shift * x_t, conditional_sd, 0.0, stationary_sd);
        total += tv;
        total_sq += tv * tv;
    }
    let n = samples as f64;
    let mean = total / n;
    let var = (total_sq - n * mean * mean).max(0.0) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// A bounded statistic of one block of scalar pairs.
pub struct BlockStatistic<'a> {
    /// Declared range of the statistic's values.
    pub range: (f64, f64),
    pub eval: Box<dyn Fn(&[(f64, f64)]) -> f64 + Sync + 'a>,
}

impl<'a> BlockStatistic<'a> {
    pub fn new(
        range: (f64, f64),
        eval: impl Fn(&[(f64, f64)]) -> f64 + Sync + 'a,
    ) -> Result<Self> {
        if !(range.0 <= range.1) || !range.0.is_finite() || !range.1.is_finite() {
            return Err(Error::invalid("range", "must be a finite ordered pair"));
        }
        Ok(Self {
            range,
            eval: Box::new(eval),
        })
    }

    /// Block mean of indicator losses `1(|y - â·x| > λ)`; the canonical
    /// statistic for coverage checks, with range [0, 1].
    pub fn mean_indicator_loss(a_hat: f64, lambda: f64) -> Self {
        Self {
            range: (0.0, 1.0),
            eval: Box::new(move |block| {
                let exceed = block
                    .iter()
                    .filter(|(x, y)| (y - a_hat * x).abs() > lambda)
                    .count();
                exceed as f64 / block.len() as f64
            }),
        }
    }

    fn width(&self) -> f64 {
        self.range.1 - self.range.0
    }
}

/// Result of the blocking-technique gap check.
#[derive(Debug, Clone, Serialize)]
pub struct BlockingReport {
    /// Monte Carlo mean of the statistic on the first interleaved block of a
    /// simulated trajectory.
    pub block_mean: f64,
    /// Monte Carlo mean of the statistic on blocks of iid stationary draws.
    pub stationary_mean: f64,
    /// Absolute difference of the two means.
    pub gap: f64,
    /// Certified right-hand side `(B₁+B₂)·m·β(n)`.
    pub certified: f64,
    /// Combined standard error of the gap estimate.
    pub standard_error: f64,
    /// Whether `gap <= certified + 3·SE`.
    pub holds: bool,
    pub samples: usize,
}

/// Monte Carlo check of the blocking inequality
/// `|E h(Z̃_Π) - E h(Z_(j))| <= (B₁+B₂)·m·β(n)` for the first interleaved
/// block `Z_(1) = {Z_t : (t-1) mod n = 0}` of a zero-started trajectory.
pub fn check_blocking_inequality(
    system: &LtiSystem,
    statistic: &BlockStatistic<'_>,
    schedule: &BlockSchedule,
    bound: &MixingBound,
    samples: usize,
    seed: u64,
) -> Result<BlockingReport> {
    if system.dim() != 1 {
        return Err(Error::invalid("system", "blocking check requires d = 1"));
    }
    if !system.is_contractive() {
        return Err(Error::NoStationaryDistribution {
            rho: system.spectral_radius(),
        });
    }
    if samples < 100 {
        return Err(Error::invalid("samples", "at least 100 draws required"));
    }
    let m = schedule.block_len();
    let n = schedule.num_blocks();
    let steps = schedule.t_used();
    let a = system.scalar_coefficient().expect("scalar system");
    let noise = system.noise_std();
    let stationary_sd = (noise * noise / (1.0 - a * a)).sqrt();

    let mut block_values = Vec::with_capacity(samples);
    let mut stationary_values = Vec::with_capacity(samples);
    let mut block = Vec::with_capacity(m);
    for i in 0..samples {
        // Trajectory side: pairs at positions 1, 1+n, ..., 1+(m-1)n.
        let traj = simulate_stream(system, steps, &InitMode::Zero, seed, 2 * i as u64)?;
        block.clear();
        for j in 0..m {
            let t = j * n; // zero-based pair index
            block.push((traj.state(t)[0], traj.state(t + 1)[0]));
        }
        block_values.push((statistic.eval)(&block));

        // Stationary side: m iid pairs drawn from the stationary law.
        let mut pair_rng = rng::stream(seed, 2 * i as u64 + 1);
        block.clear();
        for _ in 0..m {
            let zx: f64 = pair_rng.sample(StandardNormal);
            let zw: f64 = pair_rng.sample(StandardNormal);
            let x = stationary_sd * zx;
            let y = a * x + noise * zw;
            block.push((x, y));
        }
        stationary_values.push((statistic.eval)(&block));
    }

    let summarize = |values: &[f64]| {
        let count = values.len() as f64;
        let mean = values.iter().sum::<f64>() / count;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (mean, var / count)
    };
    let (block_mean, block_var) = summarize(&block_values);
    let (stationary_mean, stationary_var) = summarize(&stationary_values);
    let gap = (block_mean - stationary_mean).abs();
    let certified = statistic.width() * m as f64 * bound.bound(n);
    let standard_error = (block_var + stationary_var).sqrt();
    Ok(BlockingReport {
        block_mean,
        stationary_mean,
        gap,
        certified,
        standard_error,
        holds: gap <= certified + 3.0 * standard_error,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::mixing_bound;

    #[test]
    fn memoryless_system_has_zero_mixing() {
        let system = LtiSystem::scalar(0.0, 1.0).unwrap();
        for k in [1usize, 3, 10] {
            let (estimate, _) = estimate_beta_scalar(&system, k, 5, 500, 7).unwrap();
            assert!(estimate.abs() < 1e-12, "k={k}: estimate {estimate}");
        }
    }

    #[test]
    fn estimates_dominated_by_certified_bound() {
        let system = LtiSystem::scalar(0.9, 1.0).unwrap();
        let bound = mixing_bound(&system, 0.5).unwrap();
        for k in [1usize, 2, 5, 10, 20] {
            for t in [1usize, 10, 100] {
                let (estimate, se) =
                    estimate_beta_scalar(&system, k, t, 5_000, 40 + k as u64).unwrap();
                assert!(
                    estimate <= bound.bound(k) + 3.0 * se,
                    "k={k} t={t}: {estimate} vs bound {}",
                    bound.bound(k)
                );
            }
        }
    }

    #[test]
    fn beta_estimate_decays_in_lag() {
        let system = LtiSystem::scalar(0.8, 1.0).unwrap();
        let (short, _) = estimate_beta_scalar(&system, 1, 50, 20_000, 3).unwrap();
        let (long, _) = estimate_beta_scalar(&system, 20, 50, 20_000, 3).unwrap();
        assert!(long < short / 3.0, "beta(20) = {long} vs beta(1) = {short}");
        assert!(long < 0.05);
    }

    #[test]
    fn blocking_gap_vanishes_for_memoryless_system() {
        let system = LtiSystem::scalar(0.0, 1.0).unwrap();
        let schedule = BlockSchedule::new(10, 20, 0).unwrap();
        let bound = mixing_bound(&system, 0.5).unwrap();
        let statistic = BlockStatistic::mean_indicator_loss(0.0, 1.0);
        let report =
            check_blocking_inequality(&system, &statistic, &schedule, &bound, 2_000, 9).unwrap();
        assert!(report.holds);
        assert!(report.gap <= 4.0 * report.standard_error, "gap {}", report.gap);
    }

    #[test]
    fn blocking_inequality_holds_for_dependent_system() {
        let system = LtiSystem::scalar(0.9, 1.0).unwrap();
        let bound = mixing_bound(&system, 0.5).unwrap();
        let statistic = BlockStatistic::mean_indicator_loss(0.9, 1.0);
        for (m, n) in [(10usize, 100usize), (50, 20), (100, 10)] {
            let schedule = BlockSchedule::new(m, n, 0).unwrap();
            let report =
                check_blocking_inequality(&system, &statistic, &schedule, &bound, 1_000, 11)
                    .unwrap();
            assert!(report.holds, "schedule ({m},{n}): gap {}", report.gap);
        }
    }

    #[test]
    fn single_sample_blocks_supported() {
        let system = LtiSystem::scalar(0.5, 1.0).unwrap();
        let schedule = BlockSchedule::new(1, 50, 0).unwrap();
        let bound = mixing_bound(&system, 0.5).unwrap();
        let statistic = BlockStatistic::mean_indicator_loss(0.5, 1.0);
        let report =
            check_blocking_inequality(&system, &statistic, &schedule, &bound, 1_000, 13).unwrap();
        assert!(report.holds);
    }
}
