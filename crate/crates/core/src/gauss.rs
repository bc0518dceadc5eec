//! Exact Gaussian computations backing the risk and mixing oracles.
//!
//! Everything in the scalar linear setting reduces to a Gaussian residual
//! `R ~ N(μ, σ²)`: loss expectations are tail integrals with closed forms,
//! and total variation between two Gaussians is a signed sum of CDF
//! differences at the density crossing points.

use statrs::function::erf::erfc;

use crate::predictor::{LossKind, LossSpec};

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`, computed without cancellation.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `P(|R| > c)` for `R ~ N(mu, sigma²)`.
fn folded_tail(mu: f64, sigma: f64, c: f64) -> f64 {
    normal_tail((c - mu) / sigma) + normal_tail((c + mu) / sigma)
}

/// `E (|R| - c)_+` for `R ~ N(mu, sigma²)` and `c >= 0`.
fn expected_excess(mu: f64, sigma: f64, c: f64) -> f64 {
    let lo = (c - mu) / sigma;
    let hi = (c + mu) / sigma;
    sigma * normal_pdf(lo) - (c - mu) * normal_tail(lo) + sigma * normal_pdf(hi)
        - (c + mu) * normal_tail(hi)
}

/// Exact loss expectation `E ℓ(|R|, λ)` for a Gaussian residual
/// `R ~ N(mu, sigma²)`.
///
/// The indicator expectation is the folded-normal tail; the capped hinge
/// follows from the layer-cake identity
/// `E min(K, (X - c)_+) = E (X - c)_+ - E (X - c - K)_+`.
pub fn loss_expectation(mu: f64, sigma: f64, loss: &LossSpec, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0 && sigma >= 0.0);
    if sigma == 0.0 {
        return loss.loss(mu.abs(), lambda);
    }
    match loss.kind {
        LossKind::Indicator => folded_tail(mu, sigma, lambda),
        LossKind::HingeCapped { scale } => {
            let cap = lambda + loss.bound * scale;
            (expected_excess(mu, sigma, lambda) - expected_excess(mu, sigma, cap)) / scale
        }
    }
}

/// Total variation distance between `N(mu1, s1²)` and `N(mu2, s2²)`.
///
/// With equal variances the densities cross once at the midpoint and
/// `TV = 2Φ(|μ1 - μ2| / 2σ) - 1`. Otherwise the two crossings are the roots
/// of a quadratic in `y` and the distance sums the CDF gaps over the three
/// sign regions. Point masses (zero sigma) are at distance one from any
/// continuous law.
pub fn tv_distance(mu1: f64, s1: f64, mu2: f64, s2: f64) -> f64 {
    if s1 == 0.0 || s2 == 0.0 {
        if s1 == 0.0 && s2 == 0.0 {
            return if mu1 == mu2 { 0.0 } else { 1.0 };
        }
        return 1.0;
    }
    if s1 == s2 {
        if mu1 == mu2 {
            return 0.0;
        }
        return 2.0 * normal_cdf((mu1 - mu2).abs() / (2.0 * s1)) - 1.0;
    }
    let a = 0.5 / (s2 * s2) - 0.5 / (s1 * s1);
    let b = mu1 / (s1 * s1) - mu2 / (s2 * s2);
    let c = 0.5 * mu2 * mu2 / (s2 * s2) - 0.5 * mu1 * mu1 / (s1 * s1) - (s1 / s2).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0);
    // Stable quadratic roots; distinct variances guarantee two crossings.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        (q / a, c / q)
    };
    let (y1, y2) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    let gap = |y: f64| normal_cdf((y - mu1) / s1) - normal_cdf((y - mu2) / s2);
    let d1 = gap(y1);
    let d2 = gap(y2);
    0.5 * (d1.abs() + (d2 - d1).abs() + d2.abs())
}
