//! Linear time-invariant dynamics: simulation and mixing certificates.
//!
//! The data-generating process is `x_{t+1} = A x_t + w_t` with isotropic
//! Gaussian process noise. For contractive `A` (spectral radius below one)
//! the state law converges to `N(0, Σ_∞)` where `Σ_∞` solves the discrete
//! Lyapunov equation `A Σ_∞ A^T - Σ_∞ + σ² I = 0`, and the dependence between
//! samples k steps apart decays like `Γ ρ̄^k`. This module computes all of
//! those quantities so the calibration layer can certify its error terms.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// How the first state of a simulated trajectory is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitMode {
    /// Point mass at the origin (the default; not the stationary law).
    Zero,
    /// A draw from the stationary distribution `N(0, Σ_∞)`.
    Stationary,
    /// A fixed, user-supplied initial state.
    Explicit(Vec<f64>),
}

/// A discrete-time linear system `x_{t+1} = A x_t + w_t`, `w_t ~ N(0, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    noise_std: f64,
    rho: f64,
}

impl LtiSystem {
    pub fn new(a: Matrix, noise_std: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("dynamics matrix", "must be square"));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::invalid(
                "noise_std",
                format!("must be a finite nonnegative real, got {noise_std}"),
            ));
        }
        let rho = spectral_radius(&a)?;
        Ok(Self { a, noise_std, rho })
    }

    /// One-dimensional system with dynamics coefficient `a`.
    pub fn scalar(a: f64, noise_std: f64) -> Result<Self> {
        Self::new(Matrix::scalar(a), noise_std)
    }

    pub fn dynamics(&self) -> &Matrix {
        &self.a
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.rho
    }

    /// Whether the spectral radius is strictly below one.
    pub fn is_contractive(&self) -> bool {
        self.rho < 1.0
    }

    /// Scalar dynamics coefficient, when `d = 1`.
    pub fn scalar_coefficient(&self) -> Option<f64> {
        self.a.as_scalar()
    }
}

/// A simulated state sequence `x_1, ..., x_{T+1}`, read as `T` feature/label
/// pairs `(x_t, x_{t+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    states: Vec<f64>,
    seed: u64,
    stream: u64,
}

impl Trajectory {
    /// Number of (feature, label) pairs.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Substream index the trajectory was drawn from.
    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// State at time `t` (zero-based; `t` ranges over `0..=len()`).
    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    /// Iterator over the `T` pairs `(x_t, y_t)` with `y_t = x_{t+1}`.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        (0..self.len()).map(move |t| (self.state(t), self.state(t + 1)))
    }

    /// Rebuild a trajectory from raw states (used by file import paths).
    pub fn from_states(dim: usize, states: Vec<f64>, seed: u64, stream: u64) -> Result<Self> {
        if dim == 0 || states.len() % dim != 0 || states.len() / dim < 2 {
            return Err(Error::invalid(
                "trajectory",
                "states must hold at least two d-dimensional entries",
            ));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory", "non-finite state"));
        }
        Ok(Self {
            dim,
            states,
            seed,
            stream,
        })
    }
}

/// Solution of the discrete Lyapunov equation together with its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryCovariance {
    pub sigma_inf: Matrix,
    pub residual_norm: f64,
}

/// Geometric dependence-decay certificate: `beta(k) <= pair_factor * Γ * ρ̄^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingBound {
    /// Leading constant `Γ` for the state process.
    pub gamma_const: f64,
    /// Certified decay rate `ρ̄`, strictly inside (0, 1).
    pub decay_rate: f64,
    /// Multiplier converting the state-process bound into a bound for the
    /// (x_t, x_{t+1}) pair process.
    pub pair_factor: f64,
}

impl MixingBound {
    pub fn new(gamma_const: f64, decay_rate: f64, pair_factor: f64) -> Result<Self> {
        if !(gamma_const >= 0.0) || !gamma_const.is_finite() {
            return Err(Error::invalid("gamma_const", "must be finite and nonnegative"));
        }
        if !(decay_rate > 0.0 && decay_rate < 1.0) {
            return Err(Error::invalid("decay_rate", "must lie strictly in (0, 1)"));
        }
        if !(pair_factor >= 1.0) || !pair_factor.is_finite() {
            return Err(Error::invalid("pair_factor", "must be at least 1"));
        }
        Ok(Self {
            gamma_const,
            decay_rate,
            pair_factor,
        })
    }

    /// Pair-process dependence bound at range `k`, clipped into [0, 1].
    pub fn bound(&self, k: usize) -> f64 {
        let raw = self.pair_factor * self.gamma_const * self.decay_rate.powi(k as i32);
        raw.min(1.0)
    }
}

/// Spectral radius of a square matrix.
///
/// Dimensions one and two use the characteristic-polynomial closed form;
/// larger matrices fall back to Gelfand's formula with repeated squaring.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid("matrix", "spectral radius of non-square matrix"));
    }
    match a.rows() {
        1 => Ok(a[(0, 0)].abs()),
        2 => {
            let tr = a[(0, 0)] + a[(1, 1)];
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            let disc = tr * tr - 4.0 * det;
            if disc >= 0.0 {
                let s = disc.sqrt();
                Ok(((tr + s) * 0.5).abs().max(((tr - s) * 0.5).abs()))
            } else {
                // Complex conjugate pair; modulus is sqrt(det).
                Ok(det.sqrt())
            }
        }
        _ => gelfand_radius(a),
    }
}

/// Gelfand iteration: estimates `ρ(A)` as `‖A^{2^j}‖_F^{1/2^j}` with the
/// powers formed by repeated squaring on log-normalized copies.
pub fn gelfand_radius(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid("matrix", "spectral radius of non-square matrix"));
    }
    let mut normalized = a.clone();
    let mut log_scale = 0.0_f64;
    let mut estimate = f64::NAN;
    for j in 0..=40u32 {
        let norm = normalized.frobenius_norm();
        if norm == 0.0 {
            return Ok(0.0); // nilpotent: some power vanished exactly
        }
        // ‖A^{2^j}‖_F = e^{log_scale} · norm, so ρ̂_j = (e^{log_scale} · norm)^{1/2^j}.
        let next = ((log_scale + norm.ln()) * (0.5f64).powi(j as i32)).exp();
        if j > 0 && (next - estimate).abs() < 1e-7 {
            return Ok(next);
        }
        estimate = next;
        if j == 40 {
            break;
        }
        let unit = normalized.scale(1.0 / norm);
        normalized = unit.matmul(&unit);
        log_scale = 2.0 * (log_scale + norm.ln());
    }
    Ok(estimate)
}

/// Solve `A Σ A^T - Σ + σ² I = 0` by fixed-point iteration from `Σ = 0`.
pub fn solve_lyapunov(system: &LtiSystem) -> Result<StationaryCovariance> {
    if !system.is_contractive() {
        return Err(Error::LyapunovDiverges {
            rho: system.spectral_radius(),
        });
    }
    let d = system.dim();
    let q = Matrix::identity(d).scale(system.noise_std * system.noise_std);
    let a = system.dynamics();
    let at = a.transpose();
    let mut sigma = Matrix::zeros(d, d);
    for _ in 0..100_000 {
        let next = a.matmul(&sigma).matmul(&at).add(&q);
        let change = next.sub(&sigma).frobenius_norm();
        sigma = next;
        if change < 1e-12 {
            break;
        }
    }
    sigma.symmetrize();
    let residual_norm = a
        .matmul(&sigma)
        .matmul(&at)
        .sub(&sigma)
        .add(&q)
        .frobenius_norm();
    if residual_norm > 1e-8 {
        return Err(Error::invalid(
            "lyapunov",
            format!("iteration stalled at residual {residual_norm:e}"),
        ));
    }
    Ok(StationaryCovariance {
        sigma_inf: sigma,
        residual_norm,
    })
}

/// Supremum of `‖(zI - A)^{-1}‖₂` over the circle `|z| = radius`.
///
/// A 4096-point uniform angle grid locates the maximizer and golden-section
/// refinement tightens it; the circle must lie strictly outside the spectrum.
/// The operator norm at each angle is `1 / σ_min(zI - A)`, evaluated on the
/// real 2d x 2d embedding of the complex matrix.
pub fn resolvent_sup_norm(a: &Matrix, radius: f64) -> Result<f64> {
    let rho = spectral_radius(a)?;
    if !(radius > rho + 1e-9) {
        return Err(Error::ResolventInsideSpectrum { radius, rho });
    }
    const GRID: usize = 4096;
    let eval = |theta: f64| -> f64 {
        let sigma_min = resolvent_sigma_min(a, radius, theta);
        1.0 / sigma_min
    };
    let step = std::f64::consts::TAU / GRID as f64;
    let mut best_idx = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..GRID {
        let g = eval(i as f64 * step);
        if g > best {
            best = g;
            best_idx = i;
        }
    }
    // Golden-section refinement on the bracket around the grid maximizer.
    let center = best_idx as f64 * step;
    let (mut lo, mut hi) = (center - step, center + step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    while hi - lo > 1e-8 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1);
        }
    }
    Ok(best.max(f1).max(f2))
}

/// Smallest singular value of `radius·e^{iθ} I - A` via the real embedding
/// `[[X, -Y], [Y, X]]` whose singular values match the complex matrix's.
fn resolvent_sigma_min(a: &Matrix, radius: f64, theta: f64) -> f64 {
    let d = a.rows();
    let re = radius * theta.cos();
    let im = radius * theta.sin();
    let mut embedded = Matrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let x = if i == j { re - a[(i, j)] } else { -a[(i, j)] };
            embedded[(i, j)] = x;
            embedded[(d + i, d + j)] = x;
        }
        embedded[(i, d + i)] = -im;
        embedded[(d + i, i)] = im;
    }
    let gram = embedded.transpose().matmul(&embedded);
    let lambda_min = gram
        .symmetric_eigenvalues()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    lambda_min.max(0.0).sqrt()
}

/// Certify geometric dependence decay for a contractive system.
///
/// The decay rate is pushed off the spectrum, `ρ̄ = ρ + margin·(1 - ρ)`, so
/// the resolvent stays finite; the constant is
/// `Γ = (C/2)·sqrt(Tr(Σ_∞) + d/(1 - ρ̄²))` with `C` the resolvent supremum on
/// the `ρ̄` circle. Tightening `margin` toward zero trades a faster certified
/// rate against a larger constant.
pub fn mixing_bound(system: &LtiSystem, margin: f64) -> Result<MixingBound> {
    if !system.is_contractive() {
        return Err(Error::NoStationaryDistribution {
            rho: system.spectral_radius(),
        });
    }
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::invalid("margin", "must lie strictly in (0, 1)"));
    }
    let rho = system.spectral_radius();
    let rho_bar = rho + margin * (1.0 - rho);
    let c = resolvent_sup_norm(system.dynamics(), rho_bar)?;
    let sigma = solve_lyapunov(system)?;
    let d = system.dim() as f64;
    let gamma_const = 0.5 * c * (sigma.sigma_inf.trace() + d / (1.0 - rho_bar * rho_bar)).sqrt();
    MixingBound::new(gamma_const, rho_bar, 2.0)
}

/// Simulate `T` steps from the canonical substream of `seed`.
pub fn simulate(system: &LtiSystem, steps: usize, init: &InitMode, seed: u64) -> Result<Trajectory> {
    simulate_stream(system, steps, init, seed, 0)
}

/// Simulate `T` steps from substream `stream_index` of `seed`.
///
/// Identical arguments always reproduce the identical trajectory within a
/// build; Monte Carlo drivers give each trial its own substream.
pub fn simulate_stream(
    system: &LtiSystem,
    steps: usize,
    init: &InitMode,
    seed: u64,
    stream_index: u64,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("T", "trajectory length must be at least 1"));
    }
    let d = system.dim();
    let mut rng = rng::stream(seed, stream_index);
    let first: Vec<f64> = match init {
        InitMode::Zero => vec![0.0; d],
        InitMode::Explicit(x) => {
            if x.len() != d {
                return Err(Error::LengthMismatch {
                    context: "initial state",
                    left: x.len(),
                    right: d,
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("initial state", "non-finite entry"));
            }
            x.clone()
        }
        InitMode::Stationary => {
            if !system.is_contractive() {
                return Err(Error::NoStationaryDistribution {
                    rho: system.spectral_radius(),
                });
            }
            let factor = solve_lyapunov(system)?.sigma_inf.cholesky_psd()?;
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            factor.matvec(&z)
        }
    };
    let mut states = Vec::with_capacity((steps + 1) * d);
    states.extend_from_slice(&first);
    let a = system.dynamics();
    let mut current = first;
    for _ in 0..steps {
        let mut next = a.matvec(&current);
        if system.noise_std > 0.0 {
            for item in next.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *item += system.noise_std * z;
            }
        }
        states.extend_from_slice(&next);
        current = next;
    }
    Ok(Trajectory {
        dim: d,
        states,
        seed,
        stream: stream_index,
    })
}
