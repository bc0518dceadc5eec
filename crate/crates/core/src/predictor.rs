//! Point predictors, nested set predictors, and bounded monotone losses.
//!
//! Prediction sets are centered balls `C_λ(x) = {y : ‖y - f̂(x)‖ <= λ}`
//! (intervals when `d = 1`), so the whole family is summarized by the
//! residual `‖y - f̂(x)‖` and calibration reduces to thresholding residuals.
//! A point on the boundary counts as covered, which makes the calibrated
//! radius an exact order statistic.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::Trajectory;
use crate::matrix::Matrix;

/// A fixed black-box map from features to point predictions.
pub trait PointModel {
    fn predict(&self, x: &[f64]) -> Vec<f64>;
}

/// Linear predictor `f̂(x) = Â x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Matrix,
}

impl LinearModel {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::invalid("model", "weight matrix must be square"));
        }
        Ok(Self { weights })
    }

    pub fn scalar(a_hat: f64) -> Result<Self> {
        Self::new(Matrix::scalar(a_hat))
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Scalar coefficient when `d = 1`.
    pub fn scalar_coefficient(&self) -> Option<f64> {
        self.weights.as_scalar()
    }
}

impl PointModel for LinearModel {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.weights.matvec(x)
    }
}

/// Nested family of centered balls around a point model's predictions.
#[derive(Debug, Clone)]
pub struct NestedPredictor<M> {
    model: M,
}

impl<M: PointModel> NestedPredictor<M> {
    pub fn new(model: M) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// Whether `y` lies in `C_λ(x)`; the boundary counts as covered.
    pub fn contains(&self, x: &[f64], y: &[f64], lambda: f64) -> bool {
        self.score(x, y) <= lambda
    }

    /// Smallest radius that covers `y`: the residual `‖y - f̂(x)‖`.
    pub fn score(&self, x: &[f64], y: &[f64]) -> f64 {
        let pred = self.model.predict(x);
        euclidean_distance(y, &pred)
    }
}

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Which bounded monotone loss scores a prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Miscoverage indicator: 1 iff the label falls outside the set.
    Indicator,
    /// Capped linear overshoot `min(B, max(0, r - λ) / scale)`.
    HingeCapped { scale: f64 },
}

/// A loss on prediction sets, bounded by `B` and nonincreasing in the radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Uniform bound `B`; fixed to 1 for the indicator loss.
    pub bound: f64,
}

impl LossSpec {
    pub fn indicator() -> Self {
        Self {
            kind: LossKind::Indicator,
            bound: 1.0,
        }
    }

    pub fn hinge_capped(bound: f64, scale: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::invalid("loss bound", "must be finite and positive"));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid("loss scale", "must be finite and positive"));
        }
        Ok(Self {
            kind: LossKind::HingeCapped { scale },
            bound,
        })
    }

    /// Loss of the radius-`lambda` ball against a point at residual `r`.
    pub fn loss(&self, residual: f64, lambda: f64) -> f64 {
        match self.kind {
            LossKind::Indicator => {
                if residual > lambda {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::HingeCapped { scale } => {
                ((residual - lambda).max(0.0) / scale).min(self.bound)
            }
        }
    }
}

/// Normalized nonnegative weights over the `T` calibration pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    /// Validate: nonnegative entries summing to one within 1e-12.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weights", "must be nonempty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "entries must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "weights",
                format!("must sum to 1 within 1e-12, got {total}"),
            ));
        }
        Ok(Self { weights })
    }

    /// `w_t = 1/T` for all `t`.
    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("weights", "must be nonempty"));
        }
        Ok(Self {
            weights: vec![1.0 / len as f64; len],
        })
    }

    /// Exponential smoothing `w_t ∝ alpha^{T-t}`: recent samples dominate.
    pub fn exponential_smoothing(len: usize, alpha: f64) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("weights", "must be nonempty"));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid("smoothing alpha", "must lie in (0, 1]"));
        }
        let raw: Vec<f64> = (1..=len).map(|t| alpha.powi((len - t) as i32)).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    /// All mass on index `t` (zero-based).
    pub fn point_mass(len: usize, t: usize) -> Result<Self> {
        if t >= len {
            return Err(Error::invalid("weights", "point-mass index out of range"));
        }
        let mut weights = vec![0.0; len];
        weights[t] = 1.0;
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Whether every entry is the same value (that value must be `1/T`).
    pub fn is_uniform(&self) -> bool {
        self.weights.windows(2).all(|w| w[0] == w[1])
    }
}

/// Residuals `r_t = ‖y_t - f̂(x_t)‖` along a trajectory.
pub fn residuals<M: PointModel>(trajectory: &Trajectory, model: &M) -> Vec<f64> {
    trajectory
        .pairs()
        .map(|(x, y)| {
            let pred = model.predict(x);
            euclidean_distance(y, &pred)
        })
        .collect()
}

/// Unweighted empirical risk: the plain average of per-pair losses.
pub fn empirical_risk(residuals: &[f64], loss: &LossSpec, lambda: f64) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let total: f64 = residuals.iter().map(|r| loss.loss(*r, lambda)).sum();
    total / residuals.len() as f64
}

/// Weighted empirical risk `Σ_t w_t · ℓ(r_t, λ)`.
pub fn empirical_risk_weighted(
    residuals: &[f64],
    loss: &LossSpec,
    lambda: f64,
    weights: &WeightVector,
) -> Result<f64> {
    if residuals.len() != weights.len() {
        return Err(Error::LengthMismatch {
            context: "weighted empirical risk",
            left: residuals.len(),
            right: weights.len(),
        });
    }
    Ok(residuals
        .iter()
        .zip(weights.as_slice())
        .map(|(r, w)| w * loss.loss(*r, lambda))
        .sum())
}

/// Read a single-column residual CSV (header `residual`).
pub fn read_residuals_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for record in csv_reader.records() {
        let record = record?;
        let field = record
            .get(0)
            .ok_or_else(|| Error::invalid("residual csv", "empty record"))?;
        let value: f64 = field
            .trim()
            .parse()
            .map_err(|_| Error::invalid("residual csv", format!("bad number {field:?}")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid(
                "residual csv",
                format!("residuals must be finite and nonnegative, got {value}"),
            ));
        }
        out.push(value);
    }
    Ok(out)
}

/// Write residuals as a single-column CSV with header `residual`.
pub fn write_residuals_csv<W: Write>(writer: W, residuals: &[f64]) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(["residual"])?;
    for r in residuals {
        csv_writer.write_record([format!("{r:.16e}")])?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Convenience wrappers over file paths.
pub fn read_residuals_csv_path(path: &Path) -> Result<Vec<f64>> {
    read_residuals_csv(std::fs::File::open(path)?)
}

pub fn write_residuals_csv_path(path: &Path, residuals: &[f64]) -> Result<()> {
    write_residuals_csv(std::fs::File::create(path)?, residuals)
}
