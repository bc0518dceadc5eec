//! Experiment configuration: one JSON file drives every subcommand.
//!
//! Unknown keys are rejected, the seed is mandatory, and each subcommand
//! validates the fields it needs before any computation runs.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rcps_core::{
    CalibrationRule, InitMode, LinearModel, LossSpec, LtiSystem, Matrix, WeightVector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<CalibrationRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Trajectory length `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    /// Evaluation lag `k` past the trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightPreset>,
    /// Decay-rate margin for the mixing certificate (default 0.5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub seed: u64,
    /// Calibrate from an external residual file instead of simulating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Monte Carlo sample count for oracle-backed columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

/// Dynamics matrix (row-major rows) and noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub a: Vec<Vec<f64>>,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub a_hat: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    Indicator,
    HingeCapped { bound: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightPreset {
    Uniform,
    Exponential { alpha: f64 },
}

impl WeightPreset {
    pub fn build(&self, len: usize) -> Result<WeightVector> {
        let weights = match self {
            WeightPreset::Uniform => WeightVector::uniform(len),
            WeightPreset::Exponential { alpha } => WeightVector::exponential_smoothing(len, *alpha),
        };
        weights.context("building weight vector")
    }

    pub fn label(&self) -> String {
        match self {
            WeightPreset::Uniform => "uniform".to_string(),
            WeightPreset::Exponential { alpha } => format!("exponential({alpha})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    Zero,
    Stationary,
    Explicit { state: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Exactly one swept axis with its explicit grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "grid", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepConfig {
    T(Vec<usize>),
    K(Vec<usize>),
    Epsilon(Vec<f64>),
    WeightPreset(Vec<WeightPreset>),
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        match self {
            SweepConfig::T(g) => g.is_empty(),
            SweepConfig::K(g) => g.is_empty(),
            SweepConfig::Epsilon(g) => g.is_empty(),
            SweepConfig::WeightPreset(g) => g.is_empty(),
        }
    }

    pub fn axis_name(&self) -> &'static str {
        match self {
            SweepConfig::T(_) => "t",
            SweepConfig::K(_) => "k",
            SweepConfig::Epsilon(_) => "epsilon",
            SweepConfig::WeightPreset(_) => "weight_preset",
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).context("parsing config (unknown keys are rejected)")?;
        config.validate_common()?;
        Ok(config)
    }

    /// Checks that apply to every subcommand.
    fn validate_common(&self) -> Result<()> {
        if self.system.a.is_empty() {
            bail!("system.a must be a nonempty square matrix");
        }
        if let Some(epsilon) = self.epsilon {
            if !epsilon.is_finite() || epsilon < 0.0 {
                bail!("epsilon must be finite and nonnegative, got {epsilon}");
            }
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta < 1.0) {
                bail!("delta must lie strictly in (0, 1), got {delta}");
            }
        }
        if let Some(margin) = self.margin {
            if !(margin > 0.0 && margin < 1.0) {
                bail!("margin must lie strictly in (0, 1), got {margin}");
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                bail!("sweep grid must be nonempty");
            }
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<LtiSystem> {
        let a = Matrix::from_rows(&self.system.a).context("system.a")?;
        LtiSystem::new(a, self.system.noise_std).context("building system")
    }

    pub fn build_model(&self) -> Result<LinearModel> {
        let model = self
            .model
            .as_ref()
            .context("config field `model` is required for this command")?;
        let a_hat = Matrix::from_rows(&model.a_hat).context("model.a_hat")?;
        LinearModel::new(a_hat).context("building model")
    }

    pub fn build_loss(&self) -> Result<LossSpec> {
        match self.loss.unwrap_or(LossConfig::Indicator) {
            LossConfig::Indicator => Ok(LossSpec::indicator()),
            LossConfig::HingeCapped { bound, scale } => {
                LossSpec::hinge_capped(bound, scale).context("building loss")
            }
        }
    }

    pub fn build_init(&self) -> InitMode {
        match &self.init {
            None | Some(InitConfig::Zero) => InitMode::Zero,
            Some(InitConfig::Stationary) => InitMode::Stationary,
            Some(InitConfig::Explicit { state }) => InitMode::Explicit(state.clone()),
        }
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(0.5)
    }

    pub fn require_rule(&self) -> Result<CalibrationRule> {
        self.rule
            .context("config field `rule` is required for this command")
    }

    pub fn require_epsilon(&self) -> Result<f64> {
        self.epsilon
            .context("config field `epsilon` is required for this command")
    }

    pub fn require_delta(&self) -> Result<f64> {
        self.delta
            .context("config field `delta` is required for this command")
    }

    pub fn require_t(&self) -> Result<usize> {
        self.t
            .context("config field `t` is required for this command")
    }

    pub fn require_trials(&self) -> Result<usize> {
        self.trials
            .context("config field `trials` is required for this command")
    }
}
