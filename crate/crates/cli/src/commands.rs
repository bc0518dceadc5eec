//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use rcps_core::{
    certify, choose_blocks, coverage_experiment, exact_risk_scalar, mixing_bound, residuals,
    simulate, CalibrationRule, CertificateRecord, CertifyOptions, CoverageConfig,
    ExperimentReport, RiskQuery, RiskTarget, TrialRecord,
};

use crate::config::{ExperimentConfig, OutputFormat, SweepConfig};
use crate::output::{fmt_f64, fmt_opt_f64, trajectory_from_csv, trajectory_to_csv, write_atomic};

/// Exit status carrying the calibrate command's vacuous-certificate signal.
pub enum Outcome {
    Ok,
    Vacuous,
}

impl Outcome {
    pub fn code(&self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::Vacuous => 2,
        }
    }
}

fn out_path(config: &ExperimentConfig, default: &str) -> PathBuf {
    config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(default))
}

fn worker_threads() -> Result<Option<usize>> {
    match std::env::var("RCPS_THREADS") {
        Ok(text) => {
            let count: usize = text
                .trim()
                .parse()
                .with_context(|| format!("RCPS_THREADS must be an integer, got {text:?}"))?;
            Ok(Some(count))
        }
        Err(_) => Ok(None),
    }
}

/// Simulate a trajectory and write it as CSV.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<Outcome> {
    let system = config.build_system()?;
    let steps = config.require_t()?;
    let traj = simulate(&system, steps, &config.build_init(), config.seed)
        .context("simulating trajectory")?;
    let path = out_path(config, "trajectory.csv");
    write_atomic(&path, trajectory_to_csv(&traj).as_bytes())?;
    println!(
        "wrote {} states (T={}, d={}, seed={}) to {}",
        traj.len() + 1,
        traj.len(),
        traj.dim(),
        traj.seed(),
        path.display()
    );
    Ok(Outcome::Ok)
}

/// Residuals from the configured source: an external residual CSV, a stored
/// trajectory file scored by the model, or a fresh simulation.
fn load_residuals(config: &ExperimentConfig) -> Result<Vec<f64>> {
    if let Some(path) = &config.residuals_csv {
        return rcps_core::predictor::read_residuals_csv_path(path)
            .with_context(|| format!("reading residuals from {}", path.display()));
    }
    if let Some(path) = &config.trajectory_csv {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading trajectory from {}", path.display()))?;
        let traj = trajectory_from_csv(&text)?;
        return Ok(residuals(&traj, &config.build_model()?));
    }
    let system = config.build_system()?;
    let model = config.build_model()?;
    let steps = config.require_t()?;
    let traj = simulate(&system, steps, &config.build_init(), config.seed)?;
    Ok(residuals(&traj, &model))
}

/// Calibrate a radius and write the certificate record.
pub fn cmd_calibrate(config: &ExperimentConfig) -> Result<Outcome> {
    let rule = config.require_rule()?;
    let epsilon = config.require_epsilon()?;
    let delta = config.require_delta()?;
    let loss = config.build_loss()?;
    let rs = load_residuals(config)?;

    let mut options = CertifyOptions {
        lag: config.lag_k,
        seed: Some(config.seed),
        ..Default::default()
    };
    if rule == CalibrationRule::Blocked || config.lag_k.is_some() {
        let system = config.build_system()?;
        let bound = mixing_bound(&system, config.margin()).context("mixing certificate")?;
        if rule == CalibrationRule::Blocked {
            let (schedule, _) = choose_blocks(rs.len(), delta, loss.bound, &bound)
                .context("choosing block schedule")?;
            options.schedule = Some(schedule);
        }
        options.bound = Some(bound);
    }
    if rule == CalibrationRule::Weighted {
        let preset = config
            .weights
            .context("config field `weights` is required for the weighted rule")?;
        options.weights = Some(preset.build(rs.len())?);
    }

    let cert = certify(rule, &rs, &loss, epsilon, delta, &options).context("calibrating")?;
    let record = cert.to_record();
    let path = match config.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => {
            let path = out_path(config, "certificate.json");
            let mut text = serde_json::to_string_pretty(&record)?;
            text.push('\n');
            write_atomic(&path, text.as_bytes())?;
            path
        }
        OutputFormat::Csv => {
            let path = out_path(config, "certificate.csv");
            write_atomic(&path, certificate_csv(&record).as_bytes())?;
            path
        }
    };
    println!(
        "rule {} lambda_hat {:.6} certified level {:.6}{} -> {}",
        record.rule,
        record.lambda_hat,
        record.certified_level,
        if record.vacuous { " (vacuous)" } else { "" },
        path.display()
    );
    Ok(if cert.vacuous {
        Outcome::Vacuous
    } else {
        Outcome::Ok
    })
}

fn certificate_csv(record: &CertificateRecord) -> String {
    let header = [
        "rule",
        "lambda_hat",
        "epsilon",
        "delta",
        "gamma",
        "nu",
        "certified_level",
        "vacuous",
        "loss_bound",
        "block_len",
        "num_blocks",
        "t_used",
        "trimmed",
        "weight_count",
        "weight_l2_norm",
        "seed",
    ];
    let fmt_opt_usize = |v: Option<usize>| v.map(|u| u.to_string()).unwrap_or_default();
    let row = [
        record.rule.to_string(),
        fmt_f64(record.lambda_hat),
        fmt_f64(record.epsilon),
        fmt_f64(record.delta),
        fmt_f64(record.gamma),
        fmt_opt_f64(record.nu),
        fmt_f64(record.certified_level),
        record.vacuous.to_string(),
        fmt_f64(record.loss_bound),
        fmt_opt_usize(record.block_len),
        fmt_opt_usize(record.num_blocks),
        fmt_opt_usize(record.t_used),
        fmt_opt_usize(record.trimmed),
        fmt_opt_usize(record.weight_count),
        fmt_opt_f64(record.weight_l2_norm),
        record.seed.map(|s| s.to_string()).unwrap_or_default(),
    ];
    format!("{}\n{}\n", header.join(","), row.join(","))
}

fn build_coverage_config(config: &ExperimentConfig) -> Result<CoverageConfig> {
    let rule = config.require_rule()?;
    let train_len = config.require_t()?;
    let weights = match (rule, config.weights) {
        (CalibrationRule::Weighted, Some(preset)) => Some(preset.build(train_len)?),
        (CalibrationRule::Weighted, None) => {
            bail!("config field `weights` is required for the weighted rule")
        }
        _ => None,
    };
    Ok(CoverageConfig {
        system: config.build_system()?,
        model: config.build_model()?,
        rule,
        loss: config.build_loss()?,
        epsilon: config.require_epsilon()?,
        delta: config.require_delta()?,
        train_len,
        lag: config.lag_k,
        weights,
        trials: config.require_trials()?,
        seed: config.seed,
        margin: config.margin(),
        init: config.build_init(),
        threads: worker_threads()?,
    })
}

fn trials_csv(per_trial: &[TrialRecord]) -> String {
    let mut out = String::from("trial,lambda_hat,true_risk,eta,certified_level,success,error\n");
    for record in per_trial {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            record.trial,
            fmt_opt_f64(record.lambda_hat),
            fmt_opt_f64(record.true_risk),
            fmt_opt_f64(record.eta),
            fmt_opt_f64(record.certified_level),
            record.success,
            record.error.clone().unwrap_or_default().replace(',', ";"),
        ));
    }
    out
}

fn report_summary(report: &ExperimentReport) -> String {
    format!(
        "coverage {:.4} +- {:.4} vs target {:.4} ({} / {} trials, {} config failures{})",
        report.coverage_rate,
        report.standard_error,
        report.target_rate,
        report.success_count,
        report.trials,
        report.config_failures,
        if report.vacuous { ", vacuous" } else { "" },
    )
}

/// Run a coverage experiment; write the nested JSON report and per-trial CSV.
pub fn cmd_validate(config: &ExperimentConfig) -> Result<Outcome> {
    let coverage = build_coverage_config(config)?;
    let report = coverage_experiment(&coverage).context("running coverage experiment")?;
    let stem = out_path(config, "report");
    let json_path = stem.with_extension("json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_atomic(&json_path, text.as_bytes())?;
    let csv_path = trials_path(&stem);
    write_atomic(&csv_path, trials_csv(&report.per_trial).as_bytes())?;
    println!("{}", report_summary(&report));
    println!("report {} trials {}", json_path.display(), csv_path.display());
    Ok(Outcome::Ok)
}

fn trials_path(stem: &Path) -> PathBuf {
    let mut name = stem
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_string());
    name.push_str("_trials.csv");
    stem.with_file_name(name)
}

/// One row of a sweep table.
struct SweepRow {
    value: String,
    report: ExperimentReport,
    mean_lambda_hat: Option<f64>,
    stationary_risk: Option<f64>,
    marginal_risk: Option<f64>,
}

/// Sweep one axis, running a coverage experiment per grid point.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Outcome> {
    let sweep = config
        .sweep
        .clone()
        .context("config field `sweep` is required for this command")?;
    if sweep.is_empty() {
        bail!("sweep grid must be nonempty");
    }

    let mut rows = Vec::new();
    match &sweep {
        SweepConfig::T(grid) => {
            for &t in grid {
                let mut point = config.clone();
                point.t = Some(t);
                rows.push(run_sweep_point(&point, t.to_string())?);
            }
        }
        SweepConfig::K(grid) => {
            for &k in grid {
                let mut point = config.clone();
                point.lag_k = Some(k);
                rows.push(run_sweep_point(&point, k.to_string())?);
            }
        }
        SweepConfig::Epsilon(grid) => {
            for &epsilon in grid {
                let mut point = config.clone();
                point.epsilon = Some(epsilon);
                rows.push(run_sweep_point(&point, fmt_f64(epsilon))?);
            }
        }
        SweepConfig::WeightPreset(grid) => {
            for preset in grid {
                let mut point = config.clone();
                point.weights = Some(*preset);
                rows.push(run_sweep_point(&point, preset.label())?);
            }
        }
    }

    let path = out_path(config, "sweep.csv");
    write_atomic(&path, sweep_csv(sweep.axis_name(), &rows).as_bytes())?;
    println!("wrote {} sweep rows to {}", rows.len(), path.display());
    Ok(Outcome::Ok)
}

fn run_sweep_point(point: &ExperimentConfig, value: String) -> Result<SweepRow> {
    let coverage = build_coverage_config(point)?;
    let report = coverage_experiment(&coverage)
        .with_context(|| format!("sweep point {value}"))?;
    let lambdas: Vec<f64> = report.per_trial.iter().filter_map(|r| r.lambda_hat).collect();
    let mean_lambda_hat = if lambdas.is_empty() {
        None
    } else {
        Some(lambdas.iter().sum::<f64>() / lambdas.len() as f64)
    };
    // Oracle columns at the mean calibrated radius.
    let (stationary_risk, marginal_risk) = match mean_lambda_hat {
        Some(lambda) if coverage.system.is_contractive() => {
            let stationary = RiskQuery::new(RiskTarget::Stationary, lambda, coverage.loss)
                .and_then(|q| exact_risk_scalar(&coverage.system, &coverage.model, &q))
                .ok();
            let marginal = coverage.lag.and_then(|lag| {
                RiskQuery::new(
                    RiskTarget::MarginalAtLag {
                        lag,
                        train_len: coverage.train_len,
                        init: coverage.init.clone(),
                    },
                    lambda,
                    coverage.loss,
                )
                .and_then(|q| exact_risk_scalar(&coverage.system, &coverage.model, &q))
                .ok()
            });
            (stationary, marginal)
        }
        _ => (None, None),
    };
    Ok(SweepRow {
        value,
        report,
        mean_lambda_hat,
        stationary_risk,
        marginal_risk,
    })
}

fn sweep_csv(axis: &str, rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "axis,value,gamma,nu,coverage_rate,standard_error,mean_true_risk,\
         mean_lambda_hat,stationary_risk,marginal_risk,vacuous\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            axis,
            row.value,
            fmt_opt_f64(row.report.gamma),
            fmt_opt_f64(row.report.nu),
            fmt_f64(row.report.coverage_rate),
            fmt_f64(row.report.standard_error),
            fmt_opt_f64(row.report.mean_true_risk),
            fmt_opt_f64(row.mean_lambda_hat),
            fmt_opt_f64(row.stationary_risk),
            fmt_opt_f64(row.marginal_risk),
            row.report.vacuous,
        ));
    }
    out
}
