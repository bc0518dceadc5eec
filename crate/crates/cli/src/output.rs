//! File emission: atomic writes, trajectory CSV, and number formatting.
//!
//! All CSV numbers carry 17 significant digits so a read-back reproduces the
//! exact f64; files are written to a temporary sibling and renamed into
//! place so failures never leave partial output.

use std::path::Path;

use anyhow::{bail, Context, Result};

use rcps_core::Trajectory;

/// 17-significant-digit decimal form, lossless for f64.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn fmt_opt_f64(value: Option<f64>) -> String {
    value.map(fmt_f64).unwrap_or_default()
}

/// Write bytes to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .context("creating temporary output file")?;
    std::io::Write::write_all(&mut tmp, bytes).context("writing output")?;
    tmp.persist(path)
        .with_context(|| format!("renaming output into {}", path.display()))?;
    Ok(())
}

/// Render a trajectory as CSV: a metadata header row `T=..,d=..,seed=..`
/// followed by one row of state components per time step.
pub fn trajectory_to_csv(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "T={},d={},seed={}\n",
        trajectory.len(),
        trajectory.dim(),
        trajectory.seed()
    ));
    for t in 0..=trajectory.len() {
        let row: Vec<String> = trajectory.state(t).iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parse a trajectory written by [`trajectory_to_csv`].
pub fn trajectory_from_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines();
    let header = lines.next().context("empty trajectory file")?;
    let mut steps = None;
    let mut dim = None;
    let mut seed = None;
    for cell in header.split(',') {
        let (key, value) = cell
            .split_once('=')
            .with_context(|| format!("bad header cell {cell:?}"))?;
        match key.trim() {
            "T" => steps = Some(value.trim().parse::<usize>()?),
            "d" => dim = Some(value.trim().parse::<usize>()?),
            "seed" => seed = Some(value.trim().parse::<u64>()?),
            other => bail!("unknown header key {other:?}"),
        }
    }
    let steps = steps.context("header missing T")?;
    let dim = dim.context("header missing d")?;
    let seed = seed.context("header missing seed")?;
    let mut states = Vec::with_capacity((steps + 1) * dim);
    for (row_idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim {
            bail!("row {row_idx}: expected {dim} components, got {}", cells.len());
        }
        for cell in cells {
            states.push(cell.trim().parse::<f64>()?);
        }
    }
    if states.len() != (steps + 1) * dim {
        bail!(
            "expected {} states for T={steps}, found {}",
            (steps + 1) * dim,
            states.len() / dim
        );
    }
    Trajectory::from_states(dim, states, seed, 0).context("rebuilding trajectory")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rcps_core::{simulate, InitMode, LtiSystem};

    #[test]
    fn f64_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 5.263157894736843, 1e-300, -7.25e10] {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits());
        }
    }

    #[test]
    fn trajectory_csv_round_trips() {
        let system = LtiSystem::scalar(0.7, 1.0).unwrap();
        let traj = simulate(&system, 25, &InitMode::Zero, 99).unwrap();
        let text = trajectory_to_csv(&traj);
        assert_eq!(text.lines().count(), 25 + 2); // header + T+1 states
        let back = trajectory_from_csv(&text).unwrap();
        assert_eq!(back, traj);
    }
}
