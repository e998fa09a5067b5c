//! CSV writers. Every float is written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sdecade_core::cascade_ode::ActivationPath;
use sdecade_core::cascade_sim::VerificationReport;
use sdecade_core::realization::RealizationEstimate;
use sdecade_core::sde::{TimeGrid, WeightTrajectory};
use sdecade_core::SeedRecord;

use crate::error::{CliError, CliResult};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(num).collect::<Vec<_>>().join(",")
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn seed_line(out: &mut String, seed: Option<SeedRecord>) {
    if let Some(s) = seed {
        writeln!(out, "# seed={} stream={}", s.seed, s.stream).unwrap();
    }
}

/// `t,state_0,…` for vector states, `t,w_00,w_01,…` (row-major) for matrices.
pub fn trajectory_csv(traj: &WeightTrajectory) -> String {
    let mut out = String::new();
    seed_line(&mut out, traj.seed());
    let (rows, cols) = traj.states[0].shape();
    let header: Vec<String> = if cols == 1 {
        (0..rows).map(|i| format!("state_{i}")).collect()
    } else {
        (0..rows)
            .flat_map(|i| (0..cols).map(move |j| format!("w_{i}{j}")))
            .collect()
    };
    writeln!(out, "t,{}", header.join(",")).unwrap();
    for (k, w) in traj.states.iter().enumerate() {
        let row = (0..rows).flat_map(|i| (0..cols).map(move |j| w[(i, j)]));
        writeln!(out, "{},{}", num(traj.grid.time(k)), join(row)).unwrap();
    }
    out
}

/// Read a trajectory written by [`trajectory_csv`]: the grid and states
/// with the given number of columns.
pub fn parse_trajectory(text: &str, cols: usize) -> Result<(TimeGrid, Vec<DMatrix<f64>>), String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or("empty trajectory file")?;
    let width = header.split(',').count() - 1;
    if width == 0 || width % cols != 0 {
        return Err(format!("trajectory has {width} state columns, not a multiple of {cols}"));
    }
    let rows = width / cols;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("row {i}: {e}"))?;
        if vals.len() != width + 1 {
            return Err(format!("row {i} has {} fields, expected {}", vals.len(), width + 1));
        }
        times.push(vals[0]);
        states.push(DMatrix::from_row_slice(rows, cols, &vals[1..]));
    }
    if times.len() < 2 {
        return Err("trajectory needs at least two rows".into());
    }
    let grid = TimeGrid::new(times[0], *times.last().unwrap(), times.len() - 1).map_err(|e| e.to_string())?;
    for (k, t) in times.iter().enumerate() {
        if (grid.time(k) - t).abs() > 1e-12 * (1.0 + t.abs()) {
            return Err(format!("row {k}: times are not uniformly spaced"));
        }
    }
    Ok((grid, states))
}

pub fn activation_csv(path: &ActivationPath) -> String {
    let mut out = String::new();
    seed_line(&mut out, path.source);
    let n = path.states[0].len();
    let header: Vec<String> = (0..n).map(|i| format!("z_{i}")).collect();
    writeln!(out, "t,{}", header.join(",")).unwrap();
    for (k, z) in path.states.iter().enumerate() {
        writeln!(out, "{},{}", num(path.grid.time(k)), join(z.iter().copied())).unwrap();
    }
    out
}

/// `x_0,…,x_{q−1},mean,stderr,N,seed`, one row per input.
pub fn estimates_csv(rows: &[(DVector<f64>, RealizationEstimate)]) -> String {
    let mut out = String::new();
    let q = rows.first().map_or(0, |(x, _)| x.len());
    let header: Vec<String> = (0..q).map(|i| format!("x_{i}")).collect();
    writeln!(out, "{},mean,stderr,N,seed", header.join(",")).unwrap();
    for (x, est) in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            join(x.iter().copied()),
            num(est.mean),
            num(est.stderr),
            est.samples,
            est.seed
        )
        .unwrap();
    }
    out
}

/// `path_id,tau,sup_gap` (`tau = inf` when the path never leaves), then a
/// summary comment line.
pub fn cascade_report_csv(report: &VerificationReport) -> String {
    let mut out = String::from("path_id,tau,sup_gap\n");
    for p in &report.paths {
        let tau = p.tau.map_or_else(|| "inf".to_string(), num);
        writeln!(out, "{},{},{}", p.path_id, tau, num(p.sup_gap)).unwrap();
    }
    write!(
        out,
        "# gap_q50={} gap_q95={} gap_max={} gap_mean={} exit_fraction={}",
        num(report.gap_median),
        num(report.gap_q95),
        num(report.gap_max),
        num(report.gap_mean),
        num(report.exit_fraction)
    )
    .unwrap();
    if let Some([lo, mid, hi]) = report.tau_quantiles {
        write!(out, " tau_q05={} tau_q50={} tau_q95={}", num(lo), num(mid), num(hi)).unwrap();
    }
    if let Some(dev) = report.b_deviation {
        write!(out, " b_probe_deviation={}", num(dev)).unwrap();
    }
    out.push('\n');
    out
}

/// Generic table: header line, then rows of floats.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}
