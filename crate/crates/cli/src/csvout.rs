//! CSV artifacts. Every writer formats floats with the shortest
//! representation that parses back to the same bits, uses LF line endings,
//! and emits a header row, so a fixed run produces identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use anyhow::{Context, Result};
use bilinear_sde::moments::MomentTrajectory;
use bilinear_sde::sim::{Ensemble, Path};

pub struct CcfRow {
    pub t: f64,
    pub residual: f64,
    pub noise_floor: f64,
    pub pass: bool,
}

fn write_atomic(path: &FsPath, body: String) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn push_row(out: &mut String, t: f64, groups: &[&[f64]]) {
    write!(out, "{t}").unwrap();
    for group in groups {
        for v in *group {
            write!(out, ",{v}").unwrap();
        }
    }
    out.push('\n');
}

fn covariance_header(out: &mut String, n: usize) {
    for i in 1..=n {
        for j in 1..=n {
            write!(out, ",P_{i}{j}").unwrap();
        }
    }
}

/// Columns: t, mean_1..mean_n, then the full covariance row-major.
pub fn write_moments_csv(path: &FsPath, traj: &MomentTrajectory) -> Result<()> {
    let n = traj.first().dim();
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        write!(out, ",mean_{i}").unwrap();
    }
    covariance_header(&mut out, n);
    out.push('\n');
    for state in traj.states() {
        push_row(&mut out, state.t(), &[state.mean(), state.cov().data()]);
    }
    write_atomic(path, out)
}

/// Moments layout plus a standard-error column per component.
pub fn write_ensemble_csv(path: &FsPath, ens: &Ensemble) -> Result<()> {
    let n = ens.dim();
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        write!(out, ",mean_{i}").unwrap();
    }
    covariance_header(&mut out, n);
    for i in 1..=n {
        write!(out, ",stderr_{i}").unwrap();
    }
    out.push('\n');
    let grid = ens.grid();
    for k in 0..grid.points() {
        push_row(
            &mut out,
            grid.time(k),
            &[ens.mean_at(k), ens.cov_at(k), ens.stderr_at(k)],
        );
    }
    write_atomic(path, out)
}

/// Columns: t, x_1..x_n.
pub fn write_path_csv(path: &FsPath, p: &Path) -> Result<()> {
    let n = p.dim();
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        write!(out, ",x_{i}").unwrap();
    }
    out.push('\n');
    let grid = p.grid();
    for k in 0..grid.points() {
        push_row(&mut out, grid.time(k), &[p.state(k)]);
    }
    write_atomic(path, out)
}

/// The three-trajectory comparison: deterministic model, one realization,
/// and the propagated conditional mean, all on the same grid.
pub fn write_report_csv(
    path: &FsPath,
    times: &[f64],
    unperturbed: &[[f64; 3]],
    actual: &[[f64; 3]],
    mean: &[[f64; 3]],
) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    for stem in ["unperturbed", "actual", "mean"] {
        for i in 1..=3 {
            write!(out, ",{stem}_{i}").unwrap();
        }
    }
    out.push('\n');
    for (k, t) in times.iter().enumerate() {
        push_row(&mut out, *t, &[&unperturbed[k], &actual[k], &mean[k]]);
    }
    write_atomic(path, out)
}

pub fn write_ccf_csv(path: &FsPath, rows: &[CcfRow]) -> Result<()> {
    let mut out = String::from("t,residual,noise_floor,pass\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.t, row.residual, row.noise_floor, row.pass
        )
        .unwrap();
    }
    write_atomic(path, out)
}
