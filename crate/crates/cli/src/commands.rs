//! The four subcommands. Each one builds the system from the config, runs
//! the engine, writes CSV artifacts under the output directory, and prints
//! a short summary. Failures surface as errors so the process exits
//! nonzero without partial success reporting.

use std::path::Path;

use anyhow::{anyhow, bail, Result};
use bilinear_sde::moments::{propagate_moments, MomentTrajectory};
use bilinear_sde::rectifier::unperturbed_rhs;
use bilinear_sde::sim::{ccf_residual, simulate_ensemble, simulate_path, Scheme, TimeGrid};
use bilinear_sde::{BilinearSde, Interpretation};

use crate::config::ExperimentConfig;
use crate::csvout::{
    write_ccf_csv, write_ensemble_csv, write_moments_csv, write_path_csv, write_report_csv, CcfRow,
};

/// Moment propagation and the residual check work on the Stratonovich
/// form; an Ito model is converted once up front.
fn stratonovich_form(sys: BilinearSde) -> Result<BilinearSde> {
    match sys.interpretation() {
        Interpretation::Stratonovich => Ok(sys),
        Interpretation::Ito => sys.to_stratonovich().map_err(|e| anyhow!("{e}")),
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn propagate_over_grid(
    cfg: &ExperimentConfig,
    sys: &BilinearSde,
    grid: &TimeGrid,
) -> Result<MomentTrajectory> {
    let init = cfg.build_initial(sys.n())?;
    propagate_moments(sys, init, grid.t_end(), grid.dt()).map_err(|e| anyhow!("{e}"))
}

/// Initial state for path sampling; paths start at a point, so the
/// configured covariance has to be zero.
fn sampling_start(cfg: &ExperimentConfig, n: usize) -> Result<Vec<f64>> {
    let init = cfg.build_initial(n)?;
    if init.cov().max_abs() > 0.0 {
        bail!("path sampling starts from a point: set the initial covariance to zero");
    }
    Ok(init.mean().to_vec())
}

pub fn cmd_moments(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let sys = stratonovich_form(cfg.build_system()?)?;
    let grid = cfg.build_grid()?;
    let traj = propagate_over_grid(cfg, &sys, &grid)?;
    let file = out_dir.join(cfg.output.moments.as_deref().unwrap_or("moments.csv"));
    write_moments_csv(&file, &traj)?;
    let last = traj.last();
    println!("wrote {}", file.display());
    println!(
        "final t = {}, mean = [{}], trace(P) = {}",
        last.t(),
        join(last.mean()),
        last.cov().trace()
    );
    Ok(())
}

pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<()> {
    let ens_cfg = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| anyhow!("simulate needs an [ensemble] block"))?;
    let seed = seed_override.unwrap_or(ens_cfg.seed);
    let scheme: Scheme = ens_cfg.scheme.into();
    let sys = cfg.build_system()?;
    let grid = cfg.build_grid()?;
    let x0 = sampling_start(cfg, sys.n())?;
    let paths_dir = out_dir.join(cfg.output.paths_dir.as_deref().unwrap_or("paths"));

    if ens_cfg.paths == 1 {
        // a single realization: the actual-trajectory artifact
        let path = simulate_path(&sys, &grid, &x0, seed, 0, scheme).map_err(|e| anyhow!("{e}"))?;
        let file = paths_dir.join("path_0.csv");
        write_path_csv(&file, &path)?;
        println!("wrote {}", file.display());
        println!(
            "single path, final state = [{}]",
            join(path.state(grid.steps()))
        );
        return Ok(());
    }

    let ens = simulate_ensemble(
        &sys,
        &grid,
        &x0,
        ens_cfg.paths,
        seed,
        scheme,
        ens_cfg.retain_paths,
    )
    .map_err(|e| anyhow!("{e}"))?;
    let file = out_dir.join(cfg.output.ensemble.as_deref().unwrap_or("ensemble.csv"));
    write_ensemble_csv(&file, &ens)?;
    println!("wrote {}", file.display());
    if let Some(paths) = ens.paths() {
        for (i, p) in paths.iter().enumerate() {
            write_path_csv(&paths_dir.join(format!("path_{i}.csv")), p)?;
        }
        println!(
            "wrote {} path files under {}",
            paths.len(),
            paths_dir.display()
        );
    }
    let last = grid.points() - 1;
    println!(
        "paths = {}, final ensemble mean = [{}]",
        ens.num_paths(),
        join(ens.mean_at(last))
    );

    if cfg.output.moments.is_some() {
        // a moments artifact is co-configured: write it and report how far
        // the sample mean strays in standard-error units
        let strat = stratonovich_form(sys.clone())?;
        let traj = propagate_over_grid(cfg, &strat, &grid)?;
        let mfile = out_dir.join(cfg.output.moments.as_deref().unwrap());
        write_moments_csv(&mfile, &traj)?;
        println!("wrote {}", mfile.display());
        // The ratio is scanned over the second half of the horizon: a point
        // start under multiplicative noise leaves early grid points with
        // little or exactly no sample spread, where dividing the scheme's
        // own transient bias by a vanishing standard error tells nothing.
        let mut worst = 0.0;
        let mut worst_t = grid.t0();
        let mut worst_component = 1;
        let n = sys.n();
        for k in grid.points() / 2..grid.points() {
            let sample = ens.mean_at(k);
            let moment = traj.states()[k].mean();
            let stderr = ens.stderr_at(k);
            let cov = ens.cov_at(k);
            for i in 0..n {
                // variance must be resolvable above summation rounding
                let var = cov[i * n + i];
                if var <= 0.0 || var <= 1e-10 * (var + sample[i] * sample[i]) {
                    continue;
                }
                let z = (sample[i] - moment[i]).abs() / stderr[i];
                if z > worst {
                    worst = z;
                    worst_t = grid.time(k);
                    worst_component = i + 1;
                }
            }
        }
        println!(
            "max |sample mean - moment mean| / stderr over the settled half = {worst:.3} (component {worst_component} at t = {worst_t})"
        );
    }
    Ok(())
}

fn rk4_deterministic(
    params: &bilinear_sde::RectifierParams,
    grid: &TimeGrid,
    x0: [f64; 3],
) -> Vec<[f64; 3]> {
    fn offset(x: &[f64; 3], scale: f64, d: &[f64; 3]) -> [f64; 3] {
        [
            x[0] + scale * d[0],
            x[1] + scale * d[1],
            x[2] + scale * d[2],
        ]
    }
    let h = grid.dt();
    let mut out = Vec::with_capacity(grid.points());
    let mut x = x0;
    out.push(x);
    for _ in 0..grid.steps() {
        let k1 = unperturbed_rhs(params, &x);
        let k2 = unperturbed_rhs(params, &offset(&x, 0.5 * h, &k1));
        let k3 = unperturbed_rhs(params, &offset(&x, 0.5 * h, &k2));
        let k4 = unperturbed_rhs(params, &offset(&x, h, &k3));
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x);
    }
    out
}

pub fn cmd_rectifier_report(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<()> {
    let params = cfg.rectifier_params()?;
    let sys = cfg.build_system()?;
    let grid = cfg.build_grid()?;
    let x0v = sampling_start(cfg, 3)?;
    let x0: [f64; 3] = [x0v[0], x0v[1], x0v[2]];
    let (seed, scheme) = match &cfg.ensemble {
        Some(e) => (seed_override.unwrap_or(e.seed), Scheme::from(e.scheme)),
        None => (seed_override.unwrap_or(42), Scheme::EulerMaruyamaOnIto),
    };

    let unperturbed = rk4_deterministic(&params, &grid, x0);
    let path = simulate_path(&sys, &grid, &x0, seed, 0, scheme).map_err(|e| anyhow!("{e}"))?;
    let traj = propagate_over_grid(cfg, &sys, &grid)?;

    let points = grid.points();
    let times: Vec<f64> = (0..points).map(|k| grid.time(k)).collect();
    let actual: Vec<[f64; 3]> = (0..points)
        .map(|k| {
            let s = path.state(k);
            [s[0], s[1], s[2]]
        })
        .collect();
    let mean: Vec<[f64; 3]> = traj
        .states()
        .iter()
        .map(|s| [s.mean()[0], s.mean()[1], s.mean()[2]])
        .collect();

    let file = out_dir.join(cfg.output.report.as_deref().unwrap_or("report.csv"));
    write_report_csv(&file, &times, &unperturbed, &actual, &mean)?;

    let mut sq = 0.0;
    for k in 0..points {
        for i in 0..3 {
            let d = actual[k][i] - mean[k][i];
            sq += d * d;
        }
    }
    let rms = (sq / points as f64).sqrt();
    println!("wrote {}", file.display());
    println!(
        "gamma = {}, rms |actual - mean| over the horizon = {rms:.6}",
        params.gamma
    );
    Ok(())
}

pub fn cmd_ccf_check(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<()> {
    let ens_cfg = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| anyhow!("ccf-check needs an [ensemble] block"))?;
    let ccf = cfg
        .ccf
        .as_ref()
        .ok_or_else(|| anyhow!("ccf-check needs a [ccf] block"))?;
    let seed = seed_override.unwrap_or(ens_cfg.seed);
    let sys = stratonovich_form(cfg.build_system()?)?;
    let grid = cfg.build_grid()?;
    let x0 = sampling_start(cfg, sys.n())?;
    if ccf.s.len() != sys.n() {
        bail!("s has {} entries, model has {}", ccf.s.len(), sys.n());
    }

    let mut rows: Vec<CcfRow> = Vec::with_capacity(ccf.checkpoints.len());
    for &t in &ccf.checkpoints {
        let (residual, noise_floor) = ccf_residual(
            &sys,
            &grid,
            &x0,
            ens_cfg.paths,
            seed,
            ens_cfg.scheme.into(),
            &ccf.s,
            t,
            ccf.delta_steps,
        )
        .map_err(|e| anyhow!("{e}"))?;
        let pass = residual.abs() <= 3.0 * noise_floor;
        println!(
            "t = {t}: residual = {residual:.3e}, noise floor = {noise_floor:.3e}, {}",
            if pass { "pass" } else { "FAIL" }
        );
        rows.push(CcfRow {
            t,
            residual,
            noise_floor,
            pass,
        });
    }
    let file = out_dir.join(cfg.output.ccf.as_deref().unwrap_or("ccf.csv"));
    write_ccf_csv(&file, &rows)?;
    println!("wrote {}", file.display());
    if rows.iter().any(|r| !r.pass) {
        bail!("residual exceeded three noise floors at one or more checkpoints");
    }
    Ok(())
}
