//! Path simulation and order-independent ensemble statistics.
//!
//! Increment draws are addressed by (seed, path, step), so a path's
//! realization is a pure function of those three values no matter which
//! scheme steps it, whether it runs alone or inside an ensemble, and in
//! which order paths are processed. Ensemble reductions are computed per
//! 64-path chunk and the chunk results are merged in chunk order, which
//! makes the floating-point result of a parallel run bitwise identical to
//! the sequential one.
//!
//! Both schemes consume the same increments on the same grid. A scheme
//! requires the matching calculus interpretation and `simulate_path`
//! converts once up front when handed the other form, so the dynamics being
//! integrated are always the ones the system denotes.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::model::{BilinearSde, EvalScratch, Interpretation};
use crate::moments::{ccf_integrand, CcfScratch};
use crate::rng;

/// Paths per reduction chunk. Fixed: changing it changes how partial sums
/// are rounded and therefore the published numbers.
const CHUNK: usize = 64;

/// Uniform grid t0 + k * dt for k = 0..=steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() || !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Invalid("grid needs finite t0 and positive dt"));
        }
        if steps == 0 {
            return Err(Error::Invalid("grid needs at least one step"));
        }
        Ok(TimeGrid { t0, dt, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Grid points, one more than steps.
    pub fn points(&self) -> usize {
        self.steps + 1
    }

    /// Time of grid index `k`, always recomputed as t0 + k * dt so that
    /// repeated traversals cannot accumulate drift.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    /// Index of grid time `t`, allowing 1e-9 * dt of float drift.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = math::round((t - self.t0) / self.dt);
        if k < 0.0 || k > self.steps as f64 {
            return Err(Error::OffGrid { t });
        }
        let idx = k as usize;
        if (t - self.time(idx)).abs() > 1e-9 * self.dt {
            return Err(Error::OffGrid { t });
        }
        Ok(idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Euler-Maruyama stepping the Ito form.
    EulerMaruyamaOnIto,
    /// Heun predictor-corrector stepping the Stratonovich form: the noise
    /// coefficient is averaged between the current state and an Euler
    /// predictor, the drift is applied once.
    HeunStratonovich,
}

/// One realized trajectory on a grid.
#[derive(Clone, Debug)]
pub struct Path {
    grid: TimeGrid,
    n: usize,
    states: Vec<f64>,
}

impl Path {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }
}

/// Per-grid-point sample mean, covariance, and standard error of the mean.
#[derive(Clone, Debug)]
pub struct Ensemble {
    grid: TimeGrid,
    n: usize,
    num_paths: usize,
    seed: u64,
    scheme: Scheme,
    mean: Vec<f64>,
    cov: Vec<f64>,
    stderr: Vec<f64>,
    paths: Option<Vec<Path>>,
}

impl Ensemble {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn mean_at(&self, k: usize) -> &[f64] {
        &self.mean[k * self.n..(k + 1) * self.n]
    }

    /// Row-major n x n sample covariance at grid index `k`.
    pub fn cov_at(&self, k: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.cov[k * nn..(k + 1) * nn]
    }

    pub fn cov_matrix(&self, k: usize) -> Matrix {
        Matrix::from_flat(self.n, self.n, self.cov_at(k).to_vec()).unwrap()
    }

    /// Standard error of each mean component at grid index `k`.
    pub fn stderr_at(&self, k: usize) -> &[f64] {
        &self.stderr[k * self.n..(k + 1) * self.n]
    }

    /// Retained paths, present when the ensemble was built with
    /// `retain_paths`.
    pub fn paths(&self) -> Option<&[Path]> {
        self.paths.as_deref()
    }
}

/// Buffers reused across steps of one path.
pub struct StepScratch {
    ws: EvalScratch,
    drift: Vec<f64>,
    nc: Matrix,
    nc2: Matrix,
    xpred: Vec<f64>,
}

impl StepScratch {
    pub fn new(sys: &BilinearSde) -> Self {
        let n = sys.n();
        let m = sys.noise_dim();
        StepScratch {
            ws: EvalScratch::new(sys),
            drift: vec![0.0; n],
            nc: Matrix::zeros(n, m),
            nc2: Matrix::zeros(n, m),
            xpred: vec![0.0; n],
        }
    }
}

fn check_step_dims(sys: &BilinearSde, x: &[f64], dw: &[f64], out: &[f64]) -> Result<()> {
    if x.len() != sys.n() || out.len() != sys.n() {
        return Err(Error::Dimension {
            what: "state vector",
            expected: sys.n(),
            got: x.len().max(out.len()),
        });
    }
    if dw.len() != sys.noise_dim() {
        return Err(Error::Dimension {
            what: "increment vector",
            expected: sys.noise_dim(),
            got: dw.len(),
        });
    }
    Ok(())
}

/// One Euler-Maruyama step of an Ito-interpreted system:
/// out = x + drift dt + b(x, t) dW.
pub fn euler_maruyama_step(
    sys: &BilinearSde,
    x: &[f64],
    t: f64,
    dt: f64,
    dw: &[f64],
    scratch: &mut StepScratch,
    out: &mut [f64],
) -> Result<()> {
    if sys.interpretation() != Interpretation::Ito {
        return Err(Error::WrongInterpretation {
            expected: Interpretation::Ito,
            got: sys.interpretation(),
        });
    }
    check_step_dims(sys, x, dw, out)?;
    sys.drift_eval_into(x, t, &mut scratch.ws, &mut scratch.drift)?;
    sys.noise_coefficient_into(x, t, &mut scratch.ws, &mut scratch.nc)?;
    for i in 0..x.len() {
        let mut noise = 0.0;
        for (c, w) in scratch.nc.row(i).iter().zip(dw) {
            noise += c * w;
        }
        out[i] = x[i] + scratch.drift[i] * dt + noise;
    }
    Ok(())
}

/// One Heun step of a Stratonovich-interpreted system. The predictor is an
/// Euler step; the corrector reuses the same drift and averages the noise
/// coefficient between the current and predicted states, which is what
/// makes the limit the Stratonovich solution rather than the Ito one.
pub fn heun_stratonovich_step(
    sys: &BilinearSde,
    x: &[f64],
    t: f64,
    dt: f64,
    dw: &[f64],
    scratch: &mut StepScratch,
    out: &mut [f64],
) -> Result<()> {
    if sys.interpretation() != Interpretation::Stratonovich {
        return Err(Error::WrongInterpretation {
            expected: Interpretation::Stratonovich,
            got: sys.interpretation(),
        });
    }
    check_step_dims(sys, x, dw, out)?;
    sys.drift_eval_into(x, t, &mut scratch.ws, &mut scratch.drift)?;
    sys.noise_coefficient_into(x, t, &mut scratch.ws, &mut scratch.nc)?;
    for (i, xp) in scratch.xpred.iter_mut().enumerate() {
        let mut noise = 0.0;
        for (c, w) in scratch.nc.row(i).iter().zip(dw) {
            noise += c * w;
        }
        *xp = x[i] + scratch.drift[i] * dt + noise;
    }
    sys.noise_coefficient_into(&scratch.xpred, t + dt, &mut scratch.ws, &mut scratch.nc2)?;
    for i in 0..x.len() {
        let mut noise = 0.0;
        for ((c1, c2), w) in scratch.nc.row(i).iter().zip(scratch.nc2.row(i)).zip(dw) {
            noise += 0.5 * (c1 + c2) * w;
        }
        out[i] = x[i] + scratch.drift[i] * dt + noise;
    }
    Ok(())
}

/// System in the interpretation the scheme integrates, converting at most
/// once.
fn prepare(sys: &BilinearSde, scheme: Scheme) -> Result<Cow<'_, BilinearSde>> {
    match (scheme, sys.interpretation()) {
        (Scheme::EulerMaruyamaOnIto, Interpretation::Stratonovich) => Ok(Cow::Owned(sys.to_ito()?)),
        (Scheme::EulerMaruyamaOnIto, Interpretation::Ito) => Ok(Cow::Borrowed(sys)),
        (Scheme::HeunStratonovich, Interpretation::Stratonovich) => Ok(Cow::Borrowed(sys)),
        (Scheme::HeunStratonovich, Interpretation::Ito) => Ok(Cow::Owned(sys.to_stratonovich()?)),
    }
}

fn check_initial_state(sys: &BilinearSde, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.n() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: sys.n(),
            got: x0.len(),
        });
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            what: "initial state",
            t: f64::NAN,
            path_index: None,
            step: None,
        });
    }
    Ok(())
}

/// Step one path over the whole grid, calling `visit(k, state)` at every
/// grid index including k = 0. `sys` must already be in the scheme's
/// interpretation.
fn drive_path(
    sys: &BilinearSde,
    grid: &TimeGrid,
    x0: &[f64],
    seed: u64,
    path_index: u64,
    scheme: Scheme,
    mut visit: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<()> {
    let m = sys.noise_dim();
    let mut scratch = StepScratch::new(sys);
    let mut z = vec![0.0; m];
    let mut dw = vec![0.0; m];
    let mut x = x0.to_vec();
    let mut xn = vec![0.0; sys.n()];
    let sqrt_dt = math::sqrt(grid.dt());
    visit(0, &x)?;
    for k in 0..grid.steps() {
        let t = grid.time(k);
        rng::normals_for_step(seed, path_index, k as u64, &mut z);
        for (w, zz) in dw.iter_mut().zip(&z) {
            *w = zz * sqrt_dt;
        }
        match scheme {
            Scheme::EulerMaruyamaOnIto => {
                euler_maruyama_step(sys, &x, t, grid.dt(), &dw, &mut scratch, &mut xn)?
            }
            Scheme::HeunStratonovich => {
                heun_stratonovich_step(sys, &x, t, grid.dt(), &dw, &mut scratch, &mut xn)?
            }
        }
        if !xn.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "path state",
                t: grid.time(k + 1),
                path_index: Some(path_index),
                step: Some(k + 1),
            });
        }
        core::mem::swap(&mut x, &mut xn);
        visit(k + 1, &x)?;
    }
    Ok(())
}

/// Simulate the path with the given index. The same (seed, path_index)
/// pair produces the same realization here and inside `simulate_ensemble`.
pub fn simulate_path(
    sys: &BilinearSde,
    grid: &TimeGrid,
    x0: &[f64],
    seed: u64,
    path_index: u64,
    scheme: Scheme,
) -> Result<Path> {
    check_initial_state(sys, x0)?;
    let prepared = prepare(sys, scheme)?;
    let n = sys.n();
    let mut states = Vec::with_capacity(grid.points() * n);
    drive_path(&prepared, grid, x0, seed, path_index, scheme, |_, state| {
        states.extend_from_slice(state);
        Ok(())
    })?;
    Ok(Path {
        grid: *grid,
        n,
        states,
    })
}

fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

struct ChunkStats {
    s1: Vec<f64>,
    s2: Vec<f64>,
    paths: Vec<Path>,
}

/// Map chunk indices to results, in parallel when the `rayon` feature is
/// enabled. The output order is the chunk index order either way.
fn map_chunks<R, F>(num_chunks: usize, f: F) -> Vec<Result<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    #[cfg(feature = "rayon")]
    {
        use rayon::prelude::*;
        (0..num_chunks).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "rayon"))]
    {
        (0..num_chunks).map(f).collect()
    }
}

/// Simulate `num_paths` paths and reduce them to per-grid-point mean,
/// sample covariance, and standard error of the mean. Needs at least two
/// paths. With `retain_paths` the realizations themselves are kept, which
/// costs points * n floats per path.
pub fn simulate_ensemble(
    sys: &BilinearSde,
    grid: &TimeGrid,
    x0: &[f64],
    num_paths: usize,
    seed: u64,
    scheme: Scheme,
    retain_paths: bool,
) -> Result<Ensemble> {
    if num_paths < 2 {
        return Err(Error::Invalid("ensemble needs at least two paths"));
    }
    check_initial_state(sys, x0)?;
    let prepared = prepare(sys, scheme)?;
    let prepared = prepared.as_ref();
    let n = sys.n();
    let points = grid.points();
    let tri = tri_len(n);
    let num_chunks = num_paths.div_ceil(CHUNK);

    let chunk_results = map_chunks(num_chunks, |c| {
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(num_paths);
        let mut stats = ChunkStats {
            s1: vec![0.0; points * n],
            s2: vec![0.0; points * tri],
            paths: Vec::new(),
        };
        for p in lo..hi {
            let mut states = if retain_paths {
                Vec::with_capacity(points * n)
            } else {
                Vec::new()
            };
            drive_path(prepared, grid, x0, seed, p as u64, scheme, |k, state| {
                let s1 = &mut stats.s1[k * n..(k + 1) * n];
                for (acc, v) in s1.iter_mut().zip(state) {
                    *acc += v;
                }
                let s2 = &mut stats.s2[k * tri..(k + 1) * tri];
                let mut idx = 0;
                for i in 0..n {
                    for j in i..n {
                        s2[idx] += state[i] * state[j];
                        idx += 1;
                    }
                }
                if retain_paths {
                    states.extend_from_slice(state);
                }
                Ok(())
            })?;
            if retain_paths {
                stats.paths.push(Path {
                    grid: *grid,
                    n,
                    states,
                });
            }
        }
        Ok(stats)
    });

    let mut s1 = vec![0.0; points * n];
    let mut s2 = vec![0.0; points * tri];
    let mut paths = Vec::new();
    for res in chunk_results {
        let stats = res?;
        for (acc, v) in s1.iter_mut().zip(&stats.s1) {
            *acc += v;
        }
        for (acc, v) in s2.iter_mut().zip(&stats.s2) {
            *acc += v;
        }
        paths.extend(stats.paths);
    }

    let np = num_paths as f64;
    let mut mean = vec![0.0; points * n];
    let mut cov = vec![0.0; points * n * n];
    let mut stderr = vec![0.0; points * n];
    for k in 0..points {
        let m = &mut mean[k * n..(k + 1) * n];
        for (i, mi) in m.iter_mut().enumerate() {
            *mi = s1[k * n + i] / np;
        }
        let base2 = k * tri;
        let basec = k * n * n;
        let mut idx = 0;
        for i in 0..n {
            for j in i..n {
                let q = (s2[base2 + idx] - np * m[i] * m[j]) / (np - 1.0);
                cov[basec + i * n + j] = q;
                cov[basec + j * n + i] = q;
                idx += 1;
            }
        }
        for i in 0..n {
            let v = cov[basec + i * n + i];
            stderr[k * n + i] = math::sqrt(v.max(0.0) / np);
        }
    }

    Ok(Ensemble {
        grid: *grid,
        n,
        num_paths,
        seed,
        scheme,
        mean,
        cov,
        stderr,
        paths: retain_paths.then_some(paths),
    })
}

/// Monte Carlo check that the characteristic-function generator matches
/// the simulated paths.
///
/// For each path, the finite-difference rate of exp(s . x) across the
/// window `[t, t + delta_steps * dt]` is compared with the generator
/// integrand at the window start, and the differences are averaged:
///
/// ```text
/// d_path = (exp(s . x(t + D)) - exp(s . x(t))) / D - g(x(t))
/// ```
///
/// Returns (mean of d, standard error of that mean). Pairing the terms
/// path-by-path lets their common randomness cancel, so the noise floor
/// reflects the accuracy of the comparison rather than of either term
/// alone. `sys` must be in Stratonovich form; the steppers convert
/// internally as usual.
#[allow(clippy::too_many_arguments)]
pub fn ccf_residual(
    sys: &BilinearSde,
    grid: &TimeGrid,
    x0: &[f64],
    num_paths: usize,
    seed: u64,
    scheme: Scheme,
    s: &[f64],
    t: f64,
    delta_steps: usize,
) -> Result<(f64, f64)> {
    if sys.interpretation() != Interpretation::Stratonovich {
        return Err(Error::WrongInterpretation {
            expected: Interpretation::Stratonovich,
            got: sys.interpretation(),
        });
    }
    if num_paths < 2 {
        return Err(Error::Invalid("residual estimate needs at least two paths"));
    }
    if s.len() != sys.n() {
        return Err(Error::Dimension {
            what: "characteristic direction",
            expected: sys.n(),
            got: s.len(),
        });
    }
    if delta_steps == 0 {
        return Err(Error::Invalid("window must span at least one step"));
    }
    check_initial_state(sys, x0)?;
    let k_t = grid.index_of(t)?;
    let k2 = k_t + delta_steps;
    if k2 > grid.steps() {
        return Err(Error::Invalid("window extends past the grid"));
    }
    let prepared = prepare(sys, scheme)?;
    let prepared = prepared.as_ref();
    let n = sys.n();
    let delta = delta_steps as f64 * grid.dt();
    let t_start = grid.time(k_t);
    let num_chunks = num_paths.div_ceil(CHUNK);

    let exp_s_dot = |state: &[f64]| -> Result<f64> {
        let mut arg = 0.0;
        for (si, xi) in s.iter().zip(state) {
            arg += si * xi;
        }
        if arg > 709.0 {
            return Err(Error::ExpOverflow { arg });
        }
        Ok(math::exp(arg))
    };

    let chunk_results = map_chunks(num_chunks, |c| {
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(num_paths);
        let mut ccf_ws = CcfScratch::new(sys);
        let mut xt = vec![0.0; n];
        let mut sd = 0.0;
        let mut sd2 = 0.0;
        for p in lo..hi {
            let mut d = 0.0;
            drive_path(prepared, grid, x0, seed, p as u64, scheme, |k, state| {
                if k == k_t {
                    xt.copy_from_slice(state);
                }
                if k == k2 {
                    let e_end = exp_s_dot(state)?;
                    let e_start = exp_s_dot(&xt)?;
                    let g = ccf_integrand(sys, &xt, s, t_start, &mut ccf_ws)?;
                    d = (e_end - e_start) / delta - g;
                }
                Ok(())
            })?;
            sd += d;
            sd2 += d * d;
        }
        Ok((sd, sd2))
    });

    let mut sd = 0.0;
    let mut sd2 = 0.0;
    for res in chunk_results {
        let (a, b) = res?;
        sd += a;
        sd2 += b;
    }
    let np = num_paths as f64;
    let residual = sd / np;
    let var = (sd2 - np * residual * residual) / (np - 1.0);
    let noise_floor = math::sqrt(var.max(0.0) / np);
    Ok((residual, noise_floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseShape;
    use crate::schedule::Schedule;

    fn gbm(a: f64, b: f64) -> BilinearSde {
        BilinearSde::new(
            1,
            Interpretation::Stratonovich,
            Schedule::constant(vec![0.0]).unwrap(),
            Schedule::constant(Matrix::from_rows(&[&[a]]).unwrap()).unwrap(),
            NoiseShape::ScalarInput {
                b0: Schedule::constant(vec![0.0]).unwrap(),
                b: Schedule::constant(Matrix::from_rows(&[&[b]]).unwrap()).unwrap(),
            },
        )
        .unwrap()
    }

    #[test]
    fn grid_times_and_lookup() {
        let g = TimeGrid::new(0.0, 5e-6, 10_000).unwrap();
        assert_eq!(g.points(), 10_001);
        assert_eq!(g.time(0), 0.0);
        assert!((g.t_end() - 0.05).abs() < 1e-15);
        assert_eq!(g.index_of(0.01).unwrap(), 2000);
        assert_eq!(g.index_of(g.time(9999)).unwrap(), 9999);
        assert!(g.index_of(0.0100001).is_err());
        assert!(g.index_of(-1.0).is_err());
        assert!(TimeGrid::new(0.0, 0.0, 10).is_err());
    }

    #[test]
    fn paths_are_reproducible_bitwise() {
        let sys = gbm(-1.0, 0.5);
        let grid = TimeGrid::new(0.0, 1e-2, 50).unwrap();
        let a = simulate_path(&sys, &grid, &[1.0], 42, 3, Scheme::EulerMaruyamaOnIto).unwrap();
        let b = simulate_path(&sys, &grid, &[1.0], 42, 3, Scheme::EulerMaruyamaOnIto).unwrap();
        assert_eq!(a.state(50), b.state(50));
        let c = simulate_path(&sys, &grid, &[1.0], 42, 4, Scheme::EulerMaruyamaOnIto).unwrap();
        assert_ne!(a.state(50), c.state(50));
        assert_eq!(a.state(0), &[1.0]);
    }

    #[test]
    fn em_accepts_either_form_via_conversion() {
        let sys = gbm(-1.0, 0.5);
        let ito = sys.to_ito().unwrap();
        let grid = TimeGrid::new(0.0, 1e-2, 20).unwrap();
        let from_strat =
            simulate_path(&sys, &grid, &[1.0], 7, 0, Scheme::EulerMaruyamaOnIto).unwrap();
        let from_ito =
            simulate_path(&ito, &grid, &[1.0], 7, 0, Scheme::EulerMaruyamaOnIto).unwrap();
        for k in 0..=20 {
            assert_eq!(from_strat.state(k), from_ito.state(k));
        }
    }

    #[test]
    fn schemes_coincide_without_noise() {
        // with b identically zero both schemes are the same Euler update
        let sys = gbm(-2.0, 0.0);
        let grid = TimeGrid::new(0.0, 1e-2, 100).unwrap();
        let em = simulate_path(&sys, &grid, &[1.0], 1, 0, Scheme::EulerMaruyamaOnIto).unwrap();
        let heun = simulate_path(&sys, &grid, &[1.0], 1, 0, Scheme::HeunStratonovich).unwrap();
        for k in 0..=100 {
            assert_eq!(em.state(k), heun.state(k));
        }
        // forward Euler chain exactly
        let mut x = 1.0f64;
        for _ in 0..100 {
            x += -2.0 * x * 1e-2;
        }
        assert_eq!(em.state(100)[0], x);
    }

    #[test]
    fn step_functions_enforce_interpretation() {
        let strat = gbm(-1.0, 0.5);
        let ito = strat.to_ito().unwrap();
        let mut scratch = StepScratch::new(&strat);
        let mut out = [0.0];
        assert!(matches!(
            euler_maruyama_step(&strat, &[1.0], 0.0, 0.1, &[0.0], &mut scratch, &mut out),
            Err(Error::WrongInterpretation { .. })
        ));
        assert!(matches!(
            heun_stratonovich_step(&ito, &[1.0], 0.0, 0.1, &[0.0], &mut scratch, &mut out),
            Err(Error::WrongInterpretation { .. })
        ));
    }

    #[test]
    fn ensemble_matches_manual_chunked_reduction() {
        let sys = gbm(-1.0, 0.5);
        let grid = TimeGrid::new(0.0, 1e-2, 10).unwrap();
        // 130 paths: two full chunks and one partial
        let num = 130;
        let ens = simulate_ensemble(
            &sys,
            &grid,
            &[1.0],
            num,
            9,
            Scheme::EulerMaruyamaOnIto,
            false,
        )
        .unwrap();

        let points = grid.points();
        let mut s1 = vec![0.0; points];
        let mut s2 = vec![0.0; points];
        for c in 0..num.div_ceil(64) {
            let mut c1 = vec![0.0; points];
            let mut c2 = vec![0.0; points];
            for p in (c * 64)..((c + 1) * 64).min(num) {
                let path =
                    simulate_path(&sys, &grid, &[1.0], 9, p as u64, Scheme::EulerMaruyamaOnIto)
                        .unwrap();
                for k in 0..points {
                    let v = path.state(k)[0];
                    c1[k] += v;
                    c2[k] += v * v;
                }
            }
            for k in 0..points {
                s1[k] += c1[k];
                s2[k] += c2[k];
            }
        }
        let np = num as f64;
        for k in 0..points {
            let m = s1[k] / np;
            let q = (s2[k] - np * m * m) / (np - 1.0);
            assert_eq!(ens.mean_at(k)[0].to_bits(), m.to_bits(), "mean at {k}");
            assert_eq!(ens.cov_at(k)[0].to_bits(), q.to_bits(), "cov at {k}");
            assert_eq!(
                ens.stderr_at(k)[0].to_bits(),
                (q.max(0.0) / np).sqrt().to_bits()
            );
        }
    }

    #[test]
    fn zero_noise_two_path_ensemble_has_exactly_zero_covariance() {
        let sys = gbm(-2.0, 0.0);
        let grid = TimeGrid::new(0.0, 1e-2, 25).unwrap();
        let ens =
            simulate_ensemble(&sys, &grid, &[1.0], 2, 0, Scheme::EulerMaruyamaOnIto, true).unwrap();
        for k in 0..=25 {
            assert_eq!(ens.cov_at(k)[0], 0.0);
            assert_eq!(ens.stderr_at(k)[0], 0.0);
        }
        let paths = ens.paths().unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].state(25)[0], ens.mean_at(25)[0]);
    }

    #[test]
    fn ensemble_rejects_single_path() {
        let sys = gbm(-1.0, 0.5);
        let grid = TimeGrid::new(0.0, 1e-2, 5).unwrap();
        assert!(
            simulate_ensemble(&sys, &grid, &[1.0], 1, 0, Scheme::EulerMaruyamaOnIto, false)
                .is_err()
        );
    }

    #[test]
    fn divergence_reports_path_and_step() {
        let sys = gbm(1e200, 0.0);
        let grid = TimeGrid::new(0.0, 1.0, 5).unwrap();
        match simulate_path(&sys, &grid, &[1.0], 0, 7, Scheme::EulerMaruyamaOnIto) {
            Err(Error::NonFinite {
                path_index, step, ..
            }) => {
                assert_eq!(path_index, Some(7));
                assert!(step.is_some());
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn ccf_residual_zero_direction_is_exact() {
        let sys = gbm(-1.0, 0.5);
        let grid = TimeGrid::new(0.0, 1.0 / 64.0, 32).unwrap();
        let (r, floor) = ccf_residual(
            &sys,
            &grid,
            &[1.0],
            16,
            3,
            Scheme::EulerMaruyamaOnIto,
            &[0.0],
            0.25,
            1,
        )
        .unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(floor, 0.0);
    }

    #[test]
    fn ccf_residual_is_small_against_generator() {
        let sys = gbm(-1.0, 0.5);
        let grid = TimeGrid::new(0.0, 1.0 / 64.0, 32).unwrap();
        let (r, floor) = ccf_residual(
            &sys,
            &grid,
            &[1.0],
            512,
            3,
            Scheme::EulerMaruyamaOnIto,
            &[0.3],
            0.25,
            1,
        )
        .unwrap();
        assert!(floor > 0.0);
        // generous bound: discretization bias at dt = 1/64 plus noise
        assert!(r.abs() < 5.0 * floor + 0.05, "r {r} floor {floor}");
    }

    #[test]
    fn ccf_residual_window_validation() {
        let sys = gbm(-1.0, 0.5);
        let grid = TimeGrid::new(0.0, 1.0 / 64.0, 32).unwrap();
        assert!(ccf_residual(
            &sys,
            &grid,
            &[1.0],
            4,
            0,
            Scheme::EulerMaruyamaOnIto,
            &[0.3],
            0.5,
            1
        )
        .is_err());
        assert!(ccf_residual(
            &sys,
            &grid,
            &[1.0],
            4,
            0,
            Scheme::EulerMaruyamaOnIto,
            &[0.3],
            0.2,
            1
        )
        .is_err());
    }
}
