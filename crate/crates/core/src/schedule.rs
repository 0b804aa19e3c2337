//! Time-indexed coefficients: constant, or piecewise-linear on a knot grid.
//!
//! Evaluation outside the knot range is a hard error rather than
//! extrapolation, with one concession to floating-point grids: a boundary
//! slack of 1e-12 of the knot span absorbs the rounding drift of
//! `t0 + k * dt` at the last grid point.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Values a schedule can carry: scalars, vectors, matrices.
pub trait ScheduleValue: Clone {
    /// Structure-aware copy that reuses the target's allocation.
    fn assign(out: &mut Self, src: &Self);
    /// out = a + w * (b - a), elementwise. Exact at w = 0.
    fn lerp_into(out: &mut Self, a: &Self, b: &Self, w: f64);
    fn same_shape(&self, other: &Self) -> bool;
    fn all_finite(&self) -> bool;
}

impl ScheduleValue for f64 {
    fn assign(out: &mut Self, src: &Self) {
        *out = *src;
    }
    fn lerp_into(out: &mut Self, a: &Self, b: &Self, w: f64) {
        *out = a + w * (b - a);
    }
    fn same_shape(&self, _other: &Self) -> bool {
        true
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl ScheduleValue for Vec<f64> {
    fn assign(out: &mut Self, src: &Self) {
        out.clone_from(src);
    }
    fn lerp_into(out: &mut Self, a: &Self, b: &Self, w: f64) {
        out.resize(a.len(), 0.0);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x + w * (y - x);
        }
    }
    fn same_shape(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl ScheduleValue for Matrix {
    fn assign(out: &mut Self, src: &Self) {
        out.assign_from(src);
    }
    fn lerp_into(out: &mut Self, a: &Self, b: &Self, w: f64) {
        out.assign_from(a);
        let ob = out.data_mut();
        for (o, (x, y)) in ob.iter_mut().zip(a.data().iter().zip(b.data())) {
            *o = x + w * (y - x);
        }
    }
    fn same_shape(&self, other: &Self) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    Grid { knots: Vec<f64>, values: Vec<T> },
}

impl<T: ScheduleValue> Schedule<T> {
    pub fn constant(value: T) -> Result<Self> {
        if !value.all_finite() {
            return Err(Error::Schedule("constant value must be finite"));
        }
        Ok(Schedule::Constant(value))
    }

    /// Piecewise-linear schedule. Knots must be finite, strictly increasing,
    /// at least two; one value per knot, all of the same shape.
    pub fn grid(knots: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Schedule("grid schedule needs at least two knots"));
        }
        if knots.len() != values.len() {
            return Err(Error::Schedule("one value per knot required"));
        }
        if !knots.iter().all(|k| k.is_finite()) {
            return Err(Error::Schedule("knots must be finite"));
        }
        if !knots.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Schedule("knots must be strictly increasing"));
        }
        let first = &values[0];
        if !values.iter().all(|v| v.same_shape(first)) {
            return Err(Error::Schedule("grid values must share one shape"));
        }
        if !values.iter().all(|v| v.all_finite()) {
            return Err(Error::Schedule("grid values must be finite"));
        }
        Ok(Schedule::Grid { knots, values })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant(_))
    }

    /// Knot vector for grid schedules, None for constants.
    pub fn knots(&self) -> Option<&[f64]> {
        match self {
            Schedule::Constant(_) => None,
            Schedule::Grid { knots, .. } => Some(knots),
        }
    }

    /// Valid evaluation range, None meaning all of time.
    pub fn domain(&self) -> Option<(f64, f64)> {
        self.knots().map(|k| (k[0], k[k.len() - 1]))
    }

    /// A representative value, for shape validation.
    pub fn probe(&self) -> &T {
        match self {
            Schedule::Constant(v) => v,
            Schedule::Grid { values, .. } => &values[0],
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut T) -> Result<()> {
        match self {
            Schedule::Constant(v) => {
                T::assign(out, v);
                Ok(())
            }
            Schedule::Grid { knots, values } => {
                let lo = knots[0];
                let hi = knots[knots.len() - 1];
                let slack = (hi - lo) * 1e-12;
                let mut t = t;
                if t < lo {
                    if lo - t <= slack {
                        t = lo;
                    } else {
                        return Err(Error::ScheduleRange { t, lo, hi });
                    }
                }
                if t > hi {
                    if t - hi <= slack {
                        t = hi;
                    } else {
                        return Err(Error::ScheduleRange { t, lo, hi });
                    }
                }
                let idx = knots.partition_point(|k| *k <= t).saturating_sub(1);
                let idx = idx.min(knots.len() - 2);
                if t == knots[idx + 1] {
                    T::assign(out, &values[idx + 1]);
                    return Ok(());
                }
                let w = (t - knots[idx]) / (knots[idx + 1] - knots[idx]);
                T::lerp_into(out, &values[idx], &values[idx + 1], w);
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64) -> Result<T> {
        let mut out = self.probe().clone();
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Apply a check to every stored value (constant or all grid values).
    pub fn check_values(&self, mut f: impl FnMut(&T) -> Result<()>) -> Result<()> {
        match self {
            Schedule::Constant(v) => f(v),
            Schedule::Grid { values, .. } => {
                for v in values {
                    f(v)?;
                }
                Ok(())
            }
        }
    }
}

/// Union of the knot vectors of several schedules, clipped to the
/// intersection of their ranges. `None` when every source is constant.
/// Used to fold drift corrections into first-class schedules: the folded
/// coefficient is sampled exactly at every knot any operand contributes.
pub(crate) fn union_knots(sources: &[Option<&[f64]>]) -> Result<Option<Vec<f64>>> {
    let grids: Vec<&[f64]> = sources.iter().flatten().copied().collect();
    if grids.is_empty() {
        return Ok(None);
    }
    let lo = grids.iter().map(|k| k[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = grids
        .iter()
        .map(|k| k[k.len() - 1])
        .fold(f64::INFINITY, f64::min);
    if lo >= hi {
        return Err(Error::Schedule("schedules share no time range"));
    }
    let mut merged: Vec<f64> = grids
        .iter()
        .flat_map(|k| k.iter().copied())
        .filter(|k| *k >= lo && *k <= hi)
        .collect();
    merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
    merged.dedup();
    debug_assert!(merged.len() >= 2);
    Ok(Some(merged))
}

/// Build a schedule from a pointwise rule: constant when no source grid
/// constrains it, otherwise sampled on the union knot grid.
pub(crate) fn derive<T: ScheduleValue>(
    knots: Option<Vec<f64>>,
    mut f: impl FnMut(f64) -> Result<T>,
) -> Result<Schedule<T>> {
    match knots {
        None => Schedule::constant(f(0.0)?),
        Some(ks) => {
            let mut values = Vec::with_capacity(ks.len());
            for k in &ks {
                values.push(f(*k)?);
            }
            Schedule::grid(ks, values)
        }
    }
}
