//! Shared generators for the integration suites: a SplitMix value stream
//! and a builder for random systems with piecewise-linear coefficients.

#![allow(dead_code)]

use bilinear_sde::linalg::Matrix;
use bilinear_sde::{BilinearSde, Interpretation, NoiseShape, Schedule};

pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn state(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.range(-2.0, 2.0)).collect()
    }
}

/// Evenly spaced knots over [0, 1]; `count` must be at least 2.
fn knot_grid(count: usize) -> Vec<f64> {
    (0..count).map(|j| j as f64 / (count - 1) as f64).collect()
}

fn draw_vec(rng: &mut SplitMix, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.range(-1.5, 1.5)).collect()
}

fn draw_mat(rng: &mut SplitMix, rows: usize, cols: usize) -> Matrix {
    Matrix::from_flat(rows, cols, draw_vec(rng, rows * cols)).unwrap()
}

/// A vector-valued schedule, constant when `count` is 1.
pub fn vec_schedule(rng: &mut SplitMix, n: usize, count: usize) -> Schedule<Vec<f64>> {
    if count == 1 {
        Schedule::constant(draw_vec(rng, n)).unwrap()
    } else {
        let values = (0..count).map(|_| draw_vec(rng, n)).collect();
        Schedule::grid(knot_grid(count), values).unwrap()
    }
}

pub fn mat_schedule(
    rng: &mut SplitMix,
    rows: usize,
    cols: usize,
    count: usize,
) -> Schedule<Matrix> {
    if count == 1 {
        Schedule::constant(draw_mat(rng, rows, cols)).unwrap()
    } else {
        let values = (0..count).map(|_| draw_mat(rng, rows, cols)).collect();
        Schedule::grid(knot_grid(count), values).unwrap()
    }
}

pub fn scalar_schedule(rng: &mut SplitMix, count: usize) -> Schedule<f64> {
    if count == 1 {
        Schedule::constant(rng.range(-1.5, 1.5)).unwrap()
    } else {
        let values = (0..count).map(|_| rng.range(-1.5, 1.5)).collect();
        Schedule::grid(knot_grid(count), values).unwrap()
    }
}

/// Random system over the time window [0, 1]. Coefficient knot counts come
/// from `k` (1 means constant); `m` is ignored for the scalar noise shape,
/// which always has one channel.
pub fn random_system(
    seed: u64,
    n: usize,
    m: usize,
    interpretation: Interpretation,
    scalar_shape: bool,
    k: [usize; 4],
) -> BilinearSde {
    let mut rng = SplitMix(seed ^ 0x5BF0_3635_ABEF_11D3);
    let a0 = vec_schedule(&mut rng, n, k[0]);
    let a = mat_schedule(&mut rng, n, n, k[1]);
    let noise = if scalar_shape {
        NoiseShape::ScalarInput {
            b0: vec_schedule(&mut rng, n, k[2]),
            b: mat_schedule(&mut rng, n, n, k[3]),
        }
    } else {
        NoiseShape::VectorInput {
            b0: mat_schedule(&mut rng, n, m, k[2]),
            gains: (0..m).map(|_| scalar_schedule(&mut rng, k[3])).collect(),
        }
    };
    BilinearSde::new(n, interpretation, a0, a, noise).unwrap()
}
