//! Bilinear SDE representation and coefficient-level operations.
//!
//! A system is
//!
//! ```text
//! dx = (A0(t) + A(t) x) dt + noise(x, t) dW      (n states, m channels)
//! ```
//!
//! under a declared calculus interpretation. The noise coefficient is affine
//! in the state in one of two shapes:
//!
//! - scalar input (m = 1): column `B0(t) + B(t) x`;
//! - vector input: entry `(i, p) = B0_ip(t) + x_i b_p(t)` with per-channel
//!   scalar gains `b_p`.
//!
//! The Stratonovich-to-Ito drift correction is affine in x for both shapes,
//! so conversion folds it into updated `A0`, `A` schedules and the result is
//! a first-class system again. For grid schedules the folded coefficients are
//! sampled on the union of the operand knot grids; because linear
//! interpolation is linear in the knot values, converting back subtracts the
//! identical samples and the round trip is exact to machine precision.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::schedule::{derive, union_knots, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpretation {
    Stratonovich,
    Ito,
}

/// Shape of the noise coefficient.
#[derive(Clone, Debug)]
pub enum NoiseShape {
    /// One Brownian motion, coefficient column B0(t) + B(t) x.
    ScalarInput {
        b0: Schedule<Vec<f64>>,
        b: Schedule<Matrix>,
    },
    /// m independent channels; channel p contributes (B0_ip(t) + x_i b_p(t)) dW_p.
    VectorInput {
        b0: Schedule<Matrix>,
        gains: Vec<Schedule<f64>>,
    },
}

#[derive(Clone, Debug)]
pub struct BilinearSde {
    n: usize,
    interpretation: Interpretation,
    a0: Schedule<Vec<f64>>,
    a: Schedule<Matrix>,
    noise: NoiseShape,
}

/// Reusable buffers for schedule evaluation in stepping loops. All `_into`
/// operations leave the scratch contents unspecified.
#[derive(Clone, Debug)]
pub struct EvalScratch {
    a0: Vec<f64>,
    a: Matrix,
    b0v: Vec<f64>,
    b: Matrix,
    b0m: Matrix,
    gains: Vec<f64>,
    tmp: Vec<f64>,
}

impl EvalScratch {
    pub fn new(sys: &BilinearSde) -> Self {
        let n = sys.n;
        let m = sys.noise_dim();
        EvalScratch {
            a0: vec![0.0; n],
            a: Matrix::zeros(n, n),
            b0v: vec![0.0; n],
            b: Matrix::zeros(n, n),
            b0m: Matrix::zeros(n, m),
            gains: vec![0.0; m],
            tmp: vec![0.0; n],
        }
    }
}

impl BilinearSde {
    pub fn new(
        n: usize,
        interpretation: Interpretation,
        a0: Schedule<Vec<f64>>,
        a: Schedule<Matrix>,
        noise: NoiseShape,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("state dimension must be at least 1"));
        }
        a0.check_values(|v| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::Dimension {
                    what: "A0 schedule value",
                    expected: n,
                    got: v.len(),
                })
            }
        })?;
        a.check_values(|m| {
            if m.rows() == n && m.cols() == n {
                Ok(())
            } else {
                Err(Error::Dimension {
                    what: "A schedule value",
                    expected: n,
                    got: m.rows().max(m.cols()),
                })
            }
        })?;
        match &noise {
            NoiseShape::ScalarInput { b0, b } => {
                b0.check_values(|v| {
                    if v.len() == n {
                        Ok(())
                    } else {
                        Err(Error::Dimension {
                            what: "B0 schedule value",
                            expected: n,
                            got: v.len(),
                        })
                    }
                })?;
                b.check_values(|m| {
                    if m.rows() == n && m.cols() == n {
                        Ok(())
                    } else {
                        Err(Error::Dimension {
                            what: "B schedule value",
                            expected: n,
                            got: m.rows().max(m.cols()),
                        })
                    }
                })?;
            }
            NoiseShape::VectorInput { b0, gains } => {
                let m = gains.len();
                if m == 0 {
                    return Err(Error::Invalid("vector input needs at least one channel"));
                }
                b0.check_values(|mat| {
                    if mat.rows() == n && mat.cols() == m {
                        Ok(())
                    } else {
                        Err(Error::Dimension {
                            what: "B0 schedule value",
                            expected: n * m,
                            got: mat.rows() * mat.cols(),
                        })
                    }
                })?;
            }
        }
        Ok(BilinearSde {
            n,
            interpretation,
            a0,
            a,
            noise,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of Brownian channels m.
    pub fn noise_dim(&self) -> usize {
        match &self.noise {
            NoiseShape::ScalarInput { .. } => 1,
            NoiseShape::VectorInput { gains, .. } => gains.len(),
        }
    }

    pub fn interpretation(&self) -> Interpretation {
        self.interpretation
    }

    pub fn a0(&self) -> &Schedule<Vec<f64>> {
        &self.a0
    }

    pub fn a(&self) -> &Schedule<Matrix> {
        &self.a
    }

    pub fn noise(&self) -> &NoiseShape {
        &self.noise
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                what: "state vector",
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Drift A0(t) + A(t) x, without any interpretation correction.
    pub fn drift_eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut ws = EvalScratch::new(self);
        let mut out = vec![0.0; self.n];
        self.drift_eval_into(x, t, &mut ws, &mut out)?;
        Ok(out)
    }

    pub fn drift_eval_into(
        &self,
        x: &[f64],
        t: f64,
        ws: &mut EvalScratch,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_state(x)?;
        self.a0.eval_into(t, &mut ws.a0)?;
        self.a.eval_into(t, &mut ws.a)?;
        ws.a.matvec_into(x, out);
        for (o, c) in out.iter_mut().zip(&ws.a0) {
            *o += c;
        }
        Ok(())
    }

    /// The Stratonovich-to-Ito drift correction evaluated at (x, t):
    ///
    /// - scalar input: (1/2) B(t) (B0(t) + B(t) x);
    /// - vector input: component i = (1/2) sum_p (B0_ip b_p + b_p^2 x_i).
    ///
    /// Only meaningful for Stratonovich systems; calling it on an Ito system
    /// is a contract violation.
    pub fn stratonovich_correction(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut ws = EvalScratch::new(self);
        let mut out = vec![0.0; self.n];
        self.stratonovich_correction_into(x, t, &mut ws, &mut out)?;
        Ok(out)
    }

    pub fn stratonovich_correction_into(
        &self,
        x: &[f64],
        t: f64,
        ws: &mut EvalScratch,
        out: &mut [f64],
    ) -> Result<()> {
        if self.interpretation != Interpretation::Stratonovich {
            return Err(Error::WrongInterpretation {
                expected: Interpretation::Stratonovich,
                got: self.interpretation,
            });
        }
        self.check_state(x)?;
        match &self.noise {
            NoiseShape::ScalarInput { b0, b } => {
                b0.eval_into(t, &mut ws.b0v)?;
                b.eval_into(t, &mut ws.b)?;
                ws.b.matvec_into(x, &mut ws.tmp);
                for (u, c) in ws.tmp.iter_mut().zip(&ws.b0v) {
                    *u += c;
                }
                ws.b.matvec_into(&ws.tmp, out);
                for o in out.iter_mut() {
                    *o *= 0.5;
                }
            }
            NoiseShape::VectorInput { b0, gains } => {
                b0.eval_into(t, &mut ws.b0m)?;
                eval_gains(gains, t, &mut ws.gains)?;
                let s2: f64 = ws.gains.iter().map(|g| g * g).sum();
                for i in 0..self.n {
                    let mut acc = 0.0;
                    for (p, g) in ws.gains.iter().enumerate() {
                        acc += ws.b0m[(i, p)] * g;
                    }
                    out[i] = 0.5 * (acc + s2 * x[i]);
                }
            }
        }
        Ok(())
    }

    /// Noise coefficient as an n x m matrix.
    pub fn noise_coefficient(&self, x: &[f64], t: f64) -> Result<Matrix> {
        let mut ws = EvalScratch::new(self);
        let mut out = Matrix::zeros(self.n, self.noise_dim());
        self.noise_coefficient_into(x, t, &mut ws, &mut out)?;
        Ok(out)
    }

    pub fn noise_coefficient_into(
        &self,
        x: &[f64],
        t: f64,
        ws: &mut EvalScratch,
        out: &mut Matrix,
    ) -> Result<()> {
        self.check_state(x)?;
        match &self.noise {
            NoiseShape::ScalarInput { b0, b } => {
                b0.eval_into(t, &mut ws.b0v)?;
                b.eval_into(t, &mut ws.b)?;
                ws.b.matvec_into(x, &mut ws.tmp);
                debug_assert_eq!(out.rows() * out.cols(), self.n);
                for i in 0..self.n {
                    out[(i, 0)] = ws.b0v[i] + ws.tmp[i];
                }
            }
            NoiseShape::VectorInput { b0, gains } => {
                b0.eval_into(t, &mut ws.b0m)?;
                eval_gains(gains, t, &mut ws.gains)?;
                for i in 0..self.n {
                    for (p, g) in ws.gains.iter().enumerate() {
                        out[(i, p)] = ws.b0m[(i, p)] + x[i] * g;
                    }
                }
            }
        }
        Ok(())
    }

    /// Diffusion matrix (bb^T)(x, t) by the expanded closed form
    ///
    /// ```text
    /// (bb^T)_ij = B0_i B0_j + B0_i (Bx)_j + B0_j (Bx)_i + (Bx)_i (Bx)_j
    /// ```
    ///
    /// (scalar input; the vector-input analog sums the per-channel
    /// expansion). This is deliberately a different code path from
    /// `noise_coefficient` times its transpose; tests hold the two routes
    /// together. Entries are computed for i <= j and mirrored, so the result
    /// is exactly symmetric.
    pub fn diffusion_matrix(&self, x: &[f64], t: f64) -> Result<Matrix> {
        let mut ws = EvalScratch::new(self);
        let mut out = Matrix::zeros(self.n, self.n);
        self.diffusion_matrix_into(x, t, &mut ws, &mut out)?;
        Ok(out)
    }

    pub fn diffusion_matrix_into(
        &self,
        x: &[f64],
        t: f64,
        ws: &mut EvalScratch,
        out: &mut Matrix,
    ) -> Result<()> {
        self.check_state(x)?;
        match &self.noise {
            NoiseShape::ScalarInput { b0, b } => {
                b0.eval_into(t, &mut ws.b0v)?;
                b.eval_into(t, &mut ws.b)?;
                ws.b.matvec_into(x, &mut ws.tmp);
                let b0v = &ws.b0v;
                let u = &ws.tmp;
                for i in 0..self.n {
                    for j in i..self.n {
                        let v = b0v[i] * b0v[j] + b0v[i] * u[j] + b0v[j] * u[i] + u[i] * u[j];
                        out[(i, j)] = v;
                        out[(j, i)] = v;
                    }
                }
            }
            NoiseShape::VectorInput { b0, gains } => {
                b0.eval_into(t, &mut ws.b0m)?;
                eval_gains(gains, t, &mut ws.gains)?;
                let s2: f64 = ws.gains.iter().map(|g| g * g).sum();
                // r_i = sum_p B0_ip b_p
                for i in 0..self.n {
                    let mut acc = 0.0;
                    for (p, g) in ws.gains.iter().enumerate() {
                        acc += ws.b0m[(i, p)] * g;
                    }
                    ws.tmp[i] = acc;
                }
                for i in 0..self.n {
                    for j in i..self.n {
                        let mut gram = 0.0;
                        for p in 0..ws.gains.len() {
                            gram += ws.b0m[(i, p)] * ws.b0m[(j, p)];
                        }
                        let v = gram + ws.tmp[i] * x[j] + ws.tmp[j] * x[i] + s2 * x[i] * x[j];
                        out[(i, j)] = v;
                        out[(j, i)] = v;
                    }
                }
            }
        }
        Ok(())
    }

    /// Second partial derivatives of (bb^T)_ij with respect to the state:
    /// entry (p, q) = d2 (bb^T)_ij / dx_p dx_q. Constant in x:
    /// B_ip B_jq + B_iq B_jp for scalar input, and
    /// (d_jq d_ip + d_iq d_jp) sum_p b_p^2 for vector input.
    pub fn diffusion_hessian(&self, t: f64, i: usize, j: usize) -> Result<Matrix> {
        if i >= self.n || j >= self.n {
            return Err(Error::Dimension {
                what: "diffusion_hessian index",
                expected: self.n,
                got: i.max(j),
            });
        }
        let mut out = Matrix::zeros(self.n, self.n);
        match &self.noise {
            NoiseShape::ScalarInput { b, .. } => {
                let bm = b.eval(t)?;
                for p in 0..self.n {
                    for q in 0..self.n {
                        out[(p, q)] = bm[(i, p)] * bm[(j, q)] + bm[(i, q)] * bm[(j, p)];
                    }
                }
            }
            NoiseShape::VectorInput { gains, .. } => {
                let mut s2 = 0.0;
                for g in gains {
                    let v = g.eval(t)?;
                    s2 += v * v;
                }
                out[(i, j)] += s2;
                out[(j, i)] += s2;
            }
        }
        Ok(out)
    }

    /// Equivalent Ito-interpreted system: drift plus the correction, folded
    /// into the A0/A schedules exactly (the correction is affine in x).
    pub fn to_ito(&self) -> Result<BilinearSde> {
        if self.interpretation != Interpretation::Stratonovich {
            return Err(Error::WrongInterpretation {
                expected: Interpretation::Stratonovich,
                got: self.interpretation,
            });
        }
        self.fold_correction(1.0, Interpretation::Ito)
    }

    /// Exact inverse of `to_ito`: subtracts the correction.
    pub fn to_stratonovich(&self) -> Result<BilinearSde> {
        if self.interpretation != Interpretation::Ito {
            return Err(Error::WrongInterpretation {
                expected: Interpretation::Ito,
                got: self.interpretation,
            });
        }
        self.fold_correction(-1.0, Interpretation::Stratonovich)
    }

    fn fold_correction(&self, sign: f64, flip_to: Interpretation) -> Result<BilinearSde> {
        let n = self.n;
        let (a0, a) = match &self.noise {
            NoiseShape::ScalarInput { b0, b } => {
                // A0'_i = A0_i + sign/2 sum_q B_iq B0_q
                let k0 = union_knots(&[self.a0.knots(), b0.knots(), b.knots()])?;
                let a0 = derive(k0, |t| {
                    let mut a0v = self.a0.eval(t)?;
                    let b0v = b0.eval(t)?;
                    let bm = b.eval(t)?;
                    for (i, out) in a0v.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for q in 0..n {
                            acc += bm[(i, q)] * b0v[q];
                        }
                        *out += sign * 0.5 * acc;
                    }
                    Ok(a0v)
                })?;
                // A'_if = A_if + sign/2 sum_q B_iq B_qf  (= A + sign/2 B^2)
                let k1 = union_knots(&[self.a.knots(), b.knots()])?;
                let a = derive(k1, |t| {
                    let mut am = self.a.eval(t)?;
                    let bm = b.eval(t)?;
                    for i in 0..n {
                        for f in 0..n {
                            let mut acc = 0.0;
                            for q in 0..n {
                                acc += bm[(i, q)] * bm[(q, f)];
                            }
                            am[(i, f)] += sign * 0.5 * acc;
                        }
                    }
                    Ok(am)
                })?;
                (a0, a)
            }
            NoiseShape::VectorInput { b0, gains } => {
                let gain_knots: Vec<Option<&[f64]>> = gains.iter().map(|g| g.knots()).collect();
                let mut srcs: Vec<Option<&[f64]>> = vec![self.a0.knots(), b0.knots()];
                srcs.extend(gain_knots.iter().copied());
                let a0 = derive(union_knots(&srcs)?, |t| {
                    let mut a0v = self.a0.eval(t)?;
                    let b0m = b0.eval(t)?;
                    for (i, out) in a0v.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for (p, g) in gains.iter().enumerate() {
                            acc += b0m[(i, p)] * g.eval(t)?;
                        }
                        *out += sign * 0.5 * acc;
                    }
                    Ok(a0v)
                })?;
                let mut srcs: Vec<Option<&[f64]>> = vec![self.a.knots()];
                srcs.extend(gain_knots.iter().copied());
                let a = derive(union_knots(&srcs)?, |t| {
                    let mut am = self.a.eval(t)?;
                    let mut s2 = 0.0;
                    for g in gains {
                        let v = g.eval(t)?;
                        s2 += v * v;
                    }
                    for i in 0..n {
                        am[(i, i)] += sign * 0.5 * s2;
                    }
                    Ok(am)
                })?;
                (a0, a)
            }
        };
        BilinearSde::new(n, flip_to, a0, a, self.noise.clone())
    }
}

fn eval_gains(gains: &[Schedule<f64>], t: f64, out: &mut [f64]) -> Result<()> {
    for (o, g) in out.iter_mut().zip(gains) {
        g.eval_into(t, o)?;
    }
    Ok(())
}
