//! Vector time-varying bilinear stochastic differential systems.
//!
//! The state model is
//!
//! ```text
//! dx_i = (A0_i(t) + sum_a A_ia(t) x_a) dt + noise_i o dW
//! ```
//!
//! with the noise entering either through a single Brownian motion with an
//! affine coefficient `B0(t) + B(t) x` (scalar input) or through m independent
//! channels `B0_ip(t) + x_i b_p(t)` (vector input). Systems carry their
//! stochastic-calculus interpretation (Stratonovich or Ito) explicitly, and
//! conversion between the two folds the affine drift correction into the
//! coefficient schedules exactly.
//!
//! What lives where:
//!
//! - [`model`]: system representation, drift/correction/noise/diffusion
//!   evaluation, Stratonovich/Ito conversion.
//! - [`moments`]: exact conditional mean/covariance propagation (the moment
//!   hierarchy of a bilinear system closes at second order) and the
//!   characteristic-function generator used for residual checks.
//! - [`sim`]: Euler-Maruyama and Heun path integration, reproducible ensembles,
//!   and the characteristic-function residual check.
//! - [`rectifier`]: the averaged dq-frame stochastic PWM rectifier model built
//!   from circuit parameters, with hand-derived cross-check forms.
//! - [`rng`]: the counter-based Gaussian increment stream keyed by
//!   (base seed, path index, step).
//!
//! The crate is `no_std`-compatible (`default-features = false,
//! features = ["libm"]`); everything allocates through `alloc` and performs no
//! I/O. The `rayon` feature parallelizes ensemble runs without changing a
//! single output bit.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("building without `std` requires the `libm` feature for scalar math");

extern crate alloc;

pub mod error;
pub mod linalg;
mod math;
pub mod model;
pub mod moments;
pub mod rectifier;
pub mod rng;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
pub use model::{BilinearSde, Interpretation, NoiseShape};
pub use moments::{MomentState, MomentTrajectory};
pub use rectifier::RectifierParams;
pub use schedule::Schedule;
pub use sim::{Ensemble, Path, Scheme, TimeGrid};
