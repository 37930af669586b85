//! Riccati-method toolkit for second order nonlinear equations
//!
//! ```text
//! (p0(t, phi) phi')' + q0(t, phi) phi' + r0(t, phi) phi = 0,   t >= t0
//! ```
//!
//! integrated as the first order system in `(phi, psi)` with `psi = p0 phi'`.
//! Along zero-free stretches `y = psi / phi` solves a Riccati equation, which
//! powers growth bounds, global existence and oscillation checks.

pub mod apps;
pub mod cert;
pub mod classify;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod quad;
pub mod riccati;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type Trajectory32 = dynamics::Trajectory<f32>;
pub type Equation64 = field::EquationSpec<f64>;
pub type Equation32 = field::EquationSpec<f32>;
pub type Certificate64 = cert::Certificate<f64>;
pub type Certificate32 = cert::Certificate<f32>;
