#![allow(dead_code)]

use rcert_core::dynamics::{integrate, IntegrationOptions, Trajectory};
use rcert_core::field::{EquationSpec, InitialData, ScalarField};

pub fn linear(p: f64, q: f64, r: f64) -> EquationSpec<f64> {
    EquationSpec::new(
        ScalarField::constant("p0", p),
        ScalarField::constant("q0", q),
        ScalarField::constant("r0", r),
        0.0,
    )
    .unwrap()
}

pub fn harmonic() -> EquationSpec<f64> {
    linear(1.0, 0.0, 1.0)
}

/// `psi'' = |psi|^2 psi` in the form `(p0 phi')' + r0 phi = 0`.
pub fn cubic_blowup() -> EquationSpec<f64> {
    EquationSpec::new(
        ScalarField::constant("p0", 1.0),
        ScalarField::constant("q0", 0.0),
        ScalarField::new("r0", |_, w: f64| -w * w),
        0.0,
    )
    .unwrap()
}

pub fn run(eq: &EquationSpec<f64>, ic: (f64, f64, f64), horizon: f64) -> Trajectory<f64> {
    let ic = InitialData::new(ic.0, ic.1, ic.2).unwrap();
    integrate(eq, &ic, &IntegrationOptions::with_horizon(horizon)).unwrap()
}

pub fn run_tol(eq: &EquationSpec<f64>, ic: (f64, f64, f64), horizon: f64, tol: f64) -> Trajectory<f64> {
    let ic = InitialData::new(ic.0, ic.1, ic.2).unwrap();
    let mut o = IntegrationOptions::with_horizon(horizon);
    o.rel_tol = tol;
    o.abs_tol = tol * 1e-2;
    integrate(eq, &ic, &o).unwrap()
}

/// Classical fixed-step RK4 on `(phi, psi)`; stops once `|phi| + |psi|` exceeds `cap`.
/// Returns the final time and state.
pub fn rk4_reference(
    f: impl Fn(f64, [f64; 2]) -> [f64; 2],
    t0: f64,
    y0: [f64; 2],
    h: f64,
    t_end: f64,
    cap: f64,
) -> (f64, [f64; 2]) {
    let (mut t, mut y) = (t0, y0);
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    while t < t_end - 1e-15 {
        let k1 = f(t, y);
        let k2 = f(t + h / 2.0, add(y, k1, h / 2.0));
        let k3 = f(t + h / 2.0, add(y, k2, h / 2.0));
        let k4 = f(t + h, add(y, k3, h));
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        if !(y[0].abs() + y[1].abs() < cap) {
            break;
        }
    }
    (t, y)
}
