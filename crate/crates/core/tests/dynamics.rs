mod common;

use std::f64::consts::PI;

use common::{cubic_blowup, harmonic, linear, rk4_reference, run, run_tol};
use rcert_core::dynamics::{integrate, refine_check, EscapeReason, IntegrationOptions, Terminal};
use rcert_core::field::{EquationSpec, InitialData, ScalarField};
use rcert_core::Error;

#[test]
fn constant_solution() {
    let tr = run(&linear(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 10.0);
    assert!(tr.zeros().is_empty());
    assert_eq!(tr.terminal(), Terminal::ReachedHorizon { t: 10.0 });
    for s in tr.samples() {
        assert!((s.phi - 1.0).abs() < 1e-14 && s.psi.abs() < 1e-14);
    }
}

#[test]
fn harmonic_cosine() {
    let tr = run(&harmonic(), (0.0, 1.0, 0.0), 10.0);
    let expected = [PI / 2.0, 1.5 * PI, 2.5 * PI];
    assert!(tr.zeros().len() >= 3);
    for (z, e) in tr.zeros().iter().zip(expected) {
        assert!((z - e).abs() < 1e-6, "zero {z} vs {e}");
    }
    assert!((tr.phi(PI).unwrap() + 1.0).abs() < 1e-6);
    for k in 0..=200 {
        let t = 0.05 * k as f64;
        assert!((tr.phi(t).unwrap() - t.cos()).abs() < 1e-7);
    }
    assert!(matches!(tr.terminal(), Terminal::ReachedHorizon { .. }));
}

#[test]
fn cubic_blowup_escapes() {
    let tr = run(&cubic_blowup(), (0.0, 1.0, 1.0), 10.0);
    let Terminal::FiniteEscape { t, bracket, reason } = tr.terminal() else {
        panic!("expected escape, got {:?}", tr.terminal());
    };
    assert_eq!(reason, EscapeReason::StepCollapse);
    assert!(bracket > 0.0 && bracket < 1e-6);
    assert!(tr.zeros().is_empty());
    assert!(tr.samples().windows(2).all(|w| w[1].phi >= w[0].phi));
    // Fixed-step reference at h = 1e-4.
    let (t_ref, y_ref) = rk4_reference(|_, y| [y[1], y[0].powi(3)], 0.0, [1.0, 1.0], 1e-4, 10.0, 1e8);
    assert!(y_ref[0].abs() + y_ref[1].abs() >= 1e8);
    assert!((t - t_ref).abs() < 1e-2, "escape {t} vs reference {t_ref}");
}

#[test]
fn refine_check_harmonic_and_constant() {
    let eq = harmonic();
    let ic = InitialData::new(0.0, 1.0, 0.0).unwrap();
    let mut o = IntegrationOptions::with_horizon(10.0);
    o.rel_tol = 1e-6;
    o.abs_tol = 1e-8;
    let r1 = refine_check(&eq, &ic, &o).unwrap();
    let r2 = refine_check(&eq, &ic, &o.scaled(0.1)).unwrap();
    assert!(r1.discrepancy / r2.discrepancy >= 5.0, "{} / {}", r1.discrepancy, r2.discrepancy);

    let c = refine_check(&linear(1.0, 0.0, 0.0), &ic, &o).unwrap();
    assert_eq!(c.discrepancy, 0.0);
}

#[test]
fn zero_events_are_sound() {
    let eq = EquationSpec::new(
        ScalarField::new("p0", |t: f64, _| 1.0 + 0.5 * t.sin()),
        ScalarField::new("q0", |_, w: f64| 0.1 * w * w),
        ScalarField::new("r0", |t: f64, w: f64| 2.0 + t.cos() + w * w),
        0.0,
    )
    .unwrap();
    let tr = run(&eq, (0.0, 0.7, -0.3), 30.0);
    assert!(tr.zeros().len() > 5);
    for &z in tr.zeros() {
        assert!(tr.phi(z).unwrap().abs() <= tr.zero_tol() * 10.0);
        let d = 1e-6;
        assert!(tr.phi(z - d).unwrap() * tr.phi(z + d).unwrap() < 0.0);
    }
    let mut marks = vec![tr.start()];
    marks.extend_from_slice(tr.zeros());
    marks.push(tr.end());
    for w in marks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let probes: Vec<f64> = (1..64).map(|k| a + (b - a) * k as f64 / 64.0).collect();
        let s0 = tr.phi(probes[0]).unwrap().signum();
        assert!(probes.iter().all(|&t| tr.phi(t).unwrap().signum() == s0));
    }
}

#[test]
fn psi_is_p0_times_derivative() {
    let eq = EquationSpec::new(
        ScalarField::new("p0", |t: f64, w: f64| 1.0 + t * t + w * w),
        ScalarField::constant("q0", 0.3),
        ScalarField::constant("r0", 1.0),
        0.0,
    )
    .unwrap();
    let tr = run(&eq, (0.0, 1.0, 0.5), 5.0);
    for k in 1..50 {
        let t = 0.1 * k as f64;
        let h = 1e-5;
        let fd = (tr.phi(t + h).unwrap() - tr.phi(t - h).unwrap()) / (2.0 * h);
        let phi = tr.phi(t).unwrap();
        let psi = tr.psi(t).unwrap();
        assert!((psi - (1.0 + t * t + phi * phi) * fd).abs() < 1e-6);
        assert!((tr.dphi(t).unwrap() - fd).abs() < 1e-6);
    }
}

#[test]
fn nonpositive_p0_aborts() {
    let eq = EquationSpec::new(
        ScalarField::new("p0", |t: f64, _| 1.0 - t),
        ScalarField::constant("q0", 0.0),
        ScalarField::constant("r0", 0.0),
        0.0,
    )
    .unwrap();
    let ic = InitialData::new(0.0, 1.0, 0.0).unwrap();
    let err = integrate(&eq, &ic, &IntegrationOptions::with_horizon(2.0)).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
}

#[test]
fn nonfinite_field_is_an_error() {
    let eq = EquationSpec::new(
        ScalarField::constant("p0", 1.0),
        ScalarField::constant("q0", 0.0),
        ScalarField::new("r0", |t: f64, _| if t > 1.0 { f64::NAN } else { 1.0 }),
        0.0,
    )
    .unwrap();
    let ic = InitialData::new(0.0, 1.0, 0.0).unwrap();
    let err = integrate(&eq, &ic, &IntegrationOptions::with_horizon(3.0)).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }));
}

#[test]
fn max_zeros_truncates() {
    let ic = InitialData::new(0.0, 1.0, 0.0).unwrap();
    let mut o = IntegrationOptions::with_horizon(100.0);
    o.max_zeros = 3;
    let tr = integrate(&harmonic(), &ic, &o).unwrap();
    assert!(tr.truncated());
    assert_eq!(tr.zeros().len(), 3);
    assert!(tr.end() < 100.0);
}

#[test]
fn csv_export_has_contract_columns() {
    let tr = run(&harmonic(), (0.0, 0.0, 1.0), 4.0);
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,phi,psi,y");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 4);
    assert_eq!(first[3], "", "phi(0) = 0 leaves y empty");
    assert_eq!(text.lines().count(), tr.samples().len() + 1);
    let summary = tr.summary();
    assert_eq!(summary.zero_count, tr.zeros().len());
}

#[test]
fn escape_before_horizon_for_faster_growth() {
    let tr = run_tol(&cubic_blowup(), (0.0, 2.0, 3.0), 10.0, 1e-9);
    assert!(tr.terminal().is_escape());
    assert!(tr.terminal().time() < 1.0);
}

#[test]
fn single_precision_harmonic() {
    let eq = EquationSpec::new(
        ScalarField::constant("p0", 1.0f32),
        ScalarField::constant("q0", 0.0f32),
        ScalarField::constant("r0", 1.0f32),
        0.0,
    )
    .unwrap();
    let ic = InitialData::new(0.0f32, 1.0, 0.0).unwrap();
    let tr = integrate(&eq, &ic, &IntegrationOptions::with_horizon(10.0f32)).unwrap();
    assert_eq!(tr.zeros().len(), 3);
    assert!((tr.zeros()[0] - std::f32::consts::FRAC_PI_2).abs() < 1e-3);
}

