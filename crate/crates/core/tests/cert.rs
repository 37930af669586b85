mod common;

use common::{harmonic, linear, run};
use proptest::prelude::*;
use rcert_core::apps::{ef_bound_triple, ef_equation, EfParams};
use rcert_core::cert::{
    check_t3_1, check_t3_2, check_t3_3, check_t3_4, check_t3_5, check_t3_6, Certificate, ComparisonFamily, Conclusion,
    Status, T35Options, Theorem,
};
use rcert_core::dynamics::{integrate, IntegrationOptions, Terminal};
use rcert_core::field::{BoundTriple, EquationSpec, Grid, InitialData, Region, ScalarField, TimeFunction};
use rcert_core::quad::QuadOptions;

fn ic(t: f64, a: f64, b: f64) -> InitialData<f64> {
    InitialData::new(t, a, b).unwrap()
}

fn region(t: (f64, f64), w: (f64, f64)) -> Region<f64> {
    Region::new(t, w).unwrap()
}

fn grid() -> Grid {
    Grid::new(33, 33)
}

fn ef(rho: f64, sigma: f64, n: f64) -> EfParams<f64> {
    EfParams::absolute(rho, sigma, n).unwrap()
}

fn field(name: &str, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> ScalarField<f64> {
    ScalarField::new(name, f)
}

fn equation(p: ScalarField<f64>, q: ScalarField<f64>, r: ScalarField<f64>, t0: f64) -> EquationSpec<f64> {
    EquationSpec::new(p, q, r, t0).unwrap()
}

fn vdp() -> EquationSpec<f64> {
    equation(
        ScalarField::constant("p", 1.0),
        field("q", |_, w| w * w - 1.0),
        ScalarField::constant("r", 1.0),
        0.0,
    )
}

fn vdp_family(nu: f64) -> ComparisonFamily<f64> {
    ComparisonFamily::new(|_, _| 1.0, |e: f64, _| e * e - 1.0, move |_, _| nu)
}

fn witness_hypothesis(c: &Certificate<f64>) -> String {
    match &c.status {
        Status::Falsified { witness } => witness.hypothesis.clone(),
        s => panic!("expected falsified, got {s:?}"),
    }
}

#[test]
fn t3_1_emden_fowler_verified_with_monotone_envelope() {
    let p = ef(4.0, 0.0, 3.0);
    let eq = ef_equation(&p, 1.0).unwrap();
    let c = check_t3_1(&eq, &ic(1.0, 0.5, 0.0), &ef_bound_triple(&p), None, 50.0, &grid(), &QuadOptions::default())
        .unwrap();
    assert!(c.status.is_verified(), "{:?}", c.status);
    assert_eq!(c.conclusions, vec![Conclusion::GlobalMonotone]);
    assert_eq!(c.epsilon, Some(5e-4));
    let sup = c.uniform_bound.unwrap();
    // F(t) = 0.5 exp{1/6 - t^-2 / 2 + t^-3 / 3} increases to 0.5 e^{1/6}, below the closed form 0.5 e^{1/2}.
    let f = |t: f64| 0.5 * (1.0 / 6.0 - 0.5 * t.powi(-2) + t.powi(-3) / 3.0).exp();
    assert!((sup - f(50.0)).abs() < 1e-8, "{sup}");
    assert!(sup < 0.5 * 0.5f64.exp());
    for &(t, v) in &c.bound_curve {
        assert!((v - f(t)).abs() < 1e-8 * f(t), "t = {t}: {v} vs {}", f(t));
    }
    assert!((c.bound_at(7.0).unwrap().unwrap() - f(7.0)).abs() < 1e-8);
    assert_eq!(c.hypotheses.len(), 4);
}

#[test]
fn t3_1_trivial_equation_has_unit_bound() {
    let eq = linear(1.0, 0.0, 0.0).with_t0(1.0).unwrap();
    let b = BoundTriple::constant(1.0, 0.0, 0.0);
    let c = check_t3_1(&eq, &ic(1.0, 1.0, 0.0), &b, None, 10.0, &grid(), &QuadOptions::default()).unwrap();
    assert!(c.status.is_verified());
    for &(_, v) in &c.bound_curve {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn t3_1_precondition_and_range_checks() {
    let p = ef(4.0, 0.0, 3.0);
    let eq = ef_equation(&p, 1.0).unwrap();
    let b = ef_bound_triple(&p);
    let q = QuadOptions::default();
    let c = check_t3_1(&eq, &ic(1.0, 1.0, -0.5), &b, None, 50.0, &grid(), &q).unwrap();
    assert!(matches!(&c.status, Status::Inconclusive { reason } if reason.contains("precondition")), "{:?}", c.status);
    assert!(c.conclusions.is_empty());
    let c = check_t3_1(&eq, &ic(1.0, 0.0, 1.0), &b, None, 50.0, &grid(), &q).unwrap();
    assert_eq!(c.status.label(), "inconclusive");
    // With phi1 / phi0 > 0 the envelope reaches |w| > 1 where R = -1 > r0.
    let c = check_t3_1(&eq, &ic(1.0, 1.2, 0.0), &b, None, 50.0, &grid(), &q).unwrap();
    assert_eq!(witness_hypothesis(&c), "R(t) <= r0(t, w)");
    // A huge c2 overflows the envelope.
    let lin = linear(1.0, 0.0, 0.0).with_t0(1.0).unwrap();
    let c = check_t3_1(&lin, &ic(1.0, 1.0, 1e3), &BoundTriple::constant(1.0, 0.0, 0.0), None, 1e3, &grid(), &q)
        .unwrap();
    assert!(matches!(&c.status, Status::Inconclusive { reason } if reason.starts_with("range")), "{:?}", c.status);
}

#[test]
fn t3_1_derivative_conclusion_when_phi1_nonzero() {
    let p = ef(4.0, 0.0, 3.0);
    let eq = ef_equation(&p, 1.0).unwrap();
    let c = check_t3_1(&eq, &ic(1.0, 0.3, 0.1), &ef_bound_triple(&p), None, 20.0, &grid(), &QuadOptions::default())
        .unwrap();
    assert!(c.status.is_verified(), "{:?}", c.status);
    assert_eq!(c.conclusions, vec![Conclusion::GlobalMonotone, Conclusion::DerivativeNonvanishing]);
}

#[test]
fn t3_2_examples() {
    let q = QuadOptions::default();
    let eq = linear(1.0, 1.0, 0.0).with_t0(1.0).unwrap();
    let b = BoundTriple::constant(1.0, 0.0, 0.0);
    let zero = TimeFunction::constant("Q~", 0.0);
    let c = check_t3_2(&eq, &ic(1.0, 1.0, 0.0), &b, &zero, None, 10.0, &grid(), &q).unwrap();
    assert!(c.status.is_verified(), "{:?}", c.status);
    for &(_, v) in &c.bound_curve {
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    let eq = equation(
        ScalarField::constant("p", 1.0),
        field("q", |t, _| 1.0 + t),
        field("r", |t: f64, _| -(-t).exp()),
        1.0,
    );
    let b = BoundTriple::new(
        TimeFunction::constant("P", 1.0),
        TimeFunction::constant("Q", 0.0),
        TimeFunction::new("R", |t: f64| -(-t).exp()),
    );
    let qt = TimeFunction::new("Q~", |t: f64| (-t).exp());
    let c = check_t3_2(&eq, &ic(1.0, 1.0, 0.0), &b, &qt, None, 10.0, &grid(), &q).unwrap();
    assert!(c.status.is_verified(), "{:?}", c.status);

    let eq = linear(1.0, 1.0, 0.5).with_t0(1.0).unwrap();
    let c = check_t3_2(&eq, &ic(1.0, 1.0, 0.0), &BoundTriple::constant(1.0, 0.0, 0.0), &zero, None, 10.0, &grid(), &q)
        .unwrap();
    assert!(c.status.is_falsified());

    let eq = linear(1.0, 0.0, 0.0).with_t0(1.0).unwrap();
    let c = check_t3_2(&eq, &ic(1.0, 1.0, 0.0), &BoundTriple::constant(1.0, 0.0, 0.0), &zero, None, 10.0, &grid(), &q)
        .unwrap();
    assert!(matches!(&c.status, Status::Inconclusive { reason } if reason.contains("ratio undefined")), "{:?}", c.status);
}

fn kneser_setup() -> (EquationSpec<f64>, rcert_core::dynamics::Trajectory<f64>) {
    let eq = ef_equation(&ef(0.0, -6.0, 3.0), 1.0).unwrap();
    let s2 = 2f64.sqrt();
    let major = integrate(&eq, &ic(1.0, s2, 2.0 * s2), &IntegrationOptions::with_horizon(50.0)).unwrap();
    (eq, major)
}

#[test]
fn t3_3_kneser_majorant() {
    let (eq, major) = kneser_setup();
    assert!(matches!(major.terminal(), Terminal::ReachedHorizon { .. }));
    let reg = region((1.0, 50.0), (-4.0, 4.0));
    let c = check_t3_3(&eq, &eq, &major, &ic(1.0, 1.0, 0.0), &reg, &grid()).unwrap();
    assert!(c.status.is_verified(), "{:?}", c.status);
    assert_eq!(c.conclusions, vec![Conclusion::GlobalMonotone]);

    // Positive r0 somewhere.
    let bad = equation(
        ScalarField::constant("p", 1.0),
        ScalarField::constant("q", 0.0),
        field("r", |t: f64, w: f64| if t > 10.0 { 0.1 } else { -t.powi(-6) * w * w }),
        1.0,
    );
    let c = check_t3_3(&bad, &eq, &major, &ic(1.0, 1.0, 0.0), &reg, &grid()).unwrap();
    assert!(c.status.is_falsified(), "{:?}", c.status);

    // p0 != p1.
    let other_p = equation(
        ScalarField::constant("p", 1.5),
        ScalarField::constant("q", 0.0),
        field("r", |t: f64, w: f64| -t.powi(-6) * w * w),
        1.0,
    );
    let c = check_t3_3(&other_p, &eq, &major, &ic(1.0, 1.0, 0.0), &reg, &grid()).unwrap();
    assert!(c.status.is_falsified(), "{:?}", c.status);

    // B1 fails when the start is steeper than the majorant.
    let c = check_t3_3(&eq, &eq, &major, &ic(1.0, 1.0, 3.0), &reg, &grid()).unwrap();
    assert_eq!(c.status.label(), "inconclusive");

    // Majorant must start at the initial time.
    assert!(check_t3_3(&eq, &eq, &major, &ic(2.0, 1.0, 0.0), &reg, &grid()).is_err());
}

#[test]
fn t3_3_majorant_with_zero_is_inconclusive() {
    let eq = harmonic();
    let major = run(&eq, (0.0, 1.0, 0.0), 10.0);
    let c = check_t3_3(&eq, &eq, &major, &ic(0.0, 1.0, 0.0), &region((0.0, 10.0), (-1.0, 1.0)), &grid()).unwrap();
    assert!(matches!(&c.status, Status::Inconclusive { reason } if reason.contains("vanishes")), "{:?}", c.status);
}

#[test]
fn t3_4_examples() {
    let reg = region((0.0, 10.0), (-3.0, 3.0));
    let b = BoundTriple::constant(1.0, 0.0, 0.0);
    let c = check_t3_4(&harmonic(), &b, &reg, &grid()).unwrap();
    assert!(c.status.is_verified());
    assert_eq!(c.conclusions, vec![Conclusion::SingularSecondKindIfNonextendable]);
    let sq = equation(
        ScalarField::constant("p", 1.0),
        ScalarField::constant("q", 0.0),
        field("r", |_, w| w * w),
        0.0,
    );
    assert!(check_t3_4(&sq, &b, &reg, &grid()).unwrap().status.is_verified());
    let c = check_t3_4(&linear(1.0, 0.0, -1.0), &b, &reg, &grid()).unwrap();
    assert_eq!(witness_hypothesis(&c), "r0(t, w) >= 0");
}

#[test]
fn t3_5_van_der_pol_verified_with_heuristics_flagged() {
    let reg = region((0.0, 20.0), (-10.0, 10.0));
    let b = BoundTriple::constant(1.0, 0.0, 0.0);
    let opts = T35Options::new(1.0, 1.0);
    let c = check_t3_5(&vdp(), &b, &vdp_family(1.0), &reg, &grid(), &opts).unwrap();
    assert!(c.status.is_verified(), "{:?}", c.status);
    assert_eq!(c.conclusions, vec![Conclusion::OscOrSingularFirstKind]);
    assert_eq!(c.heuristic.len(), 3);
    assert_eq!(c.oscillation.len(), 4);
    assert!(c.oscillation.iter().all(|o| o.oscillates && o.zeros >= 5));
    assert_eq!(c.probes.len(), 5);
}

#[test]
fn t3_5_falsifications() {
    let reg = region((0.0, 20.0), (-10.0, 10.0));
    let b = BoundTriple::constant(1.0, 0.0, 0.0);
    let opts = T35Options::new(1.0, 1.0);
    let neg = equation(
        ScalarField::constant("p", 1.0),
        field("q", |_, w| w * w - 1.0),
        ScalarField::constant("r", -1.0),
        0.0,
    );
    let c = check_t3_5(&neg, &b, &vdp_family(1.0), &reg, &grid(), &opts).unwrap();
    assert_eq!(witness_hypothesis(&c), "r0(t, w) >= 0");

    let nu0 = equation(
        ScalarField::constant("p", 1.0),
        field("q", |_, w| w * w - 1.0),
        ScalarField::constant("r", 0.0),
        0.0,
    );
    let c = check_t3_5(&nu0, &b, &vdp_family(0.0), &reg, &grid(), &opts).unwrap();
    assert_eq!(witness_hypothesis(&c), "int I-_{q_e, r_e} / P diverges");
}

#[test]
fn t3_6_examples() {
    let reg = region((0.0, 20.0), (-5.0, 5.0));
    let c = check_t3_6(&vdp(), &reg, &grid()).unwrap();
    assert!(c.status.is_verified());
    assert_eq!(c.conclusions, vec![Conclusion::GlobalForAllIc]);
    let rt = equation(
        ScalarField::constant("p", 1.0),
        ScalarField::constant("q", 0.0),
        field("r", |t, _| t),
        0.0,
    );
    assert!(check_t3_6(&rt, &reg, &grid()).unwrap().status.is_verified());
    let qneg = equation(
        ScalarField::constant("p", 1.0),
        field("q", |_, w| -w * w),
        ScalarField::constant("r", 1.0),
        0.0,
    );
    assert_eq!(witness_hypothesis(&check_t3_6(&qneg, &reg, &grid()).unwrap()), "q0 / p0 even monotone in w");
}

#[test]
fn t3_6_verified_equations_do_not_escape() {
    let eq = vdp();
    let c = check_t3_6(&eq, &region((0.0, 100.0), (-5.0, 5.0)), &grid()).unwrap();
    assert!(c.status.is_verified());
    for i in 0..5 {
        for j in 0..5 {
            let a = -4.0 + 2.0 * i as f64;
            let b = -4.0 + 2.0 * j as f64;
            let tr = run(&eq, (0.0, a, b), 100.0);
            assert!(matches!(tr.terminal(), Terminal::ReachedHorizon { .. }), "ic ({a}, {b}): {:?}", tr.terminal());
        }
    }
}

#[test]
fn t3_1_envelope_enforced_on_trajectories() {
    let p = ef(4.0, 0.0, 3.0);
    let eq = ef_equation(&p, 1.0).unwrap();
    for &(a, b) in &[(0.5, 0.0), (0.3, 0.05), (-0.4, -0.02), (0.2, 0.0)] {
        let c = check_t3_1(&eq, &ic(1.0, a, b), &ef_bound_triple(&p), None, 50.0, &grid(), &QuadOptions::default())
            .unwrap();
        assert!(c.status.is_verified(), "({a}, {b}): {:?}", c.status);
        let tr = run(&eq, (1.0, a, b), 50.0);
        let mut prev = 0.0;
        for t in tr.probe_times(4) {
            let phi = tr.phi(t).unwrap().abs();
            let bound = c.bound_at(t).unwrap().unwrap();
            assert!(phi <= bound * (1.0 + 1e-6), "t = {t}: {phi} > {bound}");
            assert!(phi >= prev * (1.0 - 1e-9));
            prev = phi;
        }
    }
}

#[test]
fn aggregate_prefers_falsified() {
    let reg = region((0.0, 1.0), (-1.0, 1.0));
    let ok = check_t3_6(&harmonic(), &reg, &grid()).unwrap();
    let bad = check_t3_6(&linear(1.0, 0.0, -1.0), &reg, &grid()).unwrap();
    let agg = Certificate::aggregate(Theorem::T4_2, vec![ok.clone(), bad], vec![Conclusion::GlobalForAllIc]);
    assert!(agg.status.is_falsified());
    assert!(agg.conclusions.is_empty());
    let agg = Certificate::aggregate(Theorem::T4_2, vec![ok.clone(), ok], vec![Conclusion::GlobalForAllIc]);
    assert!(agg.status.is_verified());
    assert_eq!(agg.conclusions, vec![Conclusion::GlobalForAllIc]);
    assert_eq!(agg.theorem.id(), "t4_2");
}

#[test]
fn certificate_serializes_with_witness() {
    let c = check_t3_6(&linear(1.0, 0.0, -1.0), &region((0.0, 1.0), (-1.0, 1.0)), &grid()).unwrap();
    let v = serde_json::to_value(&c).unwrap();
    assert_eq!(v["theorem"], "t3_6");
    assert_eq!(v["status"]["kind"], "falsified");
    assert_eq!(v["status"]["witness"]["t"], 0.0);
    assert_eq!(v["region"]["grid"]["nt"], 33);
}

fn shifted(shift: f64) -> EquationSpec<f64> {
    // r0 >= 0 only for t <= shift; -r0 even monotone only away from a notch.
    equation(
        ScalarField::constant("p", 1.0),
        field("q", |_, w| w * w),
        field("r", move |t, w: f64| shift - t + 0.01 * (w.abs() - 0.37).abs()),
        0.0,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verified_never_turns_inconclusive_under_refinement(shift in 0.5f64..12.0, n in 5usize..17) {
        let reg = region((0.0, 10.0), (-2.0, 2.0));
        let eq = shifted(shift);
        let g = Grid::new(n, n);
        let coarse = check_t3_6(&eq, &reg, &g).unwrap();
        if coarse.status.is_verified() {
            let mut g2 = g;
            for _ in 0..2 {
                g2 = g2.refined();
                let fine = check_t3_6(&eq, &reg, &g2).unwrap();
                prop_assert!(fine.status.is_verified() || fine.status.is_falsified());
            }
        }
        if coarse.status.is_falsified() {
            let fine = check_t3_6(&eq, &reg, &g.refined()).unwrap();
            prop_assert!(fine.status.is_falsified());
        }
    }

    #[test]
    fn t3_4_refinement_keeps_falsified(shift in 0.5f64..12.0, n in 3usize..9) {
        let reg = region((0.0, 10.0), (-2.0, 2.0));
        let b = BoundTriple::constant(1.0, 0.0, 0.0);
        let g = Grid::new(n, n);
        let coarse = check_t3_4(&shifted(shift), &b, &reg, &g).unwrap();
        let fine = check_t3_4(&shifted(shift), &b, &reg, &g.refined()).unwrap();
        prop_assert!(fine.status.is_verified() || fine.status.is_falsified());
        if coarse.status.is_falsified() {
            prop_assert!(fine.status.is_falsified());
        }
    }
}
