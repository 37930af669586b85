use proptest::prelude::*;
use rcert_core::field::{
    lipschitz_estimate, uniqueness_interval, verify_structural_tags, EquationSpec, Grid, InitialData, LipschitzEstimate,
    LipschitzFlag, Region, ScalarField, Tag, TagOutcome,
};
use rcert_core::Error;

fn example_1_2() -> EquationSpec<f64> {
    EquationSpec::new(
        ScalarField::new("p0", |t: f64, u: f64| 1.0 + t * t + u.powi(4)),
        ScalarField::new("q0", |t: f64, u: f64| t + u.powi(3)),
        ScalarField::new("r0", |t: f64, u: f64| t.powi(3) - u),
        -1.0,
    )
    .unwrap()
}

#[test]
fn even_square_is_even_monotone() {
    let f = ScalarField::new("w2", |_, w: f64| w * w).with_tag(Tag::MonotoneInWEven);
    let rep = verify_structural_tags(&f, &Region::new((0.0, 1.0), (-2.0, 2.0)).unwrap(), &Grid::default()).unwrap();
    assert!(rep.all_hold());
}

#[test]
fn emden_fowler_r0_is_nonpositive() {
    let f = ScalarField::new("r0", |t: f64, w: f64| -t.powf(0.0) * w.abs().powi(2)).with_tag(Tag::Nonpositive);
    let rep = verify_structural_tags(&f, &Region::new((1.0, 10.0), (-5.0, 5.0)).unwrap(), &Grid::default()).unwrap();
    assert_eq!(rep.outcome(Tag::Nonpositive), Some(TagOutcome::Holds));
}

#[test]
fn cubic_minus_w_is_not_nonnegative() {
    let f = ScalarField::new("r0", |t: f64, w: f64| t.powi(3) - w).with_tag(Tag::Nonnegative);
    let region = Region::new((0.0, 1.0), (-1.0, 2.0)).unwrap();
    let rep = verify_structural_tags(&f, &region, &Grid::new(2, 4)).unwrap();
    assert_eq!(rep.outcome(Tag::Nonnegative), Some(TagOutcome::Falsified { t: 0.0, w: 1.0, value: -1.0 }));
    let rep = verify_structural_tags(&f, &region, &Grid::default()).unwrap();
    assert!(matches!(rep.outcome(Tag::Nonnegative), Some(TagOutcome::Falsified { t, .. }) if t == 0.0));
}

#[test]
fn nonfinite_field_value_is_an_error() {
    let f = ScalarField::new("inv", |_, w: f64| 1.0 / w).with_tag(Tag::Positive);
    let region = Region::new((0.0, 1.0), (0.0, 1.0)).unwrap();
    assert!(matches!(verify_structural_tags(&f, &region, &Grid::default()), Err(Error::NonFinite { .. })));
}

#[test]
fn grid_needs_two_points() {
    let f = ScalarField::constant("c", 1.0).with_tag(Tag::Positive);
    let region = Region::new((0.0, 1.0), (0.0, 1.0)).unwrap();
    assert!(verify_structural_tags(&f, &region, &Grid::new(1, 5)).is_err());
}

#[test]
fn lipschitz_identity_slope() {
    let f = ScalarField::new("id", |_, w: f64| w);
    let est = lipschitz_estimate(&f, &Region::new((0.0, 3.0), (-7.0, 4.0)).unwrap(), &Grid::default()).unwrap();
    let LipschitzEstimate::Finite { constant } = est else { panic!("{est:?}") };
    assert!((constant - 1.0).abs() < 1e-12);
}

#[test]
fn lipschitz_example_1_2_r0() {
    let f = ScalarField::new("r0", |t: f64, w: f64| t.powi(3) - w);
    let est = lipschitz_estimate(&f, &Region::new((-1.0, 1.0), (-1.0, 1.0)).unwrap(), &Grid::default()).unwrap();
    let LipschitzEstimate::Finite { constant } = est else { panic!("{est:?}") };
    assert!((constant - 1.0).abs() < 1e-9);
}

#[test]
fn lipschitz_example_1_1() {
    let (sigma, nu) = (0.5, -0.5);
    // f1 = v / |u|^sigma at v = 1 and f2 = -|u|^nu u, both singular at u = 0.
    let f1 = ScalarField::new("f1", move |_, u: f64| u.abs().powf(-sigma)).with_singular_w(0.0);
    let f2 = ScalarField::new("f2", move |_, u: f64| -u.abs().powf(nu) * u).with_singular_w(0.0);
    let near = Region::new((0.0, 1.0), (0.5, 1.5)).unwrap();
    let wide = Region::new((0.0, 1.0), (-1.0, 3.0)).unwrap();
    for f in [&f1, &f2] {
        let e = lipschitz_estimate(f, &near, &Grid::default()).unwrap();
        let LipschitzEstimate::Finite { constant } = e else { panic!("{e:?}") };
        assert!(constant > 0.0 && constant < 2.0);
        assert_eq!(
            lipschitz_estimate(f, &wide, &Grid::default()).unwrap(),
            LipschitzEstimate::Unbounded { reason: LipschitzFlag::DeclaredSingularity }
        );
    }
}

#[test]
fn lipschitz_growth_without_declaration() {
    let f = ScalarField::new("sqrt", |_, w: f64| w.abs().sqrt());
    let e = lipschitz_estimate(&f, &Region::new((0.0, 1.0), (-1.0, 1.0)).unwrap(), &Grid::new(3, 33)).unwrap();
    assert_eq!(e, LipschitzEstimate::Unbounded { reason: LipschitzFlag::GrowsUnderRefinement });
}

#[test]
fn uniqueness_zero_field_caps_at_delta() {
    let eq = EquationSpec::new(
        ScalarField::constant("p0", 1.0),
        ScalarField::constant("q0", 0.0),
        ScalarField::constant("r0", 0.0),
        0.0,
    )
    .unwrap();
    // f2 vanishes and f1 = v, so M0 = N and sqrt(M^2 + N^2) / M0 exceeds delta.
    let ic = InitialData::new(0.0f64, 1.0, 0.0).unwrap();
    let u = uniqueness_interval(&eq, &ic, 1.0, 1.0, 1.0, &Grid::new(9, 9)).unwrap();
    assert!((u.m0 - 1.0).abs() < 1e-12);
    assert_eq!(u.t2, 1.0);
}

#[test]
fn uniqueness_example_1_2_dense_oracle() {
    let eq = example_1_2();
    let ic = InitialData::new(0.0, 0.0, 0.0).unwrap();
    let grid = Grid::new(17, 17);
    let u = uniqueness_interval(&eq, &ic, 1.0, 1.0, 1.0, &grid).unwrap();

    let n = 161;
    let pts = |k: usize| -1.0 + 2.0 * k as f64 / (n - 1) as f64;
    let mut m0 = 0.0f64;
    for i in 0..n {
        let t = pts(i);
        for j in 0..n {
            let x = pts(j);
            let (p, q, r) = (1.0 + t * t + x.powi(4), t + x.powi(3), t.powi(3) - x);
            for k in 0..n {
                let v = pts(k);
                m0 = m0.max((v / p).hypot(-r * x - q / p * v));
            }
        }
    }
    let t2 = 1f64.min(2f64.sqrt() / m0);
    assert!(u.m0 <= m0 * (1.0 + 1e-12));
    assert!((u.t2 - t2).abs() / t2 <= 0.01, "{} vs {}", u.t2, t2);
}

#[test]
fn uniqueness_emden_fowler() {
    let eq = EquationSpec::new(
        ScalarField::constant("p0", 1.0),
        ScalarField::constant("q0", 0.0),
        ScalarField::new("r0", |_, w: f64| w.abs().powi(2)),
        0.0,
    )
    .unwrap();
    let ic = InitialData::new(1.0, 1.0, 0.0).unwrap();
    let u = uniqueness_interval(&eq, &ic, 1.0, 1.0, 1.0, &Grid::default()).unwrap();
    assert!((u.m0 - 65f64.sqrt()).abs() < 1e-12);
    assert!((u.t2 - 2f64.sqrt() / 65f64.sqrt()).abs() < 1e-12);
    let arg_v: f64 = u.argmax.2;
    assert!((u.t2 - 0.1754).abs() < 1e-4);
    assert_eq!((u.argmax.1, arg_v.abs()), (2.0, 1.0));
}

#[test]
fn uniqueness_rejects_p0_zero() {
    let eq = EquationSpec::new(
        ScalarField::new("p0", |_, w: f64| w * w),
        ScalarField::constant("q0", 0.0),
        ScalarField::constant("r0", 0.0),
        0.0,
    )
    .unwrap();
    let ic = InitialData::new(0.0, 0.5, 0.0).unwrap();
    assert!(matches!(
        uniqueness_interval(&eq, &ic, 1.0, 1.0, 1.0, &Grid::new(5, 5)),
        Err(Error::Domain(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn falsified_tags_stay_falsified(c in -0.9f64..0.9, nt in 2usize..12, nw in 2usize..12) {
        // t^3 - w - c is negative at t = 0 whenever w > -c.
        let f = ScalarField::new("r0", move |t: f64, w: f64| t.powi(3) - w - c).with_tag(Tag::Nonnegative);
        let region = Region::new((0.0, 1.0), (-1.0, 2.0)).unwrap();
        let mut grid = Grid::new(nt, nw);
        let first = verify_structural_tags(&f, &region, &grid).unwrap();
        prop_assume!(!first.all_hold());
        for _ in 0..3 {
            grid = grid.refined();
            prop_assert!(!verify_structural_tags(&f, &region, &grid).unwrap().all_hold());
        }
    }

    #[test]
    fn enlarged_box_dominates(d in 0.1f64..1.0, m in 0.1f64..1.0, n in 0.1f64..1.0) {
        // Doubling the box with 2k - 1 points keeps every original sample.
        let eq = example_1_2().with_t0(-10.0).unwrap();
        let ic = InitialData::new(0.0, 0.2, 0.1).unwrap();
        let small = uniqueness_interval(&eq, &ic, d, m, n, &Grid::new(9, 9)).unwrap();
        let big = uniqueness_interval(&eq, &ic, 2.0 * d, 2.0 * m, 2.0 * n, &Grid::new(17, 17)).unwrap();
        prop_assert!(big.m0 >= small.m0);
        prop_assert!(small.t2 <= d && big.t2 <= 2.0 * d);
    }
}
