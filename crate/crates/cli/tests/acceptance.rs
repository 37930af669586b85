//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::f64::consts::{E, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rcert_core::apps::{
    check_t4_2, conditional_stability_delta, conditional_stability_experiment, ef_certify_t3_1, ef_certify_t3_3,
    ef_equation, ef_transform, kneser_solution, vdp_equation, vdp_experiment, EfParams, T42Options, VdpParams,
};
use rcert_core::cert::check_t3_6;
use rcert_core::classify::{classify, ClassifyPolicy, Kind};
use rcert_core::dynamics::{integrate, IntegrationOptions, Terminal, Trajectory};
use rcert_core::field::{BoundTriple, EquationSpec, Grid, InitialData, Region, ScalarField, TimeFunction};
use rcert_core::quad::{eval_f, eval_g, i_minus, i_plus, QuadOptions};
use rcert_core::riccati::{cauchy_residual, difference_residual, representation_residual, transform, RiccatiPath};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ef(rho: f64, sigma: f64, n: f64) -> EfParams<f64> {
    EfParams::absolute(rho, sigma, n).unwrap()
}

fn ic(t: f64, a: f64, b: f64) -> InitialData<f64> {
    InitialData::new(t, a, b).unwrap()
}

fn opts(horizon: f64, tol: f64) -> IntegrationOptions<f64> {
    let mut o = IntegrationOptions::with_horizon(horizon);
    o.rel_tol = tol;
    o.abs_tol = tol * 1e-2;
    o
}

fn linear(p: f64, q: f64, r: f64) -> EquationSpec<f64> {
    EquationSpec::new(
        ScalarField::constant("p0", p),
        ScalarField::constant("q0", q),
        ScalarField::constant("r0", r),
        0.0,
    )
    .unwrap()
}

fn quadrature_closed_forms() -> Check {
    let start = Instant::now();
    let q = QuadOptions::default();
    let k = |v: f64| TimeFunction::constant("k", v);
    let sq = TimeFunction::new("t^2", |t: f64| t * t);
    let e1 = 1.0 - (-1.0f64).exp();
    let flat = BoundTriple::constant(1.0, 0.0, 0.0);
    let cases: Vec<(&str, f64, f64)> = vec![
        ("i_plus length", ok(i_plus(&k(1.0), &k(0.0), 0.0, 2.0, &q))?, 2.0),
        ("i_plus t^2", ok(i_plus(&sq, &k(0.0), 1.0, 4.0, &q))?, 0.75),
        ("i_plus weighted", ok(i_plus(&k(1.0), &k(1.0), 0.0, 1.0, &q))?, e1),
        ("i_minus length", ok(i_minus(&k(0.0), &k(1.0), 0.0, 3.0, &q))?, 3.0),
        ("i_minus weighted", ok(i_minus(&k(1.0), &k(1.0), 0.0, 1.0, &q))?, e1),
        ("F length", ok(eval_f(&flat, 2.0, 3.0, 2.0, 1.0, &q))?, 2.0 * E),
        ("F restoring", ok(eval_f(&BoundTriple::constant(1.0, 0.0, -1.0), 0.0, 1.0, 1.0, 0.0, &q))?, 0.5f64.exp()),
        ("G unit", ok(eval_g(&flat, &k(1.0), 0.0, 2.0, 1.0, 0.0, &q))?, 2f64.exp()),
        (
            "G scaled",
            ok(eval_g(&BoundTriple::constant(2.0, 0.0, 0.0), &k(1.0), 0.0, 2.0, 3.0, 2.0, &q))?,
            3.0 * 3f64.exp(),
        ),
    ];
    let mut worst = 0.0f64;
    for (name, got, want) in &cases {
        let rel = (got - want).abs() / want.abs();
        ensure(rel <= 1e-8, format!("{name}: {got} vs {want}"))?;
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("{} cases, worst relative error {worst:.1e}, {elapsed:.2?}", cases.len()))
}

struct Residuals {
    paths: Vec<RiccatiPath<f64>>,
    pairs: Vec<(RiccatiPath<f64>, RiccatiPath<f64>)>,
}

fn riccati_fixtures(tol: f64) -> Result<Residuals, String> {
    let run = |eq: &EquationSpec<f64>, i: InitialData<f64>, h: f64| ok(integrate(eq, &i, &opts(h, tol)));
    let harmonic = linear(1.0, 0.0, 1.0);
    let damped = linear(1.0, 0.2, 1.0);
    let kp = ef(0.0, -6.0, 3.0);
    let ks = ok(kneser_solution(&kp))?;
    let keq = ok(ef_equation(&kp, 1.0))?;
    let cp = ef(4.0, 0.0, 3.0);
    let ceq = ok(ef_equation(&cp, 1.0))?;

    let h0 = run(&harmonic, ic(0.0, 1.0, 0.0), 1.0)?;
    let h1 = run(&harmonic, ic(0.0, 1.0, -0.5), 1.0)?;
    let d0 = run(&damped, ic(0.0, 1.0, 0.0), 1.0)?;
    let k0 = run(&keq, ic(1.0, ks.phi(1.0), ks.dphi(1.0)), 20.0)?;
    let k1 = run(&keq, ic(1.0, 1.0, 0.0), 20.0)?;
    let c0 = run(&ceq, ic(1.0, 0.5, 0.0), 50.0)?;

    let tf = |tr: &Trajectory<f64>, seg: (f64, f64)| ok(transform(tr, seg));
    let paths = vec![
        tf(&h0, (0.0, PI / 4.0))?,
        tf(&d0, (0.0, 1.0))?,
        tf(&k0, (1.0, 20.0))?,
        tf(&c0, (1.0, 50.0))?,
    ];
    let seg = (0.0, PI / 8.0);
    let pairs = vec![
        (tf(&h0, seg)?, tf(&h1, seg)?),
        (tf(&h0, seg)?, tf(&d0, seg)?),
        (tf(&k0, (1.0, 20.0))?, tf(&k1, (1.0, 20.0))?),
    ];
    Ok(Residuals { paths, pairs })
}

/// Largest residual of each identity over the fixture set.
fn residual_maxima(r: &Residuals, q: &QuadOptions<f64>) -> Result<[f64; 4], String> {
    let mut m = [0.0f64; 4];
    for p in &r.paths {
        m[0] = m[0].max(ok(representation_residual(p, q))?);
        m[1] = m[1].max(ok(cauchy_residual(p, q))?);
    }
    for (a, b) in &r.pairs {
        m[2] = m[2].max(ok(difference_residual(a, b, 0, q))?);
        m[3] = m[3].max(ok(difference_residual(a, b, 1, q))?);
    }
    Ok(m)
}

fn riccati_identities() -> Check {
    let q = QuadOptions::with_tol(1e-14, 1e-13);
    let coarse = residual_maxima(&riccati_fixtures(1e-6)?, &q)?;
    let fine = residual_maxima(&riccati_fixtures(1e-7)?, &q)?;
    let names = ["representation", "cauchy", "difference j=0", "difference j=1"];
    let mut lines = Vec::new();
    let mut good = true;
    for i in 0..4 {
        let ratio = coarse[i] / fine[i].max(f64::MIN_POSITIVE);
        good &= coarse[i] <= 1e-6 && ratio >= 10.0;
        lines.push(format!("{} {:.2e} -> {:.2e} ({ratio:.1}x)", names[i], coarse[i], fine[i]));
    }
    let detail = lines.join(", ");
    ensure(good, format!("need <= 1e-6 and >= 10x: {detail}"))?;
    Ok(detail)
}

fn t3_1_envelope() -> Check {
    let start = Instant::now();
    let p = ef(4.0, 0.0, 3.0);
    let (c, _) = ok(ef_certify_t3_1(&p, &ic(1.0, 0.5, 0.0), 50.0, &Grid::new(33, 33), &QuadOptions::default()))?;
    ensure(c.status.is_verified(), format!("status {:?}", c.status))?;
    let bound = c.uniform_bound.ok_or("no uniform bound")?;
    ensure((bound - 0.82436).abs() <= 1e-4, format!("bound {bound}"))?;
    let tr = ok(integrate(&ok(ef_equation(&p, 1.0))?, &ic(1.0, 0.5, 0.0), &IntegrationOptions::with_horizon(50.0)))?;
    ensure(matches!(tr.terminal(), Terminal::ReachedHorizon { .. }), "trajectory did not reach 50")?;
    let mut prev = 0.0f64;
    for s in tr.samples() {
        let a = s.phi.abs();
        ensure(a > 0.0, format!("phi vanishes at {}", s.t))?;
        ensure(a <= bound * (1.0 + 1e-6), format!("|phi({})| = {a} above bound", s.t))?;
        ensure(a >= prev * (1.0 - 1e-12), format!("|phi| decreases at {}", s.t))?;
        prev = a;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("bound {bound:.6}, max |phi| {prev:.6}, {elapsed:.2?}"))
}

fn kneser_majorant() -> Check {
    let p = ef(0.0, -6.0, 3.0);
    let ks = ok(kneser_solution(&p))?;
    // y = p0 phi' / phi at the initial point (1, 1, 0).
    let y0 = 0.0;
    ensure(y0 < ks.y(1.0), format!("y0 {y0} not below y_B(1) = {}", ks.y(1.0)))?;
    let (c, _) = ok(ef_certify_t3_3(&p, &ic(1.0, 1.0, 0.0), 50.0, 4.0, &Grid::new(33, 33)))?;
    ensure(c.status.is_verified(), format!("status {:?}", c.status))?;
    let tr = ok(integrate(&ok(ef_equation(&p, 1.0))?, &ic(1.0, 1.0, 0.0), &IntegrationOptions::with_horizon(50.0)))?;
    ensure(matches!(tr.terminal(), Terminal::ReachedHorizon { .. }), format!("terminal {:?}", tr.terminal()))?;
    let mut prev = 0.0f64;
    for s in tr.samples() {
        ensure(s.phi.abs() >= prev * (1.0 - 1e-12), format!("|phi| decreases at {}", s.t))?;
        prev = s.phi.abs();
    }
    Ok(format!("verified, y_B(1) = {}, phi(50) = {prev:.6}", ks.y(1.0)))
}

fn sharpness() -> Check {
    let p = ef(0.0, 0.0, 3.0);
    let sigma1 = ok(ef_transform(&p))?.sigma1;
    ensure(sigma1 == 0.0 && sigma1 >= -p.n - 1.0, format!("sigma1 {sigma1}"))?;
    let i = ic(1.0, 1.0, 1.0);
    ensure(i.phi0 * i.phi1 > 0.0, "need psi psi' > 0")?;
    let tr = ok(integrate(&ok(ef_equation(&p, 1.0))?, &i, &IntegrationOptions::with_horizon(10.0)))?;
    let t_esc = tr.terminal().escape_time().ok_or_else(|| format!("no escape: {:?}", tr.terminal()))?;
    ensure(t_esc < 10.0, format!("escape at {t_esc}"))?;
    let c = classify(&tr, &ClassifyPolicy::default());
    ensure(c.evidence.zero_count == 0, format!("{} sign changes", c.evidence.zero_count))?;
    ensure(c.evidence.monotone, "not monotone")?;
    ensure(c.kind != Kind::SingularOscillatorySecondKind, "labelled second kind")?;
    Ok(format!("escape at t = {t_esc:.6}, label {}", c.kind))
}

fn transform_equivalence() -> Check {
    let p = ef(2.0, 0.0, 3.0);
    let tr = ok(ef_transform(&p))?;
    ensure(tr.sigma1 == -4.0, format!("sigma1 = {}", tr.sigma1))?;
    let tight = |h: f64| opts(h, 1e-12);
    let phi0 = 0.5;
    let base = ok(integrate(&ok(ef_equation(&p, 1.0))?, &ic(1.0, phi0, 0.0), &tight(30.0)))?;
    let (s0, psi0, dpsi0) = tr.forward(1.0, phi0, 0.0);
    let s1 = tr.s_of_t(base.end());
    let target = ok(integrate(&ok(tr.target_equation(s0))?, &ic(s0, psi0, dpsi0), &tight(s1)))?;
    let t_end = base.end().min(tr.t_of_s(target.end()));
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let t = 1.0 + (t_end - 1.0) * i as f64 / 200.0;
        let s = tr.s_of_t(t);
        let phi_b = base.phi(t).ok_or("base off range")?;
        let psi = target.phi(s).ok_or("target off range")?;
        let (_, phi_t, _) = tr.inverse(s, psi, ok(target.dphi(s))?);
        worst = worst.max((phi_b - phi_t).abs() / phi_b.abs().max(1.0));
    }
    ensure(worst <= 1e-5, format!("discrepancy {worst:.2e}"))?;
    Ok(format!("sigma1 = -4, discrepancy {worst:.2e} on [1, {t_end:.1}]"))
}

fn kneser_residual() -> Check {
    let p = ef(0.0, -6.0, 3.0);
    let ks = ok(kneser_solution(&p))?;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let t = 1.0 + 0.5 * i as f64;
        worst = worst.max(ks.residual(&p, t));
    }
    ensure(worst <= 1e-12, format!("residual {worst:.2e}"))?;
    Ok(format!("max residual {worst:.2e} over 100 points"))
}

fn conditional_stability() -> Check {
    let p = ef(2.0, -2.0, 3.0);
    let d = ok(conditional_stability_delta(&p, 1.0, 1.0))?;
    let want = (-1.0f64).exp() / 4.0;
    ensure((d - want).abs() <= 1e-12, format!("delta {d} vs {want}"))?;
    let rep = ok(conditional_stability_experiment(&p, 1.0, 1.0, 20, 50.0))?;
    ensure(rep.cases.len() == 20, format!("{} cases", rep.cases.len()))?;
    let worst = rep.cases.iter().map(|c| c.sup).fold(0.0, f64::max);
    ensure(rep.cases.iter().all(|c| c.phi0.abs() < d), "initial value outside delta")?;
    ensure(rep.all_within && worst < 1.0, format!("sup {worst}"))?;
    Ok(format!("delta = {d:.15}, worst sup {worst:.6}"))
}

fn van_der_pol() -> Check {
    let start = Instant::now();
    let v = VdpParams::constant(1.0, 1.0, 1.0);
    let eq = ok(vdp_equation(&v, 0.0, 100.0))?;
    let reg = ok(Region::new((0.0, 100.0), (-10.0, 10.0)))?;
    let t36 = ok(check_t3_6(&eq, &reg, &Grid::new(33, 33)))?;
    ensure(t36.status.is_verified(), format!("t3_6 {:?}", t36.status))?;
    let t42 = ok(check_t4_2(&v, 0.0, &T42Options::new(0.0)))?;
    ensure(t42.status.is_verified(), format!("t4_2 {:?}", t42.status))?;
    ensure(!t42.heuristic.is_empty(), "t4_2 heuristic components not flagged")?;
    let runs = ok(vdp_experiment(&v, 0.0, 10, 5.0, 100.0, 7))?;
    ensure(runs.len() == 10, "expected 10 runs")?;
    for r in &runs {
        ensure(
            matches!(r.terminal, Terminal::ReachedHorizon { .. }),
            format!("ic ({}, {}) ended {:?}", r.phi0, r.dphi0, r.terminal),
        )?;
        ensure(r.zeros >= 10, format!("ic ({}, {}) has {} sign changes", r.phi0, r.dphi0, r.zeros))?;
    }
    let fewest = runs.iter().map(|r| r.zeros).min().unwrap_or(0);
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("t3_6 and t4_2 verified, fewest sign changes {fewest}, {elapsed:.2?}"))
}

fn fixtures() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn command_of(path: &Path) -> Result<Vec<String>, String> {
    let text = ok(std::fs::read_to_string(path))?;
    let v: serde_json::Value = ok(serde_json::from_str(&text))?;
    let cmd = v["command"].as_str().unwrap_or("classify");
    Ok(cmd.split_whitespace().map(str::to_owned).collect())
}

fn run_report(cfg: &Path, out: &Path) -> Result<Vec<u8>, String> {
    let status = ok(Command::new(env!("CARGO_BIN_EXE_rcert"))
        .args(command_of(cfg)?)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output())?;
    ensure(matches!(status.status.code(), Some(0 | 2)), format!("{}: {:?}", cfg.display(), status.status))?;
    ok(std::fs::read(out.join("report.json")))
}

fn determinism() -> Check {
    let tmp = ok(tempfile::tempdir())?;
    let all = fixtures();
    for (i, cfg) in all.iter().enumerate() {
        let a = run_report(cfg, &tmp.path().join(format!("{i}a")))?;
        let b = run_report(cfg, &tmp.path().join(format!("{i}b")))?;
        ensure(a == b, format!("{} differs between runs", cfg.display()))?;
    }
    Ok(format!("{} fixture reports byte-identical across two runs", all.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("quadrature closed forms", quadrature_closed_forms),
        ("riccati identities", riccati_identities),
        ("t3_1 envelope", t3_1_envelope),
        ("kneser majorant", kneser_majorant),
        ("monotone blow-up", sharpness),
        ("transform equivalence", transform_equivalence),
        ("kneser residual", kneser_residual),
        ("conditional stability", conditional_stability),
        ("van der pol", van_der_pol),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
