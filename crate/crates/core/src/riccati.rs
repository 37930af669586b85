//! Riccati transform `y = p0 phi' / phi = psi / phi` along nonvanishing trajectory
//! segments, and residuals of the integral identities it satisfies.

use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{solve_scalar, Dense, StepControl, Terminal, Trajectory};
use crate::error::{Error, Result};
use crate::field::BoundTriple;
use crate::quad::{Antiderivative, DecayingIntegral, QuadOptions};
use crate::scalar::{c, Scalar};

/// `y(t)` on a segment `[a, b]` of a trajectory where `phi` does not vanish.
#[derive(Clone, Debug)]
pub struct RiccatiPath<S> {
    base: Trajectory<S>,
    a: S,
    b: S,
    mesh: Vec<S>,
    offset: S,
}

/// Probes per integrator step used to confirm that `phi` stays away from zero.
const SEGMENT_PROBES: usize = 8;

pub fn transform<S: Scalar>(traj: &Trajectory<S>, segment: (S, S)) -> Result<RiccatiPath<S>> {
    let (a, b) = segment;
    if !(a < b && a >= traj.start() && b <= traj.end()) {
        return Err(Error::InvalidInput(format!(
            "segment [{a}, {b}] is not inside the trajectory span [{}, {}]",
            traj.start(),
            traj.end()
        )));
    }
    if let Some(&z) = traj.zeros().iter().find(|&&z| z >= a && z <= b) {
        return Err(Error::ZeroInSegment(z.as_f64()));
    }
    let tol = traj.zero_tol();
    for t in traj.probe_times(SEGMENT_PROBES) {
        if t >= a && t <= b {
            let phi = traj.phi(t).unwrap();
            if phi.abs() <= tol || !(traj.psi(t).unwrap() / phi).is_finite() {
                return Err(Error::ZeroInSegment(t.as_f64()));
            }
        }
    }
    for t in [a, b] {
        if traj.phi(t).unwrap().abs() <= tol {
            return Err(Error::ZeroInSegment(t.as_f64()));
        }
    }
    let mut mesh = vec![a];
    mesh.extend(traj.mesh().into_iter().filter(|&t| t > a && t < b));
    mesh.push(b);
    Ok(RiccatiPath { base: traj.clone(), a, b, mesh, offset: S::zero() })
}

/// Maximal inter-zero intervals, each end at a zero pulled in by one mesh cell.
pub fn riccati_segments<S: Scalar>(traj: &Trajectory<S>) -> Vec<(S, S)> {
    let mesh = traj.mesh();
    let mut bounds = vec![(traj.start(), false)];
    bounds.extend(traj.zeros().iter().map(|&z| (z, true)));
    bounds.push((traj.end(), false));
    let mut out = Vec::new();
    for w in bounds.windows(2) {
        let ((l, lz), (r, rz)) = (w[0], w[1]);
        let l = if lz {
            let k = mesh.partition_point(|&t| t <= l);
            match mesh.get(k + 1) {
                Some(&t) => t,
                None => continue,
            }
        } else {
            l
        };
        let r = if rz {
            let k = mesh.partition_point(|&t| t < r);
            if k < 2 {
                continue;
            }
            mesh[k - 2]
        } else {
            r
        };
        if l < r && transform(traj, (l, r)).is_ok() {
            out.push((l, r));
        }
    }
    out
}

impl<S: Scalar> RiccatiPath<S> {
    pub fn base(&self) -> &Trajectory<S> {
        &self.base
    }

    pub fn segment(&self) -> (S, S) {
        (self.a, self.b)
    }

    pub fn mesh(&self) -> &[S] {
        &self.mesh
    }

    /// Copy of the path with `y` shifted by `delta`; used to test that the oracles catch corruption.
    pub fn perturbed(&self, delta: S) -> Self {
        Self { offset: self.offset + delta, ..self.clone() }
    }

    fn state(&self, t: S) -> Result<[S; 2]> {
        self.base
            .eval(t)
            .ok_or_else(|| Error::InvalidInput(format!("t = {t} outside the path")))
    }

    pub fn phi(&self, t: S) -> Result<S> {
        Ok(self.state(t)?[0])
    }

    pub fn y(&self, t: S) -> Result<S> {
        let [phi, psi] = self.state(t)?;
        Ok(psi / phi + self.offset)
    }

    /// `(p0, q0, r0)` along the path.
    fn coefficients(&self, t: S) -> Result<(S, S, S, S)> {
        let phi = self.phi(t)?;
        let eq = self.base.equation();
        Ok((
            phi,
            eq.p_checked(t, phi)?,
            eq.q0().eval(t, phi)?,
            eq.r0().eval(t, phi)?,
        ))
    }
}

fn normalize<S: Scalar>(worst: S, scale: S) -> S {
    if scale > S::zero() {
        worst / scale
    } else {
        worst
    }
}

/// Max over the mesh of `|phi(t) - phi(a) exp(int_a^t y / p0)|`, relative to `max |phi|`.
pub fn representation_residual<S: Scalar>(path: &RiccatiPath<S>, opts: &QuadOptions<S>) -> Result<S> {
    let p = path.clone();
    let anti = Antiderivative::build(
        move |t: S| {
            let (_, p0, _, _) = p.coefficients(t)?;
            Ok(p.y(t)? / p0)
        },
        path.a,
        path.b,
        &path.mesh,
        opts,
    )?;
    let phi_a = path.phi(path.a)?;
    let (mut worst, mut scale) = (S::zero(), S::zero());
    for &t in &path.mesh {
        let phi = path.phi(t)?;
        worst = worst.max((phi - phi_a * anti.value_at(t)?.exp()).abs());
        scale = scale.max(phi.abs());
    }
    Ok(normalize(worst, scale))
}

/// Max deviation of `y(t)` from `y(a) e^{-V(t)} - I-_{v, r0}(a; t)` with `v = (y + q0) / p0`.
pub fn cauchy_residual<S: Scalar>(path: &RiccatiPath<S>, opts: &QuadOptions<S>) -> Result<S> {
    let p1 = path.clone();
    let p2 = path.clone();
    let kernel = move |t: S| {
        let (_, p0, q0, _) = p1.coefficients(t)?;
        Ok((p1.y(t)? + q0) / p0)
    };
    let forcing = move |t: S| Ok(p2.coefficients(t)?.3);
    let rhs = decaying_solution(kernel, forcing, path.a, path.b, &path.mesh, path.y(path.a)?, opts)?;
    let (mut worst, mut scale) = (S::zero(), S::zero());
    for &t in &path.mesh {
        let y = path.y(t)?;
        worst = worst.max((y - rhs(t)?).abs());
        scale = scale.max(y.abs());
    }
    Ok(normalize(worst, scale))
}

/// Max deviation of `y1 - y0` from the right side of the difference identity,
/// with kernel coefficients taken from equation `1 - j` and the bracket evaluated at `y_j`.
pub fn difference_residual<S: Scalar>(
    path0: &RiccatiPath<S>,
    path1: &RiccatiPath<S>,
    j: usize,
    opts: &QuadOptions<S>,
) -> Result<S> {
    if j > 1 {
        return Err(Error::InvalidInput(format!("j must be 0 or 1, got {j}")));
    }
    let (a0, b0) = path0.segment();
    let (a1, b1) = path1.segment();
    let scale = S::one().max(b0.abs()).max(b1.abs());
    let close = |x: S, y: S| (x - y).abs() <= c::<S>(1e-12) * scale;
    if !(close(a0, a1) && close(b0, b1)) {
        return Err(Error::SegmentMismatch {
            a0: a0.as_f64(),
            b0: b0.as_f64(),
            a1: a1.as_f64(),
            b1: b1.as_f64(),
        });
    }
    let (a, b) = (a0.max(a1), b0.min(b1));
    let mut mesh: Vec<S> = path0
        .mesh()
        .iter()
        .chain(path1.mesh())
        .copied()
        .filter(|&t| t >= a && t <= b)
        .collect();
    mesh.sort_by(|x, y| x.partial_cmp(y).unwrap());
    mesh.dedup();

    let (k0, k1) = (path0.clone(), path1.clone());
    let kernel = move |t: S| {
        let (y0, y1) = (k0.y(t)?, k1.y(t)?);
        let (_, p, q, _) = if j == 0 { k1.coefficients(t)? } else { k0.coefficients(t)? };
        Ok((y0 + y1 + q) / p)
    };
    let (f0, f1) = (path0.clone(), path1.clone());
    let bracket = move |t: S| {
        let (_, p0, q0, r0) = f0.coefficients(t)?;
        let (_, p1, q1, r1) = f1.coefficients(t)?;
        let yj = if j == 0 { f0.y(t)? } else { f1.y(t)? };
        Ok((p1.recip() - p0.recip()) * yj * yj + (q1 / p1 - q0 / p0) * yj + r1 - r0)
    };
    let d_a = path1.y(a)? - path0.y(a)?;
    let rhs = decaying_solution(kernel, bracket, a, b, &mesh, d_a, opts)?;
    let (mut worst, mut scale) = (S::zero(), S::zero());
    for &t in &mesh {
        let d = path1.y(t)? - path0.y(t)?;
        worst = worst.max((d - rhs(t)?).abs());
        scale = scale.max(d.abs());
    }
    Ok(normalize(worst, scale))
}

/// Max deviation of `psi(t)` from `psi(a) e^{-V(t)} - I-_{q0/p0, r0 phi}(a; t)` on `[a, b]`.
pub fn flux_residual<S: Scalar>(traj: &Trajectory<S>, segment: (S, S), opts: &QuadOptions<S>) -> Result<S> {
    let (a, b) = check_span(traj, segment)?;
    let mesh = span_mesh(traj, a, b);
    let (t1, t2) = (traj.clone(), traj.clone());
    let kernel = move |t: S| {
        let (_, p, q, _) = along(&t1, t)?;
        Ok(q / p)
    };
    let forcing = move |t: S| {
        let (phi, _, _, r) = along(&t2, t)?;
        Ok(r * phi)
    };
    let psi_a = traj.psi(a).unwrap();
    let rhs = decaying_solution(kernel, forcing, a, b, &mesh, psi_a, opts)?;
    let (mut worst, mut scale) = (S::zero(), S::zero());
    for &t in &mesh {
        let psi = traj.psi(t).unwrap();
        worst = worst.max((psi - rhs(t)?).abs());
        scale = scale.max(psi.abs());
    }
    Ok(normalize(worst, scale))
}

/// Max deviation of `phi(t)` from `phi(a) + psi(a) I+_{p0, q0/p0}(a; t) - int_a^t I-(a; tau) / p0 dtau`.
pub fn volterra_residual<S: Scalar>(traj: &Trajectory<S>, segment: (S, S), opts: &QuadOptions<S>) -> Result<S> {
    let (a, b) = check_span(traj, segment)?;
    let mesh = span_mesh(traj, a, b);
    let tr = traj.clone();
    let t1 = tr.clone();
    let v = Arc::new(Antiderivative::build(
        move |t| {
            let (_, p, q, _) = along(&t1, t)?;
            Ok(q / p)
        },
        a,
        b,
        &mesh,
        opts,
    )?);
    let t2 = tr.clone();
    let d = Arc::new(DecayingIntegral::build(
        v.clone(),
        move |t| {
            let (phi, _, _, r) = along(&t2, t)?;
            Ok(r * phi)
        },
        &mesh,
        opts,
    )?);
    let (t3, v3) = (tr.clone(), v.clone());
    let iplus = Antiderivative::build(
        move |t| Ok((-v3.value_at(t)?).exp() / along(&t3, t)?.1),
        a,
        b,
        v.knots(),
        opts,
    )?;
    let (t4, d4) = (tr.clone(), d.clone());
    let h = Antiderivative::build(
        move |t| Ok(d4.value_at(t)? / along(&t4, t)?.1),
        a,
        b,
        d.knots(),
        opts,
    )?;
    let [phi_a, psi_a] = traj.eval(a).unwrap();
    let (mut worst, mut scale) = (S::zero(), S::zero());
    for &t in &mesh {
        let phi = traj.phi(t).unwrap();
        let rhs = phi_a + psi_a * iplus.value_at(t)? - h.value_at(t)?;
        worst = worst.max((phi - rhs).abs());
        scale = scale.max(phi.abs());
    }
    Ok(normalize(worst, scale))
}

fn check_span<S: Scalar>(traj: &Trajectory<S>, (a, b): (S, S)) -> Result<(S, S)> {
    if a < b && a >= traj.start() && b <= traj.end() {
        Ok((a, b))
    } else {
        Err(Error::InvalidInput(format!("segment [{a}, {b}] outside the trajectory")))
    }
}

fn span_mesh<S: Scalar>(traj: &Trajectory<S>, a: S, b: S) -> Vec<S> {
    let mut mesh = vec![a];
    mesh.extend(traj.mesh().into_iter().filter(|&t| t > a && t < b));
    mesh.push(b);
    mesh
}

fn along<S: Scalar>(traj: &Trajectory<S>, t: S) -> Result<(S, S, S, S)> {
    let phi = traj
        .phi(t)
        .ok_or_else(|| Error::InvalidInput(format!("t = {t} outside the trajectory")))?;
    let eq = traj.equation();
    Ok((phi, eq.p_checked(t, phi)?, eq.q0().eval(t, phi)?, eq.r0().eval(t, phi)?))
}

/// `t -> z_a e^{-V(t)} - int_a^t e^{-(V(t) - V(tau))} x(tau) dtau` with `V = int_a^t v`.
fn decaying_solution<S: Scalar>(
    v: impl Fn(S) -> Result<S> + Send + Sync + 'static,
    x: impl Fn(S) -> Result<S> + Send + Sync + 'static,
    a: S,
    b: S,
    mesh: &[S],
    z_a: S,
    opts: &QuadOptions<S>,
) -> Result<impl Fn(S) -> Result<S>> {
    let vint = Arc::new(Antiderivative::build(v, a, b, mesh, opts)?);
    let d = DecayingIntegral::build(vint.clone(), x, mesh, opts)?;
    Ok(move |t: S| Ok(z_a * (-vint.value_at(t)?).exp() - d.value_at(t)?))
}

/// Outcome of an assertion derived from a comparison lemma.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LemmaCheck<S> {
    Holds,
    NotApplicable { reason: String },
    Violated { t: S, y: S },
}

/// If `y(a) >= 0` and `r0(t, phi(t)) <= 0` along the path, then `y >= -y_tol` on the path.
pub fn check_nonnegative_y<S: Scalar>(path: &RiccatiPath<S>, y_tol: S) -> Result<LemmaCheck<S>> {
    if path.y(path.a)? < S::zero() {
        return Ok(LemmaCheck::NotApplicable { reason: "y(a) < 0".into() });
    }
    for &t in &path.mesh {
        if path.coefficients(t)?.3 > S::zero() {
            return Ok(LemmaCheck::NotApplicable { reason: format!("r0 > 0 along the path at t = {t}") });
        }
    }
    for &t in &path.mesh {
        let y = path.y(t)?;
        if y < -y_tol {
            return Ok(LemmaCheck::Violated { t, y });
        }
    }
    Ok(LemmaCheck::Holds)
}

/// If `y1(a) > y0(a)`, checks `y1 > y0 - y_tol` along the common mesh. The coefficient
/// hypotheses of the comparison are the caller's responsibility (see `cert::pair_order`).
pub fn check_ordered_y<S: Scalar>(
    path0: &RiccatiPath<S>,
    path1: &RiccatiPath<S>,
    y_tol: S,
) -> Result<LemmaCheck<S>> {
    let a = path0.a.max(path1.a);
    let b = path0.b.min(path1.b);
    if a >= b {
        return Ok(LemmaCheck::NotApplicable { reason: "paths do not overlap".into() });
    }
    if path1.y(a)? <= path0.y(a)? {
        return Ok(LemmaCheck::NotApplicable { reason: "y1(a) <= y0(a)".into() });
    }
    let mut mesh: Vec<S> = path0.mesh().iter().chain(path1.mesh()).copied().filter(|&t| t >= a && t <= b).collect();
    mesh.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for t in mesh {
        let (y0, y1) = (path0.y(t)?, path1.y(t)?);
        if y1 <= y0 - y_tol {
            return Ok(LemmaCheck::Violated { t, y: y1 - y0 });
        }
    }
    Ok(LemmaCheck::Holds)
}

/// Direct solution of `y' = -y^2 / P - (Q / P) y - R`.
#[derive(Clone, Debug)]
pub struct ComparisonOutcome<S> {
    pub exists_on_span: bool,
    pub escape_time: Option<S>,
    pub terminal: Terminal<S>,
    segments: Vec<Dense<S, 1>>,
    start: S,
    y_init: S,
}

impl<S: Scalar> ComparisonOutcome<S> {
    pub fn y_at(&self, t: S) -> Option<S> {
        if t == self.start {
            return Some(self.y_init);
        }
        let last = self.segments.last()?;
        if t < self.start || t > last.t1() {
            return None;
        }
        let k = self.segments.partition_point(|s| s.t0 <= t).saturating_sub(1);
        Some(self.segments[k].eval(t)[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonOptions<S> {
    pub rel_tol: S,
    pub abs_tol: S,
    pub escape_threshold: S,
    pub min_step: S,
    pub max_steps: usize,
}

impl<S: Scalar> Default for ComparisonOptions<S> {
    fn default() -> Self {
        Self {
            rel_tol: c::<S>(1e-10).max(S::tol_floor()),
            abs_tol: c::<S>(1e-12).max(S::tol_floor()),
            escape_threshold: c(crate::dynamics::DEFAULT_ESCAPE_THRESHOLD),
            min_step: c(crate::dynamics::DEFAULT_MIN_STEP),
            max_steps: crate::dynamics::DEFAULT_MAX_STEPS,
        }
    }
}

pub fn comparison_riccati_exists<S: Scalar>(
    b: &BoundTriple<S>,
    y_init: S,
    span: (S, S),
    opts: &ComparisonOptions<S>,
) -> Result<ComparisonOutcome<S>> {
    let (t1, t2) = span;
    if !(t1 < t2 && t1.is_finite() && t2.is_finite() && y_init.is_finite()) {
        return Err(Error::InvalidInput("comparison span must be finite with t1 < t2".into()));
    }
    let rhs = |t: S, y: &[S; 1]| -> Result<[S; 1]> {
        let p = b.p.eval(t)?;
        if p <= S::zero() {
            return Err(Error::Domain(format!("P({t}) = {p} is not positive")));
        }
        let (q, r) = (b.q.eval(t)?, b.r.eval(t)?);
        Ok([-y[0] * y[0] / p - q / p * y[0] - r])
    };
    let ctl = StepControl {
        rtol: opts.rel_tol,
        atol: opts.abs_tol,
        min_step: opts.min_step,
        reject_above: opts.escape_threshold,
    };
    let (segments, terminal) = solve_scalar(rhs, t1, y_init, t2, ctl, opts.max_steps)?;
    Ok(ComparisonOutcome {
        exists_on_span: matches!(terminal, Terminal::ReachedHorizon { .. }),
        escape_time: terminal.escape_time(),
        terminal,
        segments,
        start: t1,
        y_init,
    })
}
