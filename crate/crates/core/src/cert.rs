//! Sampled hypothesis checks for the global existence and oscillation theorems.
//!
//! Every "for all `w`" hypothesis is checked on a finite grid, so a certificate
//! can falsify a hypothesis with a concrete witness but only ever verifies it on
//! the region it records.

use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{integrate, IntegrationOptions, Terminal, Trajectory};
use crate::error::{Error, Result};
use crate::field::{
    check_even_monotone, linspace, violates_le, w_points, BoundTriple, EquationSpec, Grid, InitialData, Region,
    ScalarField, TagOutcome, TimeFunction,
};
use crate::quad::{
    divergence_probe, running_max, Antiderivative, DecayingIntegral, DivergenceStatus, DivergenceVerdict,
    GrowthEnvelope, HorizonSpec, QuadOptions,
};
use crate::scalar::{c, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    T3_1,
    T3_2,
    T3_3,
    T3_4,
    T3_5,
    T3_6,
    T4_2,
}

impl Theorem {
    pub fn id(self) -> &'static str {
        match self {
            Theorem::T3_1 => "t3_1",
            Theorem::T3_2 => "t3_2",
            Theorem::T3_3 => "t3_3",
            Theorem::T3_4 => "t3_4",
            Theorem::T3_5 => "t3_5",
            Theorem::T3_6 => "t3_6",
            Theorem::T4_2 => "t4_2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Conclusion {
    GlobalMonotone,
    DerivativeNonvanishing,
    SingularSecondKindIfNonextendable,
    OscOrSingularFirstKind,
    GlobalForAllIc,
    Oscillatory,
}

/// Grid point at which a hypothesis inequality `lhs <= rhs` fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness<S> {
    pub hypothesis: String,
    pub t: S,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<S>,
    /// Second state value for hypotheses over pairs `|w| <= |w1|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w1: Option<S>,
    pub lhs: S,
    pub rhs: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status<S> {
    Verified,
    Falsified { witness: Witness<S> },
    Inconclusive { reason: String },
}

impl<S> Status<S> {
    pub fn is_verified(&self) -> bool {
        matches!(self, Status::Verified)
    }

    pub fn is_falsified(&self) -> bool {
        matches!(self, Status::Falsified { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Verified => "verified",
            Status::Falsified { .. } => "falsified",
            Status::Inconclusive { .. } => "inconclusive",
        }
    }
}

/// Rectangle and grid a certificate actually sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampledRegion<S> {
    pub t: (S, S),
    pub w: (S, S),
    pub grid: Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRecord<S> {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<S>,
    pub verdict: DivergenceVerdict<S>,
}

/// Zero count of one member of a linear comparison family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationSample<S> {
    pub epsilon: S,
    pub horizon: S,
    pub zeros: usize,
    pub oscillates: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate<S> {
    pub theorem: Theorem,
    pub status: Status<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<SampledRegion<S>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<S>,
    /// Filled only for verified certificates.
    pub conclusions: Vec<Conclusion>,
    pub hypotheses: Vec<String>,
    pub heuristic: Vec<String>,
    /// `(t, bound(t))` on the time grid.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bound_curve: Vec<(S, S)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_bound: Option<S>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeRecord<S>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oscillation: Vec<OscillationSample<S>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<Certificate<S>>,
    #[serde(skip)]
    pub bound: Option<GrowthEnvelope<S>>,
}

impl<S: Scalar> Certificate<S> {
    fn new(theorem: Theorem) -> Self {
        Self {
            theorem,
            status: Status::Verified,
            region: None,
            epsilon: None,
            conclusions: Vec::new(),
            hypotheses: Vec::new(),
            heuristic: Vec::new(),
            bound_curve: Vec::new(),
            uniform_bound: None,
            probes: Vec::new(),
            oscillation: Vec::new(),
            parts: Vec::new(),
            bound: None,
        }
    }

    fn inconclusive(mut self, reason: impl Into<String>) -> Self {
        self.status = Status::Inconclusive { reason: reason.into() };
        self.conclusions.clear();
        self
    }

    fn falsified(mut self, witness: Witness<S>) -> Self {
        self.status = Status::Falsified { witness };
        self.conclusions.clear();
        self
    }

    /// Combines sub-certificates: falsified beats inconclusive beats verified.
    pub fn aggregate(theorem: Theorem, parts: Vec<Certificate<S>>, conclusions: Vec<Conclusion>) -> Self {
        let mut cert = Self::new(theorem);
        let status = parts
            .iter()
            .find(|p| p.status.is_falsified())
            .or_else(|| parts.iter().find(|p| !p.status.is_verified()))
            .map(|p| p.status.clone());
        cert.hypotheses = parts.iter().flat_map(|p| p.hypotheses.iter().cloned()).collect();
        cert.heuristic = parts.iter().flat_map(|p| p.heuristic.iter().cloned()).collect();
        match status {
            Some(s) => cert.status = s,
            None => cert.conclusions = conclusions,
        }
        cert.parts = parts;
        cert
    }

    /// Evaluates the guaranteed envelope, if the certificate carries one.
    pub fn bound_at(&self, t: S) -> Option<Result<S>> {
        self.bound.as_ref().map(|b| b.eval(t))
    }
}

fn witness<S: Scalar>(hyp: &str, t: S, w: Option<S>, w1: Option<S>, lhs: S, rhs: S) -> Witness<S> {
    Witness { hypothesis: hyp.to_string(), t, w, w1, lhs, rhs }
}

/// `lhs <= rhs` at a grid point, or the witness of its failure.
fn le<S: Scalar>(hyp: &str, t: S, w: S, lhs: S, rhs: S, slack: f64) -> Option<Witness<S>> {
    violates_le(lhs, rhs, slack).then(|| witness(hyp, t, Some(w), None, lhs, rhs))
}

fn first_some<S>(checks: impl IntoIterator<Item = Option<Witness<S>>>) -> Option<Witness<S>> {
    checks.into_iter().flatten().next()
}

/// t-outer, w-inner scan that stops at the first witness.
fn scan<S: Scalar>(
    ts: &[S],
    ws: impl Fn(S) -> Vec<S>,
    mut check: impl FnMut(S, S) -> Result<Option<Witness<S>>>,
) -> Result<Option<Witness<S>>> {
    for &t in ts {
        for w in ws(t) {
            if let Some(wit) = check(t, w)? {
                return Ok(Some(wit));
            }
        }
    }
    Ok(None)
}

fn even_monotone<S: Scalar>(
    hyp: &str,
    field: &ScalarField<S>,
    ts: &[S],
    ws: &[S],
    slack: f64,
) -> Result<Option<Witness<S>>> {
    Ok(match check_even_monotone(field, ts, ws, slack)? {
        TagOutcome::Holds => None,
        TagOutcome::Falsified { t, w, value } => Some(witness(hyp, t, Some(w), None, value, value)),
    })
}

fn ratio_field<S: Scalar>(name: &str, num: &ScalarField<S>, den: &ScalarField<S>) -> ScalarField<S> {
    let (n, d) = (num.clone(), den.clone());
    ScalarField::new(name, move |t, w| n.raw(t, w) / d.raw(t, w))
}

fn negated<S: Scalar>(name: &str, f: &ScalarField<S>) -> ScalarField<S> {
    let f = f.clone();
    ScalarField::new(name, move |t, w| -f.raw(t, w))
}

/// Checks `f(w) <= g(w1)` for every grid pair with `|w| <= |w1|`.
///
/// Points are visited in order of increasing `|w|`; a running maximum of `f`
/// over the prefix (ties in `|w|` included) is compared with `g` at each point.
pub(crate) fn pair_order<S: Scalar>(ws: &[S], f: &[S], g: &[S], slack: f64) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..ws.len()).collect();
    order.sort_by(|&a, &b| ws[a].abs().partial_cmp(&ws[b].abs()).unwrap().then(a.cmp(&b)));
    let mut best: Option<usize> = None;
    let mut k = 0;
    while k < order.len() {
        let mag = ws[order[k]].abs();
        let mut end = k;
        while end < order.len() && ws[order[end]].abs() == mag {
            let i = order[end];
            if best.map_or(true, |b| f[i] > f[b]) {
                best = Some(i);
            }
            end += 1;
        }
        let b = best.unwrap();
        for &j in &order[k..end] {
            if violates_le(f[b], g[j], slack) {
                return Some((b, j));
            }
        }
        k = end;
    }
    None
}

fn sampled_region<S: Scalar>(region: &Region<S>, grid: &Grid) -> SampledRegion<S> {
    SampledRegion { t: region.t, w: region.w, grid: *grid }
}

/// Reads `(phi0, phi1)` as the data of the growth theorems, or the reason they do not apply.
fn growth_precondition<S: Scalar>(ic: &InitialData<S>) -> std::result::Result<(), String> {
    if ic.phi0 == S::zero() {
        return Err("precondition: phi0 = 0".into());
    }
    if ic.phi1 / ic.phi0 < S::zero() {
        return Err("precondition: phi1 / phi0 < 0".into());
    }
    Ok(())
}

fn check_span<S: Scalar>(eq: &EquationSpec<S>, ic: &InitialData<S>, horizon: S) -> Result<()> {
    if !(ic.t1 >= eq.t0() && horizon > ic.t1 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need t0 <= t1 < horizon, got t0 = {}, t1 = {}, horizon = {horizon}",
            eq.t0(),
            ic.t1
        )));
    }
    Ok(())
}

/// Default `epsilon` of the growth theorems: `1e-3 |phi0|`.
pub fn default_epsilon<S: Scalar>(ic: &InitialData<S>) -> S {
    c::<S>(1e-3) * ic.phi0.abs()
}

/// Samples the envelope on the time grid; an overflow becomes the inconclusive reason.
fn envelope_curve<S: Scalar>(env: &GrowthEnvelope<S>, ts: &[S]) -> Result<std::result::Result<Vec<(S, S)>, String>> {
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        match env.eval(t) {
            Ok(v) => out.push((t, v)),
            Err(Error::Range(msg)) => return Ok(Err(format!("range: {msg}"))),
            Err(e) => return Err(e),
        }
    }
    Ok(Ok(out))
}

fn envelope_region<S: Scalar>(curve: &[(S, S)], eps: S, grid: &Grid) -> SampledRegion<S> {
    let top = curve.iter().map(|&(_, v)| v).fold(S::zero(), S::max) + eps;
    SampledRegion { t: (curve[0].0, curve.last().unwrap().0), w: (-top, top), grid: *grid }
}

/// Global existence with the `F` envelope.
///
/// Checks `p0 >= P`, `q0 / p0 >= Q`, `R <= r0 <= 0` for `|w| <= F(t1; t) + eps` on
/// `grid.nt` times in `[t1, horizon]` and `grid.nw` values of `w` per time.
pub fn check_t3_1<S: Scalar>(
    eq: &EquationSpec<S>,
    ic: &InitialData<S>,
    b: &BoundTriple<S>,
    epsilon: Option<S>,
    horizon: S,
    grid: &Grid,
    quad: &QuadOptions<S>,
) -> Result<Certificate<S>> {
    grid.validate()?;
    check_span(eq, ic, horizon)?;
    let mut cert = Certificate::new(Theorem::T3_1);
    let eps = epsilon.unwrap_or_else(|| default_epsilon(ic));
    cert.epsilon = Some(eps);
    if let Err(reason) = growth_precondition(ic) {
        return Ok(cert.inconclusive(reason));
    }
    let t0 = ic.t1;
    let ts = linspace(t0, horizon, grid.nt);
    b.check_positive(&ts)?;
    let c2 = eq.p_checked(t0, ic.phi0)? * ic.phi1 / ic.phi0;
    let env = match GrowthEnvelope::f(b, t0, horizon, ic.phi0, c2, quad) {
        Ok(env) => env,
        Err(Error::Range(msg)) => return Ok(cert.inconclusive(format!("range: {msg}"))),
        Err(e) => return Err(e),
    };
    let curve = match envelope_curve(&env, &ts)? {
        Ok(curve) => curve,
        Err(reason) => return Ok(cert.inconclusive(reason)),
    };
    cert.region = Some(envelope_region(&curve, eps, grid));
    cert.hypotheses = vec![
        "p0(t, w) >= P(t)".into(),
        "q0(t, w) / p0(t, w) >= Q(t)".into(),
        "R(t) <= r0(t, w)".into(),
        "r0(t, w) <= 0".into(),
    ];
    let slack = grid.slack;
    let reach: Vec<S> = curve.iter().map(|&(_, v)| v + eps).collect();
    let found = scan(
        &ts,
        |t| {
            let k = ts.iter().position(|&s| s == t).unwrap();
            w_points(-reach[k], reach[k], grid.nw)
        },
        |t, w| {
            let p = eq.p_checked(t, w)?;
            let q = eq.q0().eval(t, w)?;
            let r = eq.r0().eval(t, w)?;
            let (bp, bq, br) = (b.p.eval(t)?, b.q.eval(t)?, b.r.eval(t)?);
            Ok(first_some([
                le("p0(t, w) >= P(t)", t, w, bp, p, slack),
                le("q0(t, w) / p0(t, w) >= Q(t)", t, w, bq, q / p, slack),
                le("R(t) <= r0(t, w)", t, w, br, r, slack),
                le("r0(t, w) <= 0", t, w, r, S::zero(), slack),
            ]))
        },
    )?;
    if let Some(w) = found {
        return Ok(cert.falsified(w));
    }
    cert.conclusions.push(Conclusion::GlobalMonotone);
    if ic.phi1 != S::zero() {
        cert.conclusions.push(Conclusion::DerivativeNonvanishing);
    }
    cert.uniform_bound = curve.iter().map(|&(_, v)| v).reduce(S::max);
    cert.bound_curve = curve;
    cert.bound = Some(env);
    Ok(cert)
}

/// Global existence with the `G` envelope, `x` being the running maximum of `q_tilde`.
#[allow(clippy::too_many_arguments)]
pub fn check_t3_2<S: Scalar>(
    eq: &EquationSpec<S>,
    ic: &InitialData<S>,
    b: &BoundTriple<S>,
    q_tilde: &TimeFunction<S>,
    epsilon: Option<S>,
    horizon: S,
    grid: &Grid,
    quad: &QuadOptions<S>,
) -> Result<Certificate<S>> {
    grid.validate()?;
    check_span(eq, ic, horizon)?;
    let mut cert = Certificate::new(Theorem::T3_2);
    let eps = epsilon.unwrap_or_else(|| default_epsilon(ic));
    cert.epsilon = Some(eps);
    if let Err(reason) = growth_precondition(ic) {
        return Ok(cert.inconclusive(reason));
    }
    let t0 = ic.t1;
    let ts = linspace(t0, horizon, grid.nt);
    b.check_positive(&ts)?;
    let slack = grid.slack;
    for &t in &ts {
        let q = b.q.eval(t)?;
        if violates_le(S::zero(), q, slack) {
            return Ok(cert.falsified(witness("Q(t) >= 0", t, None, None, S::zero(), q)));
        }
    }
    let m = running_max(q_tilde, t0, horizon, 4 * grid.nt)?;
    let c2 = eq.p_checked(t0, ic.phi0)? * ic.phi1 / ic.phi0;
    let env = match GrowthEnvelope::g(b, &m, t0, horizon, ic.phi0, c2, quad) {
        Ok(env) => env,
        Err(Error::Range(msg)) => return Ok(cert.inconclusive(format!("range: {msg}"))),
        Err(e) => return Err(e),
    };
    let curve = match envelope_curve(&env, &ts)? {
        Ok(curve) => curve,
        Err(reason) => return Ok(cert.inconclusive(reason)),
    };
    cert.region = Some(envelope_region(&curve, eps, grid));
    cert.hypotheses = vec![
        "p0(t, w) >= P(t)".into(),
        "q0(t, w) >= Q(t) >= 0".into(),
        "r0(t, w) <= 0".into(),
        "|p0(t, w) r0(t, w) / q0(t, w)| <= Q~(t)".into(),
    ];
    let reach: Vec<S> = curve.iter().map(|&(_, v)| v + eps).collect();
    let mut undefined = None;
    let found = scan(
        &ts,
        |t| {
            let k = ts.iter().position(|&s| s == t).unwrap();
            w_points(-reach[k], reach[k], grid.nw)
        },
        |t, w| {
            let p = eq.p_checked(t, w)?;
            let q = eq.q0().eval(t, w)?;
            let r = eq.r0().eval(t, w)?;
            let (bp, bq, qt) = (b.p.eval(t)?, b.q.eval(t)?, q_tilde.eval(t)?);
            let basic = first_some([
                le("p0(t, w) >= P(t)", t, w, bp, p, slack),
                le("q0(t, w) >= Q(t) >= 0", t, w, bq, q, slack),
                le("r0(t, w) <= 0", t, w, r, S::zero(), slack),
            ]);
            if basic.is_some() {
                return Ok(basic);
            }
            if q == S::zero() {
                undefined.get_or_insert((t, w));
                return Ok(None);
            }
            Ok(le("|p0(t, w) r0(t, w) / q0(t, w)| <= Q~(t)", t, w, (p * r / q).abs(), qt, slack))
        },
    )?;
    if let Some(w) = found {
        return Ok(cert.falsified(w));
    }
    if let Some((t, w)) = undefined {
        return Ok(cert.inconclusive(format!("ratio undefined: q0 = 0 at t = {t}, w = {w}")));
    }
    cert.conclusions.push(Conclusion::GlobalMonotone);
    if ic.phi1 != S::zero() {
        cert.conclusions.push(Conclusion::DerivativeNonvanishing);
    }
    cert.uniform_bound = curve.iter().map(|&(_, v)| v).reduce(S::max);
    cert.bound_curve = curve;
    cert.bound = Some(env);
    Ok(cert)
}

/// Comparison with a global solution `majorant` of the second equation.
///
/// `ic0` must start where the majorant starts. The orderings of the initial data
/// are preconditions; a majorant that vanishes or stops early makes the check inconclusive.
pub fn check_t3_3<S: Scalar>(
    eq0: &EquationSpec<S>,
    eq1: &EquationSpec<S>,
    majorant: &Trajectory<S>,
    ic0: &InitialData<S>,
    region: &Region<S>,
    grid: &Grid,
) -> Result<Certificate<S>> {
    grid.validate()?;
    let mut cert = Certificate::new(Theorem::T3_3);
    cert.region = Some(sampled_region(region, grid));
    let t0 = ic0.t1;
    let scale = S::one().max(t0.abs());
    if (majorant.start() - t0).abs() > c::<S>(1e-12) * scale {
        return Err(Error::InvalidInput(format!(
            "majorant starts at {} but the initial data are at {t0}",
            majorant.start()
        )));
    }
    if let Some(&z) = majorant.zeros().first() {
        return Ok(cert.inconclusive(format!("majorant vanishes at t = {z}")));
    }
    if !matches!(majorant.terminal(), Terminal::ReachedHorizon { .. }) {
        return Ok(cert.inconclusive(format!(
            "majorant does not reach its horizon: {:?}",
            majorant.terminal()
        )));
    }
    let [phi1, psi1] = majorant.eval(t0).expect("start of majorant");
    let dphi1 = majorant.dphi(t0).expect("start of majorant");
    let (phi0, dphi0) = (ic0.phi0, ic0.phi1);
    let zero = S::zero();
    let a1 = (phi1 >= phi0 && phi0 > zero && dphi1 > dphi0 && dphi0 >= zero)
        || (phi1 <= phi0 && phi0 < zero && dphi1 < dphi0 && dphi0 <= zero);
    if !a1 {
        return Ok(cert.inconclusive("precondition: initial values are not ordered"));
    }
    let y0 = ic0.psi(eq0)? / phi0;
    let y1 = psi1 / phi1;
    if y0 >= y1 {
        return Ok(cert.inconclusive(format!("precondition: y0(t0) = {y0} is not below y1(t0) = {y1}")));
    }
    cert.hypotheses = vec![
        "p0(t, w) = p1(t, w)".into(),
        "p0 even monotone in w".into(),
        "r1(t, w1) <= r0(t, w) <= 0 for |w| <= |w1|".into(),
        "q0(t, w) / p0(t, w) <= q1(t, w1) / p1(t, w1) for |w| <= |w1|".into(),
    ];
    let ts = linspace(region.t.0, region.t.1, grid.nt);
    let ws = w_points(region.w.0, region.w.1, grid.nw);
    let slack = grid.slack;
    for &t in &ts {
        let mut nr0 = Vec::with_capacity(ws.len());
        let mut nr1 = Vec::with_capacity(ws.len());
        let mut k0 = Vec::with_capacity(ws.len());
        let mut k1 = Vec::with_capacity(ws.len());
        for &w in &ws {
            let p0 = eq0.p_checked(t, w)?;
            let p1 = eq1.p_checked(t, w)?;
            let mag = S::one().max(p0.abs()).max(p1.abs());
            if (p0 - p1).abs() > c::<S>(slack) * mag {
                return Ok(cert.falsified(witness("p0(t, w) = p1(t, w)", t, Some(w), None, p0, p1)));
            }
            let r0 = eq0.r0().eval(t, w)?;
            if let Some(wit) = le("r1(t, w1) <= r0(t, w) <= 0 for |w| <= |w1|", t, w, r0, zero, slack) {
                return Ok(cert.falsified(wit));
            }
            nr0.push(-r0);
            nr1.push(-eq1.r0().eval(t, w)?);
            k0.push(eq0.q0().eval(t, w)? / p0);
            k1.push(eq1.q0().eval(t, w)? / p1);
        }
        if let Some((i, j)) = pair_order(&ws, &nr0, &nr1, slack) {
            let hyp = "r1(t, w1) <= r0(t, w) <= 0 for |w| <= |w1|";
            return Ok(cert.falsified(witness(hyp, t, Some(ws[i]), Some(ws[j]), -nr1[j], -nr0[i])));
        }
        if let Some((i, j)) = pair_order(&ws, &k0, &k1, slack) {
            let hyp = "q0(t, w) / p0(t, w) <= q1(t, w1) / p1(t, w1) for |w| <= |w1|";
            return Ok(cert.falsified(witness(hyp, t, Some(ws[i]), Some(ws[j]), k0[i], k1[j])));
        }
    }
    if let Some(w) = even_monotone("p0 even monotone in w", eq0.p0(), &ts, &ws, slack)? {
        return Ok(cert.falsified(w));
    }
    cert.conclusions.push(Conclusion::GlobalMonotone);
    Ok(cert)
}

/// Solutions that cannot be continued to infinity oscillate with accumulating zeros.
pub fn check_t3_4<S: Scalar>(
    eq: &EquationSpec<S>,
    b: &BoundTriple<S>,
    region: &Region<S>,
    grid: &Grid,
) -> Result<Certificate<S>> {
    grid.validate()?;
    let mut cert = Certificate::new(Theorem::T3_4);
    cert.region = Some(sampled_region(region, grid));
    cert.hypotheses = vec![
        "p0(t, w) >= P(t)".into(),
        "q0(t, w) / p0(t, w) >= Q(t)".into(),
        "r0(t, w) >= 0".into(),
    ];
    let ts = linspace(region.t.0, region.t.1, grid.nt);
    b.check_positive(&ts)?;
    let ws = w_points(region.w.0, region.w.1, grid.nw);
    let slack = grid.slack;
    let found = scan(
        &ts,
        |_| ws.clone(),
        |t, w| {
            let p = eq.p_checked(t, w)?;
            let q = eq.q0().eval(t, w)?;
            let r = eq.r0().eval(t, w)?;
            Ok(first_some([
                le("p0(t, w) >= P(t)", t, w, b.p.eval(t)?, p, slack),
                le("q0(t, w) / p0(t, w) >= Q(t)", t, w, b.q.eval(t)?, q / p, slack),
                le("r0(t, w) >= 0", t, w, S::zero(), r, slack),
            ]))
        },
    )?;
    if let Some(w) = found {
        return Ok(cert.falsified(w));
    }
    cert.conclusions.push(Conclusion::SingularSecondKindIfNonextendable);
    Ok(cert)
}

type FamilyFn<S> = Arc<dyn Fn(S, S) -> S + Send + Sync>;

/// Linear comparison equations `(p_e phi')' + q_e phi' + r_e phi = 0` indexed by `e > 0`.
/// Each coefficient is a function of `(e, t)`.
#[derive(Clone)]
pub struct ComparisonFamily<S> {
    p: FamilyFn<S>,
    q: FamilyFn<S>,
    r: FamilyFn<S>,
}

impl<S: Scalar> std::fmt::Debug for ComparisonFamily<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ComparisonFamily")
    }
}

impl<S: Scalar> ComparisonFamily<S> {
    pub fn new(
        p: impl Fn(S, S) -> S + Send + Sync + 'static,
        q: impl Fn(S, S) -> S + Send + Sync + 'static,
        r: impl Fn(S, S) -> S + Send + Sync + 'static,
    ) -> Self {
        Self { p: Arc::new(p), q: Arc::new(q), r: Arc::new(r) }
    }

    fn member(f: &FamilyFn<S>, name: &str, eps: S) -> TimeFunction<S> {
        let f = f.clone();
        TimeFunction::new(name, move |t| f(eps, t))
    }

    pub fn p(&self, eps: S) -> TimeFunction<S> {
        Self::member(&self.p, "p_eps", eps)
    }

    pub fn q(&self, eps: S) -> TimeFunction<S> {
        Self::member(&self.q, "q_eps", eps)
    }

    pub fn r(&self, eps: S) -> TimeFunction<S> {
        Self::member(&self.r, "r_eps", eps)
    }

    /// The member for `eps` as an equation with `w`-independent coefficients.
    pub fn equation(&self, eps: S, t0: S) -> Result<EquationSpec<S>> {
        let (p, q, r) = (self.p(eps), self.q(eps), self.r(eps));
        EquationSpec::new(
            ScalarField::of_time("p_eps", p),
            ScalarField::of_time("q_eps", q),
            ScalarField::of_time("r_eps", r),
            t0,
        )
    }
}

/// Tuning of the oscillation check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T35Options<S> {
    /// `N` of the small-amplitude hypotheses.
    pub n: S,
    pub eps0: S,
    /// Sampled `e / eps0` in `(0, 1]`.
    pub eps_fractions: Vec<S>,
    /// Multiples of `N` sampled for the large-amplitude hypotheses.
    pub large_multiples: Vec<S>,
    /// Length of the interval on which comparison members must show `min_zeros` zeros.
    pub oscillation_span: S,
    pub min_zeros: usize,
    pub probe: HorizonSpec<S>,
    pub quad: QuadOptions<S>,
    pub integration: IntegrationOptions<S>,
}

impl<S: Scalar> T35Options<S> {
    pub fn new(n: S, eps0: S) -> Self {
        let lits = |xs: &[f64]| xs.iter().map(|&x| c::<S>(x)).collect::<Vec<_>>();
        Self {
            n,
            eps0,
            eps_fractions: lits(&[1.0, 0.5, 0.25, 0.1]),
            large_multiples: lits(&[1.0, 2.0, 4.0, 8.0]),
            oscillation_span: c(30.0),
            min_zeros: 5,
            probe: HorizonSpec::default(),
            quad: QuadOptions::default(),
            integration: IntegrationOptions::with_horizon(S::one()),
        }
    }
}

fn probe_end<S: Scalar>(t0: S, probe: &HorizonSpec<S>) -> S {
    probe.start.unwrap_or_else(|| t0.max(S::one())) * c::<S>(2f64.powi(probe.octaves as i32))
}

/// `int exp{-int_{t0}^tau Q} / P`: divergence of the weight in the small-amplitude hypothesis.
fn probe_weight<S: Scalar>(b: &BoundTriple<S>, t0: S, opts: &T35Options<S>) -> Result<DivergenceVerdict<S>> {
    let end = probe_end(t0, &opts.probe);
    let q = b.q.clone();
    let vq = Arc::new(Antiderivative::build(move |s| q.eval(s), t0, end, &[], &opts.quad)?);
    let p = b.p.clone();
    let integrand = TimeFunction::new("weight", move |tau| {
        vq.value_at(tau).map_or(S::nan(), |v| (-v).exp() / p.raw(tau))
    });
    divergence_probe(&integrand, t0, &opts.probe, &opts.quad)
}

/// `int I-_{q_e, r_e}(t0; tau) / P(tau)`: divergence in the large-amplitude hypothesis.
fn probe_forcing<S: Scalar>(
    b: &BoundTriple<S>,
    family: &ComparisonFamily<S>,
    eps: S,
    t0: S,
    opts: &T35Options<S>,
) -> Result<DivergenceVerdict<S>> {
    let end = probe_end(t0, &opts.probe);
    let q = family.q(eps);
    let r = family.r(eps);
    let vq = Arc::new(Antiderivative::build(move |s| q.eval(s), t0, end, &[], &opts.quad)?);
    let inner = Arc::new(DecayingIntegral::build(vq, move |s| r.eval(s), &[], &opts.quad)?);
    let p = b.p.clone();
    let integrand = TimeFunction::new("forcing", move |tau| {
        inner.value_at(tau).map_or(S::nan(), |v| v / p.raw(tau))
    });
    divergence_probe(&integrand, t0, &opts.probe, &opts.quad)
}

/// Existing nontrivial solutions oscillate or are singular of the first kind.
///
/// Order of checks: `r0 >= 0`; coefficient bounds against sampled family members for
/// `|w| >= e`; the small-amplitude bounds for `|w| <= N` and divergence of their weight;
/// bounds for `N <= |w| <= e` and divergence of the forcing integral for `e` in
/// `N * large_multiples`; finally oscillation of the sampled members by zero counting.
/// Divergence and oscillation are heuristic and flagged as such.
pub fn check_t3_5<S: Scalar>(
    eq: &EquationSpec<S>,
    b: &BoundTriple<S>,
    family: &ComparisonFamily<S>,
    region: &Region<S>,
    grid: &Grid,
    opts: &T35Options<S>,
) -> Result<Certificate<S>> {
    grid.validate()?;
    if !(opts.n > S::zero() && opts.eps0 > S::zero()) {
        return Err(Error::InvalidInput("N and eps0 must be positive".into()));
    }
    let mut cert = Certificate::new(Theorem::T3_5);
    cert.region = Some(sampled_region(region, grid));
    cert.epsilon = Some(opts.eps0);
    cert.hypotheses = vec![
        "r0(t, w) >= 0".into(),
        "p0 <= p_e, q0 / p0 >= q_e / p_e, r0 >= r_e for |w| >= e, e <= eps0".into(),
        "p0 <= P, q0 / p0 <= Q for |w| <= N".into(),
        "int exp{-int Q} / P diverges".into(),
        "p0 <= p_e, q0 / p0 <= q_e, r0 >= r_e for N <= |w| <= e, e >= N".into(),
        "int I-_{q_e, r_e} / P diverges".into(),
        "comparison equations oscillate for e <= eps0".into(),
    ];
    cert.heuristic = vec![
        "divergence of int exp{-int Q} / P by probe".into(),
        "divergence of int I-_{q_e, r_e} / P by probe".into(),
        "oscillation of comparison equations by zero count".into(),
    ];
    let t0 = eq.t0();
    let ts = linspace(region.t.0, region.t.1, grid.nt);
    b.check_positive(&ts)?;
    let ws = w_points(region.w.0, region.w.1, grid.nw);
    let slack = grid.slack;

    let found = scan(&ts, |_| ws.clone(), |t, w| {
        Ok(le("r0(t, w) >= 0", t, w, S::zero(), eq.r0().eval(t, w)?, slack))
    })?;
    if let Some(w) = found {
        return Ok(cert.falsified(w));
    }

    let epsilons: Vec<S> = opts.eps_fractions.iter().map(|&f| f * opts.eps0).collect();
    for &eps in &epsilons {
        let (pe, qe, re) = (family.p(eps), family.q(eps), family.r(eps));
        let hyp = "p0 <= p_e, q0 / p0 >= q_e / p_e, r0 >= r_e for |w| >= e, e <= eps0";
        let found = scan(
            &ts,
            |_| ws.iter().copied().filter(|w| w.abs() >= eps).collect(),
            |t, w| {
                let p = eq.p_checked(t, w)?;
                let q = eq.q0().eval(t, w)?;
                let r = eq.r0().eval(t, w)?;
                let (pv, qv, rv) = (pe.eval(t)?, qe.eval(t)?, re.eval(t)?);
                Ok(first_some([
                    le(hyp, t, w, p, pv, slack),
                    le(hyp, t, w, qv / pv, q / p, slack),
                    le(hyp, t, w, rv, r, slack),
                ]))
            },
        )?;
        if let Some(w) = found {
            return Ok(cert.falsified(w));
        }
    }

    let hyp = "p0 <= P, q0 / p0 <= Q for |w| <= N";
    let small = w_points(-opts.n, opts.n, grid.nw);
    let found = scan(&ts, |_| small.clone(), |t, w| {
        let p = eq.p_checked(t, w)?;
        let q = eq.q0().eval(t, w)?;
        Ok(first_some([
            le(hyp, t, w, p, b.p.eval(t)?, slack),
            le(hyp, t, w, q / p, b.q.eval(t)?, slack),
        ]))
    })?;
    if let Some(w) = found {
        return Ok(cert.falsified(w));
    }
    let verdict = probe_weight(b, t0, opts)?;
    let status = verdict.status;
    cert.probes.push(ProbeRecord { name: "weight".into(), epsilon: None, verdict: verdict.clone() });
    if let Some(early) = probe_outcome(&mut cert, "int exp{-int Q} / P diverges", status, &verdict, t0) {
        return Ok(early);
    }

    for &m in &opts.large_multiples {
        let eps = m * opts.n;
        let (pe, qe, re) = (family.p(eps), family.q(eps), family.r(eps));
        let hyp = "p0 <= p_e, q0 / p0 <= q_e, r0 >= r_e for N <= |w| <= e, e >= N";
        let band: Vec<S> = w_points(-eps, eps, grid.nw).into_iter().filter(|w| w.abs() >= opts.n).collect();
        let found = scan(&ts, |_| band.clone(), |t, w| {
            let p = eq.p_checked(t, w)?;
            let q = eq.q0().eval(t, w)?;
            let r = eq.r0().eval(t, w)?;
            Ok(first_some([
                le(hyp, t, w, p, pe.eval(t)?, slack),
                le(hyp, t, w, q / p, qe.eval(t)?, slack),
                le(hyp, t, w, re.eval(t)?, r, slack),
            ]))
        })?;
        if let Some(w) = found {
            return Ok(cert.falsified(w));
        }
        let verdict = probe_forcing(b, family, eps, t0, opts)?;
        let status = verdict.status;
        cert.probes.push(ProbeRecord { name: "forcing".into(), epsilon: Some(eps), verdict: verdict.clone() });
        if let Some(early) = probe_outcome(&mut cert, "int I-_{q_e, r_e} / P diverges", status, &verdict, t0) {
            return Ok(early);
        }
    }

    let mut iopts = opts.integration;
    iopts.horizon = t0 + opts.oscillation_span;
    let ic = InitialData::new(t0, S::one(), S::zero())?;
    let mut silent = None;
    for &eps in &epsilons {
        let tr = integrate(&family.equation(eps, t0)?, &ic, &iopts)?;
        let zeros = tr.zeros().len();
        let oscillates = zeros >= opts.min_zeros;
        if !oscillates && silent.is_none() {
            silent = Some((eps, zeros));
        }
        cert.oscillation.push(OscillationSample { epsilon: eps, horizon: iopts.horizon, zeros, oscillates });
    }
    if let Some((eps, zeros)) = silent {
        return Ok(cert.inconclusive(format!(
            "comparison equation for e = {eps} shows {zeros} zeros on [{t0}, {}], fewer than {}",
            iopts.horizon, opts.min_zeros
        )));
    }
    cert.conclusions.push(Conclusion::OscOrSingularFirstKind);
    Ok(cert)
}

/// Maps a divergence verdict to an early certificate, or `None` to continue.
fn probe_outcome<S: Scalar>(
    cert: &mut Certificate<S>,
    hyp: &str,
    status: DivergenceStatus,
    verdict: &DivergenceVerdict<S>,
    t0: S,
) -> Option<Certificate<S>> {
    match status {
        DivergenceStatus::Diverging => None,
        DivergenceStatus::Converging => {
            let &(t_last, total) = verdict.horizons.last().unwrap();
            let tail = verdict.increments.last().copied().unwrap_or(S::zero());
            let mut out = cert.clone();
            out.status = Status::Falsified {
                witness: Witness { hypothesis: hyp.into(), t: t_last, w: None, w1: None, lhs: total, rhs: tail },
            };
            Some(out)
        }
        DivergenceStatus::Inconclusive => {
            let out = cert.clone();
            Some(out.inconclusive(format!("divergence probe from t0 = {t0} undecided for: {hyp}")))
        }
    }
}

/// Every solution is global.
pub fn check_t3_6<S: Scalar>(eq: &EquationSpec<S>, region: &Region<S>, grid: &Grid) -> Result<Certificate<S>> {
    grid.validate()?;
    let mut cert = Certificate::new(Theorem::T3_6);
    cert.region = Some(sampled_region(region, grid));
    cert.hypotheses = vec![
        "r0(t, w) >= 0".into(),
        "p0 even monotone in w".into(),
        "q0 / p0 even monotone in w".into(),
        "-r0 even monotone in w".into(),
    ];
    let ts = linspace(region.t.0, region.t.1, grid.nt);
    let ws = w_points(region.w.0, region.w.1, grid.nw);
    let slack = grid.slack;
    let found = scan(&ts, |_| ws.clone(), |t, w| {
        eq.p_checked(t, w)?;
        Ok(le("r0(t, w) >= 0", t, w, S::zero(), eq.r0().eval(t, w)?, slack))
    })?;
    if let Some(w) = found {
        return Ok(cert.falsified(w));
    }
    let checks = [
        ("p0 even monotone in w", eq.p0().clone()),
        ("q0 / p0 even monotone in w", ratio_field("q0/p0", eq.q0(), eq.p0())),
        ("-r0 even monotone in w", negated("-r0", eq.r0())),
    ];
    for (hyp, field) in &checks {
        if let Some(w) = even_monotone(hyp, field, &ts, &ws, slack)? {
            return Ok(cert.falsified(w));
        }
    }
    cert.conclusions.push(Conclusion::GlobalForAllIc);
    Ok(cert)
}
