//! Coefficient fields, equation data and sampled structural probes.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

type FieldFn<S> = dyn Fn(S, S) -> S + Send + Sync;
type TimeFn<S> = dyn Fn(S) -> S + Send + Sync;

/// Structural claims a field may carry. They are checked by sampling, never trusted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Positive,
    Nonnegative,
    Nonpositive,
    /// Nonincreasing on `w <= 0` and nondecreasing on `w >= 0`.
    MonotoneInWEven,
}

/// A coefficient `(t, w) -> value`, e.g. `p0(t; w)`.
#[derive(Clone)]
pub struct ScalarField<S> {
    name: Arc<str>,
    eval: Arc<FieldFn<S>>,
    tags: Vec<Tag>,
    singular_w: Vec<S>,
}

impl<S: Scalar> ScalarField<S> {
    pub fn new(name: &str, f: impl Fn(S, S) -> S + Send + Sync + 'static) -> Self {
        Self {
            name: Arc::from(name),
            eval: Arc::new(f),
            tags: Vec::new(),
            singular_w: Vec::new(),
        }
    }

    pub fn constant(name: &str, value: S) -> Self {
        Self::new(name, move |_, _| value)
    }

    /// Field that only depends on time.
    pub fn of_time(name: &str, f: TimeFunction<S>) -> Self {
        Self::new(name, move |t, _| f.raw(t))
    }

    pub fn with_tag(mut self, tag: Tag) -> Self {
        if !self.tags.contains(&tag) {
            self.tags.push(tag);
        }
        self
    }

    /// Declares a state value where the field is singular (for example `w = 0` for `|w|^s, s < 0`).
    pub fn with_singular_w(mut self, w: S) -> Self {
        self.singular_w.push(w);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn singular_w(&self) -> &[S] {
        &self.singular_w
    }

    /// Evaluates without the finiteness check.
    #[inline]
    pub fn raw(&self, t: S, w: S) -> S {
        (self.eval)(t, w)
    }

    pub fn eval(&self, t: S, w: S) -> Result<S> {
        let v = (self.eval)(t, w);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: self.name.to_string(),
                t: t.as_f64(),
                w: w.as_f64(),
            })
        }
    }
}

impl<S> fmt::Debug for ScalarField<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("tags", &self.tags)
            .finish()
    }
}

/// A function of time only, e.g. `P(t)` or the running maximum `M(t)`.
#[derive(Clone)]
pub struct TimeFunction<S> {
    name: Arc<str>,
    eval: Arc<TimeFn<S>>,
}

impl<S: Scalar> TimeFunction<S> {
    pub fn new(name: &str, f: impl Fn(S) -> S + Send + Sync + 'static) -> Self {
        Self {
            name: Arc::from(name),
            eval: Arc::new(f),
        }
    }

    pub fn constant(name: &str, value: S) -> Self {
        Self::new(name, move |_| value)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn raw(&self, t: S) -> S {
        (self.eval)(t)
    }

    pub fn eval(&self, t: S) -> Result<S> {
        let v = (self.eval)(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: self.name.to_string(),
                t: t.as_f64(),
                w: f64::NAN,
            })
        }
    }
}

impl<S> fmt::Debug for TimeFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TimeFunction").field(&self.name).finish()
    }
}

/// `(p0(t;w) phi')' + q0(t;w) phi' + r0(t;w) phi = 0` for `t >= t0`.
#[derive(Clone, Debug)]
pub struct EquationSpec<S> {
    p0: ScalarField<S>,
    q0: ScalarField<S>,
    r0: ScalarField<S>,
    t0: S,
}

impl<S: Scalar> EquationSpec<S> {
    pub fn new(p0: ScalarField<S>, q0: ScalarField<S>, r0: ScalarField<S>, t0: S) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::InvalidInput("t0 must be finite".into()));
        }
        Ok(Self {
            p0: p0.with_tag(Tag::Positive),
            q0,
            r0,
            t0,
        })
    }

    pub fn p0(&self) -> &ScalarField<S> {
        &self.p0
    }
    pub fn q0(&self) -> &ScalarField<S> {
        &self.q0
    }
    pub fn r0(&self) -> &ScalarField<S> {
        &self.r0
    }
    pub fn t0(&self) -> S {
        self.t0
    }

    /// Same coefficients with a different start time.
    pub fn with_t0(&self, t0: S) -> Result<Self> {
        Self::new(self.p0.clone(), self.q0.clone(), self.r0.clone(), t0)
    }

    /// `p0(t, w)`, rejecting nonpositive values.
    pub fn p_checked(&self, t: S, w: S) -> Result<S> {
        let p = self.p0.eval(t, w)?;
        if p > S::zero() {
            Ok(p)
        } else {
            Err(Error::Domain(format!(
                "p0 = {p} is not positive at t = {t}, w = {w}"
            )))
        }
    }

    /// Right-hand side of the first order system in `(phi, psi)` with `psi = p0 phi'`.
    pub fn rhs(&self, t: S, u: S, v: S) -> Result<[S; 2]> {
        let p = self.p_checked(t, u)?;
        let q = self.q0.eval(t, u)?;
        let r = self.r0.eval(t, u)?;
        Ok([v / p, -r * u - q / p * v])
    }

    /// `q0 / p0` as a field.
    pub fn damping_ratio(&self) -> ScalarField<S> {
        let p = self.p0.clone();
        let q = self.q0.clone();
        ScalarField::new("q0/p0", move |t, w| q.raw(t, w) / p.raw(t, w))
    }
}

/// `phi(t1) = phi0`, `phi'(t1) = phi1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialData<S> {
    pub t1: S,
    pub phi0: S,
    pub phi1: S,
}

impl<S: Scalar> InitialData<S> {
    pub fn new(t1: S, phi0: S, phi1: S) -> Result<Self> {
        if !(t1.is_finite() && phi0.is_finite() && phi1.is_finite()) {
            return Err(Error::InvalidInput("initial data must be finite".into()));
        }
        Ok(Self { t1, phi0, phi1 })
    }

    /// Initial data for the system variable `psi = p0 phi'`.
    pub fn psi(&self, eq: &EquationSpec<S>) -> Result<S> {
        Ok(eq.p_checked(self.t1, self.phi0)? * self.phi1)
    }
}

/// Envelope functions `P(t) > 0`, `Q(t)`, `R(t)`.
#[derive(Clone, Debug)]
pub struct BoundTriple<S> {
    pub p: TimeFunction<S>,
    pub q: TimeFunction<S>,
    pub r: TimeFunction<S>,
}

impl<S: Scalar> BoundTriple<S> {
    pub fn new(p: TimeFunction<S>, q: TimeFunction<S>, r: TimeFunction<S>) -> Self {
        Self { p, q, r }
    }

    pub fn constant(p: S, q: S, r: S) -> Self {
        Self::new(
            TimeFunction::constant("P", p),
            TimeFunction::constant("Q", q),
            TimeFunction::constant("R", r),
        )
    }

    /// Checks `P(t) > 0` at the given times.
    pub fn check_positive(&self, times: &[S]) -> Result<()> {
        for &t in times {
            let p = self.p.eval(t)?;
            if p <= S::zero() {
                return Err(Error::Domain(format!("P({t}) = {p} is not positive")));
            }
        }
        Ok(())
    }
}

/// Closed rectangle in `(t, w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Region<S> {
    pub t: (S, S),
    pub w: (S, S),
}

impl<S: Scalar> Region<S> {
    pub fn new(t: (S, S), w: (S, S)) -> Result<Self> {
        let ok = [t.0, t.1, w.0, w.1].iter().all(|x| x.is_finite()) && t.0 <= t.1 && w.0 <= w.1;
        if ok {
            Ok(Self { t, w })
        } else {
            Err(Error::InvalidInput("region must be a finite, ordered rectangle".into()))
        }
    }
}

/// Uniform sampling spec. `slack` is the tolerance applied to sampled inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub nt: usize,
    pub nw: usize,
    pub slack: f64,
}

pub const DEFAULT_GRID_POINTS: usize = 129;
pub const DEFAULT_SLACK: f64 = 1e-12;

impl Default for Grid {
    fn default() -> Self {
        Self {
            nt: DEFAULT_GRID_POINTS,
            nw: DEFAULT_GRID_POINTS,
            slack: DEFAULT_SLACK,
        }
    }
}

impl Grid {
    pub fn new(nt: usize, nw: usize) -> Self {
        Self {
            nt,
            nw,
            ..Self::default()
        }
    }

    /// Nested refinement: every old point stays a grid point.
    pub fn refined(&self) -> Self {
        Self {
            nt: 2 * self.nt - 1,
            nw: 2 * self.nw - 1,
            slack: self.slack,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt < 2 || self.nw < 2 {
            return Err(Error::InvalidInput("grid needs at least 2 points per axis".into()));
        }
        if !(self.slack >= 0.0) {
            return Err(Error::InvalidInput("grid slack must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `n` uniform points on `[lo, hi]`, endpoints exact.
pub fn linspace<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    if n <= 1 {
        return vec![lo];
    }
    let m = S::from_usize(n - 1).unwrap();
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * (S::from_usize(i).unwrap() / m)
            }
        })
        .collect()
}

/// State samples for a w-range; `w = 0` is always included when the range straddles it.
pub fn w_points<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    let mut ws = linspace(lo, hi, n);
    if lo < S::zero() && hi > S::zero() && !ws.iter().any(|w| w.is_zero()) {
        let pos = ws.iter().position(|&w| w > S::zero()).unwrap();
        ws.insert(pos, S::zero());
    }
    ws
}

/// True when `lhs <= rhs` fails by more than the slack (mixed absolute/relative).
#[inline]
pub fn violates_le<S: Scalar>(lhs: S, rhs: S, slack: f64) -> bool {
    let scale = S::one().max(lhs.abs()).max(rhs.abs());
    lhs - rhs > c::<S>(slack) * scale
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TagOutcome<S> {
    Holds,
    Falsified { t: S, w: S, value: S },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TagReport<S> {
    pub entries: Vec<(Tag, TagOutcome<S>)>,
}

impl<S: Scalar> TagReport<S> {
    pub fn outcome(&self, tag: Tag) -> Option<TagOutcome<S>> {
        self.entries.iter().find(|(t, _)| *t == tag).map(|(_, o)| *o)
    }

    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|(_, o)| *o == TagOutcome::Holds)
    }
}

/// First grid point (t ascending, then w ascending) where `pred(value)` fails.
fn first_sign_failure<S: Scalar>(
    field: &ScalarField<S>,
    ts: &[S],
    ws: &[S],
    fails: impl Fn(S) -> bool,
) -> Result<TagOutcome<S>> {
    for &t in ts {
        for &w in ws {
            let v = field.eval(t, w)?;
            if fails(v) {
                return Ok(TagOutcome::Falsified { t, w, value: v });
            }
        }
    }
    Ok(TagOutcome::Holds)
}

/// Checks even monotonicity: nonincreasing on `w <= 0`, nondecreasing on `w >= 0`.
/// A failure is reported at the point farther from zero of the offending pair.
pub fn check_even_monotone<S: Scalar>(
    field: &ScalarField<S>,
    ts: &[S],
    ws: &[S],
    slack: f64,
) -> Result<TagOutcome<S>> {
    for &t in ts {
        let vals = ws
            .iter()
            .map(|&w| field.eval(t, w))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..ws.len().saturating_sub(1) {
            let (w0, w1) = (ws[i], ws[i + 1]);
            if w0 >= S::zero() && violates_le(vals[i], vals[i + 1], slack) {
                return Ok(TagOutcome::Falsified { t, w: w1, value: vals[i + 1] });
            }
            if w1 <= S::zero() && violates_le(vals[i + 1], vals[i], slack) {
                return Ok(TagOutcome::Falsified { t, w: w0, value: vals[i] });
            }
        }
    }
    Ok(TagOutcome::Holds)
}

pub fn verify_structural_tags<S: Scalar>(
    field: &ScalarField<S>,
    region: &Region<S>,
    grid: &Grid,
) -> Result<TagReport<S>> {
    grid.validate()?;
    let ts = linspace(region.t.0, region.t.1, grid.nt);
    let ws = w_points(region.w.0, region.w.1, grid.nw);
    let tol = c::<S>(grid.slack);
    let mut entries = Vec::with_capacity(field.tags().len());
    for &tag in field.tags() {
        let outcome = match tag {
            Tag::Positive => first_sign_failure(field, &ts, &ws, |v| v <= S::zero())?,
            Tag::Nonnegative => first_sign_failure(field, &ts, &ws, |v| v < -tol)?,
            Tag::Nonpositive => first_sign_failure(field, &ts, &ws, |v| v > tol)?,
            Tag::MonotoneInWEven => check_even_monotone(field, &ts, &ws, grid.slack)?,
        };
        entries.push((tag, outcome));
    }
    Ok(TagReport { entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LipschitzEstimate<S> {
    Finite { constant: S },
    Unbounded { reason: LipschitzFlag },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzFlag {
    /// The region contains a declared singular value of `w`.
    DeclaredSingularity,
    /// The slope estimate kept growing under every refinement.
    GrowsUnderRefinement,
}

/// Each refinement must multiply the slope by at least this much to count as unbounded.
const LIPSCHITZ_GROWTH: f64 = 1.25;
const LIPSCHITZ_LEVELS: usize = 4;

fn max_slope<S: Scalar>(field: &ScalarField<S>, ts: &[S], ws: &[S]) -> Result<S> {
    let mut best = S::zero();
    for &t in ts {
        let mut prev = field.eval(t, ws[0])?;
        for k in 1..ws.len() {
            let cur = field.eval(t, ws[k])?;
            let dw = ws[k] - ws[k - 1];
            if dw > S::zero() {
                best = best.max((cur - prev).abs() / dw);
            }
            prev = cur;
        }
    }
    Ok(best)
}

/// Finite-difference Lipschitz constant in `w` with a refinement-based unboundedness flag.
pub fn lipschitz_estimate<S: Scalar>(
    field: &ScalarField<S>,
    region: &Region<S>,
    grid: &Grid,
) -> Result<LipschitzEstimate<S>> {
    grid.validate()?;
    if field
        .singular_w()
        .iter()
        .any(|&s| s >= region.w.0 && s <= region.w.1)
    {
        return Ok(LipschitzEstimate::Unbounded {
            reason: LipschitzFlag::DeclaredSingularity,
        });
    }
    let ts = linspace(region.t.0, region.t.1, grid.nt);
    let mut nw = grid.nw;
    let mut slopes = Vec::with_capacity(LIPSCHITZ_LEVELS);
    for _ in 0..LIPSCHITZ_LEVELS {
        let ws = linspace(region.w.0, region.w.1, nw);
        slopes.push(max_slope(field, &ts, &ws)?);
        nw = 2 * nw - 1;
    }
    let growth = c::<S>(LIPSCHITZ_GROWTH);
    let grows = slopes
        .windows(2)
        .all(|p| p[0] > S::zero() && p[1] >= growth * p[0]);
    if grows {
        Ok(LipschitzEstimate::Unbounded {
            reason: LipschitzFlag::GrowsUnderRefinement,
        })
    } else {
        Ok(LipschitzEstimate::Finite {
            constant: *slopes.last().unwrap(),
        })
    }
}

/// Guaranteed-existence interval length and the sampled maximum of the right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UniquenessInterval<S> {
    /// `min(delta, sqrt(M^2 + N^2) / M0)`.
    pub t2: S,
    /// Sampled maximum of `|(f1, f2)|`. A lower bound on the true maximum, so `t2` is an upper estimate.
    pub m0: S,
    pub argmax: (S, S, S),
}

/// `t2` on the box `|t - t1| <= delta` (clipped to `t >= t0`), `|u - phi0| <= M`, `|v - psi1| <= N`.
pub fn uniqueness_interval<S: Scalar>(
    eq: &EquationSpec<S>,
    ic: &InitialData<S>,
    delta: S,
    m: S,
    n: S,
    grid: &Grid,
) -> Result<UniquenessInterval<S>> {
    grid.validate()?;
    for (name, x) in [("delta", delta), ("M", m), ("N", n)] {
        if !(x > S::zero() && x.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be positive and finite")));
        }
    }
    let psi1 = ic.psi(eq)?;
    let ts = linspace((ic.t1 - delta).max(eq.t0()), ic.t1 + delta, grid.nt);
    let us = linspace(ic.phi0 - m, ic.phi0 + m, grid.nw);
    let vs = linspace(psi1 - n, psi1 + n, grid.nw);
    let mut m0 = S::zero();
    let mut argmax = (ic.t1, ic.phi0, psi1);
    for &t in &ts {
        for &u in &us {
            let p = eq.p_checked(t, u)?;
            let q = eq.q0().eval(t, u)?;
            let r = eq.r0().eval(t, u)?;
            for &v in &vs {
                let f1 = v / p;
                let f2 = -r * u - q / p * v;
                let norm = f1.hypot(f2);
                if norm > m0 {
                    m0 = norm;
                    argmax = (t, u, v);
                }
            }
        }
    }
    Ok(UniquenessInterval {
        t2: interval_from_bound(delta, m, n, m0),
        m0,
        argmax,
    })
}

pub(crate) fn interval_from_bound<S: Scalar>(delta: S, m: S, n: S, m0: S) -> S {
    if m0 <= S::zero() {
        delta
    } else {
        delta.min(m.hypot(n) / m0)
    }
}
