//! Adaptive Gauss-Kronrod quadrature, cached antiderivatives and the growth functionals.
//!
//! `I+_{u,v}(t1; t) = int_{t1}^t exp(-int_{t1}^tau v) / u(tau) dtau`
//! `I-_{v,x}(t1; t) = int_{t1}^t exp(-int_tau^t v) x(tau) dtau`

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{BoundTriple, TimeFunction};
use crate::scalar::{c, Scalar};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_PANELS: usize = 20_000;
pub const DEFAULT_OCTAVES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadOptions<S> {
    pub abs_tol: S,
    pub rel_tol: S,
    pub max_panels: usize,
}

impl<S: Scalar> Default for QuadOptions<S> {
    fn default() -> Self {
        Self {
            abs_tol: c::<S>(DEFAULT_ABS_TOL).max(S::tol_floor()),
            rel_tol: c::<S>(DEFAULT_REL_TOL).max(S::tol_floor()),
            max_panels: DEFAULT_MAX_PANELS,
        }
    }
}

impl<S: Scalar> QuadOptions<S> {
    pub fn with_tol(abs_tol: S, rel_tol: S) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.abs_tol > S::zero() && self.rel_tol >= S::zero() && self.max_panels > 0 {
            Ok(())
        } else {
            Err(Error::InvalidInput("quadrature tolerances must be positive".into()))
        }
    }
}

/// One Kronrod panel: `(estimate, error estimate)`.
pub(crate) fn gk15<S: Scalar>(f: &dyn Fn(S) -> Result<S>, a: S, b: S) -> Result<(S, S)> {
    let half = (b - a) * c(0.5);
    if half.is_zero() {
        return Ok((S::zero(), S::zero()));
    }
    let mid = (a + b) * c(0.5);
    let fc = f(mid)?;
    let mut kron = fc * c(WGK[7]);
    let mut gauss = fc * c(WG[3]);
    for j in 0..7 {
        let dx = half * c(XGK[j]);
        let s = f(mid - dx)? + f(mid + dx)?;
        kron = kron + s * c(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + s * c(WG[j / 2]);
        }
    }
    let est = kron * half;
    let err = ((kron - gauss) * half).abs();
    if est.is_finite() && err.is_finite() {
        Ok((est, err))
    } else {
        Err(Error::NonFinite {
            what: "quadrature panel".into(),
            t: mid.as_f64(),
            w: f64::NAN,
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Panel<S> {
    a: S,
    b: S,
    est: S,
    err: S,
}

struct Worst<S>(S, usize);

impl<S: PartialOrd> PartialEq for Worst<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: PartialOrd> Eq for Worst<S> {}
impl<S: PartialOrd> PartialOrd for Worst<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: PartialOrd> Ord for Worst<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .partial_cmp(&other.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Sorted, deduplicated breakpoints inside `[a, b]`, always containing both ends.
pub(crate) fn knots_between<S: Scalar>(a: S, b: S, breaks: &[S]) -> Vec<S> {
    let mut ks: Vec<S> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && x.is_finite())
        .collect();
    ks.push(a);
    ks.push(b);
    ks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ks.dedup();
    ks
}

/// Exponents larger than this across one panel get graded breakpoints.
const LAYER_EXPONENT: f64 = 4.0;

/// Breakpoints graded geometrically toward both ends of `[l, r]` when an exponential
/// weight changes by `exp(dv)` across it, so a boundary layer narrower than the
/// Kronrod node spacing is still resolved.
pub(crate) fn layer_breaks<S: Scalar>(l: S, r: S, dv: S) -> Vec<S> {
    let dv = dv.abs();
    if !(dv > c(LAYER_EXPONENT)) {
        return Vec::new();
    }
    let levels = (dv.log2().ceil().to_usize().unwrap_or(60) + 2).min(60);
    let mut out = Vec::with_capacity(2 * levels);
    let mut d = r - l;
    for _ in 0..levels {
        d = d * c(0.5);
        out.push(l + d);
        out.push(r - d);
    }
    out
}

/// Globally adaptive bisection. Returns the final panels ordered by position.
fn adapt<S: Scalar>(
    f: &dyn Fn(S) -> Result<S>,
    a: S,
    b: S,
    breaks: &[S],
    opts: &QuadOptions<S>,
) -> Result<Vec<Panel<S>>> {
    opts.validate()?;
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::InvalidInput(format!("bad integration range [{a}, {b}]")));
    }
    let ks = knots_between(a, b, breaks);
    let mut panels = Vec::with_capacity(ks.len());
    for w in ks.windows(2) {
        let (est, err) = gk15(f, w[0], w[1])?;
        panels.push(Panel { a: w[0], b: w[1], est, err });
    }
    let mut heap: BinaryHeap<Worst<S>> = panels
        .iter()
        .enumerate()
        .map(|(i, p)| Worst(p.err, i))
        .collect();
    let tiny = S::epsilon() * c(8.0);
    let mut err: S = panels.iter().map(|p| p.err).sum();
    let mut mag: S = panels.iter().map(|p| p.est.abs()).sum();
    for iter in 1usize.. {
        if iter % 64 == 0 {
            err = panels.iter().map(|p| p.err).sum();
            mag = panels.iter().map(|p| p.est.abs()).sum();
        }
        if err <= opts.abs_tol.max(opts.rel_tol * mag) {
            break;
        }
        if panels.len() >= opts.max_panels {
            return Err(Error::Tolerance {
                a: a.as_f64(),
                b: b.as_f64(),
                panels: panels.len(),
                estimate: err.as_f64(),
            });
        }
        let Some(Worst(_, i)) = heap.pop() else { break };
        let p = panels[i];
        let m = (p.a + p.b) * c(0.5);
        if p.b - p.a <= tiny * m.abs().max(S::one()) {
            // Cannot bisect further in this precision; accept the panel as is.
            panels[i].err = S::zero();
            err = err - p.err;
            continue;
        }
        let (e1, r1) = gk15(f, p.a, m)?;
        let (e2, r2) = gk15(f, m, p.b)?;
        err = err - p.err + r1 + r2;
        mag = mag - p.est.abs() + e1.abs() + e2.abs();
        panels[i] = Panel { a: p.a, b: m, est: e1, err: r1 };
        panels.push(Panel { a: m, b: p.b, est: e2, err: r2 });
        heap.push(Worst(r1, i));
        heap.push(Worst(r2, panels.len() - 1));
    }
    panels.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    Ok(panels)
}

/// Definite integral over `[a, b]` with optional initial breakpoints.
pub fn integrate<S: Scalar>(
    f: &dyn Fn(S) -> Result<S>,
    a: S,
    b: S,
    breaks: &[S],
    opts: &QuadOptions<S>,
) -> Result<S> {
    if a == b {
        return Ok(S::zero());
    }
    Ok(adapt(f, a, b, breaks, opts)?.iter().map(|p| p.est).sum())
}

type SharedFn<S> = Arc<dyn Fn(S) -> Result<S> + Send + Sync>;

/// Cached running integral `x -> int_a^x f` on an adaptive mesh.
#[derive(Clone)]
pub struct Antiderivative<S> {
    f: SharedFn<S>,
    knots: Vec<S>,
    cum: Vec<S>,
}

impl<S: Scalar> Antiderivative<S> {
    pub fn build(
        f: impl Fn(S) -> Result<S> + Send + Sync + 'static,
        a: S,
        b: S,
        breaks: &[S],
        opts: &QuadOptions<S>,
    ) -> Result<Self> {
        let f: SharedFn<S> = Arc::new(f);
        if a == b {
            return Ok(Self { f, knots: vec![a], cum: vec![S::zero()] });
        }
        let panels = adapt(f.as_ref(), a, b, breaks, opts)?;
        let mut knots = Vec::with_capacity(panels.len() + 1);
        let mut cum = Vec::with_capacity(panels.len() + 1);
        knots.push(a);
        cum.push(S::zero());
        let mut acc = S::zero();
        for p in &panels {
            acc = acc + p.est;
            knots.push(p.b);
            cum.push(acc);
        }
        Ok(Self { f, knots, cum })
    }

    pub fn start(&self) -> S {
        self.knots[0]
    }

    pub fn end(&self) -> S {
        *self.knots.last().unwrap()
    }

    pub fn knots(&self) -> &[S] {
        &self.knots
    }

    pub fn total(&self) -> S {
        *self.cum.last().unwrap()
    }

    fn locate(&self, x: S) -> Result<usize> {
        let (a, b) = (self.start(), self.end());
        let slack = S::epsilon() * c::<S>(64.0) * a.abs().max(b.abs()).max(S::one());
        if x < a - slack || x > b + slack || x.is_nan() {
            return Err(Error::InvalidInput(format!(
                "query {x} outside cached range [{a}, {b}]"
            )));
        }
        let k = self.knots.partition_point(|&k| k <= x);
        Ok(k.saturating_sub(1).min(self.knots.len() - 1))
    }

    /// `int_a^x f`.
    pub fn value_at(&self, x: S) -> Result<S> {
        let k = self.locate(x)?;
        let knot = self.knots[k];
        if x == knot {
            return Ok(self.cum[k]);
        }
        Ok(self.cum[k] + gk15(self.f.as_ref(), knot, x)?.0)
    }

    /// `int_x^y f`.
    pub fn between(&self, x: S, y: S) -> Result<S> {
        Ok(self.value_at(y)? - self.value_at(x)?)
    }
}

/// Running `z(t) = int_a^t exp(-int_tau^t v) x(tau) dtau`.
///
/// Between knots `z(k+1) = exp(-(V(k+1) - V(k))) z(k) + panel integral`, so
/// nothing of size `exp(V)` is ever formed.
#[derive(Clone)]
pub struct DecayingIntegral<S> {
    v: Arc<Antiderivative<S>>,
    x: SharedFn<S>,
    knots: Vec<S>,
    vals: Vec<S>,
    local: QuadOptions<S>,
}

impl<S: Scalar> DecayingIntegral<S> {
    pub fn build(
        v: Arc<Antiderivative<S>>,
        x: impl Fn(S) -> Result<S> + Send + Sync + 'static,
        breaks: &[S],
        opts: &QuadOptions<S>,
    ) -> Result<Self> {
        let (a, b) = (v.start(), v.end());
        let mut all = breaks.to_vec();
        all.extend_from_slice(v.knots());
        let knots = knots_between(a, b, &all);
        let panels = S::from_usize(knots.len()).unwrap();
        let local = QuadOptions {
            abs_tol: (opts.abs_tol / panels).max(S::tol_floor() * opts.abs_tol),
            ..*opts
        };
        let mut this = Self {
            v,
            x: Arc::new(x),
            knots: vec![a],
            vals: vec![S::zero()],
            local,
        };
        let mut z = S::zero();
        for w in knots.windows(2) {
            let decay = (-this.v.between(w[0], w[1])?).exp();
            z = decay * z + this.weighted(w[0], w[1])?;
            if !z.is_finite() {
                return Err(Error::Range(format!("decaying integral overflowed at t = {}", w[1])));
            }
            this.knots.push(w[1]);
            this.vals.push(z);
        }
        Ok(this)
    }

    /// `int_l^r exp(-int_tau^r v) x(tau) dtau` by nested adaptive quadrature.
    fn weighted(&self, l: S, r: S) -> Result<S> {
        let vr = self.v.value_at(r)?;
        let breaks = layer_breaks(l, r, vr - self.v.value_at(l)?);
        let v = &self.v;
        let x = &self.x;
        let g = move |tau: S| -> Result<S> { Ok((v.value_at(tau)? - vr).exp() * x(tau)?) };
        integrate(&g, l, r, &breaks, &self.local)
    }

    pub fn knots(&self) -> &[S] {
        &self.knots
    }

    pub fn start(&self) -> S {
        self.knots[0]
    }

    pub fn end(&self) -> S {
        *self.knots.last().unwrap()
    }

    pub fn value_at(&self, t: S) -> Result<S> {
        self.v.locate(t)?;
        let k = self.knots.partition_point(|&x| x <= t).saturating_sub(1);
        let k = k.min(self.knots.len() - 1);
        let knot = self.knots[k];
        if t == knot {
            return Ok(self.vals[k]);
        }
        let decay = (-self.v.between(knot, t)?).exp();
        Ok(decay * self.vals[k] + self.weighted(knot, t)?)
    }
}

/// `I+_{u,v}(t1; t)`.
pub fn i_plus<S: Scalar>(
    u: &TimeFunction<S>,
    v: &TimeFunction<S>,
    t1: S,
    t: S,
    opts: &QuadOptions<S>,
) -> Result<S> {
    check_order(t1, t)?;
    let vf = v.clone();
    let vint = Antiderivative::build(move |s| vf.eval(s), t1, t, &[], opts)?;
    let u = u.clone();
    let g = |s: S| -> Result<S> { Ok((-vint.value_at(s)?).exp() / positive(&u, s)?) };
    integrate(&g, t1, t, &weight_breaks(&vint)?, opts)
}

/// `I-_{v,x}(t1; t)`.
pub fn i_minus<S: Scalar>(
    v: &TimeFunction<S>,
    x: &TimeFunction<S>,
    t1: S,
    t: S,
    opts: &QuadOptions<S>,
) -> Result<S> {
    check_order(t1, t)?;
    let vf = v.clone();
    let vint = Arc::new(Antiderivative::build(move |s| vf.eval(s), t1, t, &[], opts)?);
    let x = x.clone();
    DecayingIntegral::build(vint, move |s| x.eval(s), &[], opts)?.value_at(t)
}

/// Mesh of `V` plus graded breakpoints inside every panel where `exp(-V)` varies sharply.
pub(crate) fn weight_breaks<S: Scalar>(v: &Antiderivative<S>) -> Result<Vec<S>> {
    let mut out = v.knots().to_vec();
    for (i, w) in v.knots().windows(2).enumerate() {
        out.extend(layer_breaks(w[0], w[1], v.cum[i + 1] - v.cum[i]));
    }
    Ok(out)
}

fn check_order<S: Scalar>(t1: S, t: S) -> Result<()> {
    if t1.is_finite() && t.is_finite() && t >= t1 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("need finite t >= t1, got t1 = {t1}, t = {t}")))
    }
}

fn positive<S: Scalar>(u: &TimeFunction<S>, t: S) -> Result<S> {
    let v = u.eval(t)?;
    if v > S::zero() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{} = {v} is not positive at t = {t}", u.name())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    F,
    G,
}

/// Precomputed `F(t1; t; c1; c2)` or `G_x(t1; t; c1; c2)` for `t` in `[t1, t_end]`.
#[derive(Clone)]
pub struct GrowthEnvelope<S> {
    kind: EnvelopeKind,
    c1: S,
    c2: S,
    iplus: Arc<Antiderivative<S>>,
    second: Arc<Antiderivative<S>>,
}

impl<S: std::fmt::Debug> std::fmt::Debug for GrowthEnvelope<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrowthEnvelope")
            .field("kind", &self.kind)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> GrowthEnvelope<S> {
    /// `|c1| exp{c2 I+_{P,Q}(t1;t) - int_{t1}^t I-_{Q,R}(t1;tau) dtau / P(tau)}`.
    pub fn f(b: &BoundTriple<S>, t1: S, t_end: S, c1: S, c2: S, opts: &QuadOptions<S>) -> Result<Self> {
        Self::check_args(t1, t_end, c1, c2)?;
        let qf = b.q.clone();
        let vq = Arc::new(Antiderivative::build(move |s| qf.eval(s), t1, t_end, &[], opts)?);
        let iplus = Self::iplus(&vq, &b.p, opts)?;
        let rf = b.r.clone();
        let dm = Arc::new(DecayingIntegral::build(vq, move |s| rf.eval(s), &[], opts)?);
        let p = b.p.clone();
        let breaks = dm.knots().to_vec();
        let second = Antiderivative::build(
            move |s| Ok(dm.value_at(s)? / positive(&p, s)?),
            t1,
            t_end,
            &breaks,
            opts,
        )?;
        Ok(Self {
            kind: EnvelopeKind::F,
            c1: c1.abs(),
            c2,
            iplus,
            second: Arc::new(second),
        })
    }

    /// `|c1| exp{c2 I+_{P,Q}(t1;t) + int_{t1}^t x / P}`. `R` of the triple is not used.
    pub fn g(
        b: &BoundTriple<S>,
        x: &TimeFunction<S>,
        t1: S,
        t_end: S,
        c1: S,
        c2: S,
        opts: &QuadOptions<S>,
    ) -> Result<Self> {
        Self::check_args(t1, t_end, c1, c2)?;
        let qf = b.q.clone();
        let vq = Arc::new(Antiderivative::build(move |s| qf.eval(s), t1, t_end, &[], opts)?);
        let iplus = Self::iplus(&vq, &b.p, opts)?;
        let (p, x) = (b.p.clone(), x.clone());
        let second = Antiderivative::build(
            move |s| Ok(x.eval(s)? / positive(&p, s)?),
            t1,
            t_end,
            vq.knots(),
            opts,
        )?;
        Ok(Self {
            kind: EnvelopeKind::G,
            c1: c1.abs(),
            c2,
            iplus,
            second: Arc::new(second),
        })
    }

    fn check_args(t1: S, t_end: S, c1: S, c2: S) -> Result<()> {
        check_order(t1, t_end)?;
        if c1.is_zero() || !c1.is_finite() || !c2.is_finite() {
            return Err(Error::InvalidInput("c1 must be nonzero and c1, c2 finite".into()));
        }
        Ok(())
    }

    fn iplus(vq: &Arc<Antiderivative<S>>, p: &TimeFunction<S>, opts: &QuadOptions<S>) -> Result<Arc<Antiderivative<S>>> {
        let (vq2, p) = (vq.clone(), p.clone());
        Ok(Arc::new(Antiderivative::build(
            move |s| Ok((-vq2.value_at(s)?).exp() / positive(&p, s)?),
            vq.start(),
            vq.end(),
            &weight_breaks(vq)?,
            opts,
        )?))
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    pub fn start(&self) -> S {
        self.iplus.start()
    }

    pub fn end(&self) -> S {
        self.iplus.end()
    }

    pub fn exponent(&self, t: S) -> Result<S> {
        let first = self.c2 * self.iplus.value_at(t)?;
        let second = self.second.value_at(t)?;
        Ok(match self.kind {
            EnvelopeKind::F => first - second,
            EnvelopeKind::G => first + second,
        })
    }

    pub fn eval(&self, t: S) -> Result<S> {
        let e = self.exponent(t)?;
        if e + self.c1.ln() >= S::max_value().ln() {
            return Err(Error::Range(format!("growth bound exponent {e} overflows at t = {t}")));
        }
        Ok(self.c1 * e.exp())
    }
}

/// `F(t1; t; c1; c2)`.
pub fn eval_f<S: Scalar>(b: &BoundTriple<S>, t1: S, t: S, c1: S, c2: S, opts: &QuadOptions<S>) -> Result<S> {
    GrowthEnvelope::f(b, t1, t, c1, c2, opts)?.eval(t)
}

/// `G_x(t1; t; c1; c2)`.
pub fn eval_g<S: Scalar>(
    b: &BoundTriple<S>,
    x: &TimeFunction<S>,
    t1: S,
    t: S,
    c1: S,
    c2: S,
    opts: &QuadOptions<S>,
) -> Result<S> {
    GrowthEnvelope::g(b, x, t1, t, c1, c2, opts)?.eval(t)
}

/// Running maximum `M(t) = max_{[t1, t]} f`, sampled on `n` points and exact at the query.
pub fn running_max<S: Scalar>(f: &TimeFunction<S>, t1: S, t_end: S, n: usize) -> Result<TimeFunction<S>> {
    check_order(t1, t_end)?;
    let ts = crate::field::linspace(t1, t_end, n.max(2));
    let mut acc = Vec::with_capacity(ts.len());
    let mut m = S::neg_infinity();
    for &t in &ts {
        m = m.max(f.eval(t)?);
        acc.push(m);
    }
    let f = f.clone();
    Ok(TimeFunction::new("M", move |t| {
        let k = ts.partition_point(|&s| s <= t);
        let prior = if k == 0 { S::neg_infinity() } else { acc[k - 1] };
        prior.max(f.raw(t))
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceStatus {
    Diverging,
    Converging,
    Inconclusive,
}

/// Geometric horizons `T_k = start * 2^k`, `k = 0..=octaves`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HorizonSpec<S> {
    pub start: Option<S>,
    pub octaves: usize,
}

impl<S> Default for HorizonSpec<S> {
    fn default() -> Self {
        Self {
            start: None,
            octaves: DEFAULT_OCTAVES,
        }
    }
}

/// Heuristic verdict on `int_{t0}^inf f`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceVerdict<S> {
    pub status: DivergenceStatus,
    /// `(T_k, int_{t0}^{T_k} f)`.
    pub horizons: Vec<(S, S)>,
    /// Octave increments `int_{T_k}^{2 T_k} f`.
    pub increments: Vec<S>,
    pub heuristic: bool,
}

const CONVERGING_RATIO: f64 = 0.5 + 1e-6;
const DIVERGING_MEAN_RATIO: f64 = 0.99;
const DIVERGING_LAST_RATIO: f64 = 0.9;
const RATIO_GROWTH_STEP: f64 = 1e-4;

pub fn divergence_probe<S: Scalar>(
    integrand: &TimeFunction<S>,
    t0: S,
    horizons: &HorizonSpec<S>,
    opts: &QuadOptions<S>,
) -> Result<DivergenceVerdict<S>> {
    if horizons.octaves < 2 {
        return Err(Error::InvalidInput("divergence probe needs at least 2 octaves".into()));
    }
    let start = horizons.start.unwrap_or_else(|| t0.max(S::one()));
    if !(start >= t0 && start > S::zero()) {
        return Err(Error::InvalidInput(format!("probe start {start} must be positive and >= t0")));
    }
    let ts: Vec<S> = (0..=horizons.octaves)
        .map(|k| start * c::<S>(2f64.powi(k as i32)))
        .collect();
    let end = *ts.last().unwrap();
    let f = integrand.clone();
    let tol = opts.abs_tol;
    let anti = Antiderivative::build(
        move |t| {
            let v = f.eval(t)?;
            if v < -tol {
                Err(Error::NegativeIntegrand { t: t.as_f64(), value: v.as_f64() })
            } else {
                Ok(v)
            }
        },
        t0,
        end,
        &ts,
        opts,
    )?;
    let partial = ts
        .iter()
        .map(|&t| Ok((t, anti.value_at(t)?)))
        .collect::<Result<Vec<_>>>()?;
    let increments: Vec<S> = partial.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let status = classify_increments(&increments, opts.abs_tol);
    Ok(DivergenceVerdict {
        status,
        horizons: partial,
        increments,
        heuristic: true,
    })
}

fn classify_increments<S: Scalar>(inc: &[S], floor: S) -> DivergenceStatus {
    if inc.iter().all(|&d| d <= floor) {
        return DivergenceStatus::Converging;
    }
    let tail = &inc[inc.len() / 2..];
    let ratios: Vec<S> = tail
        .windows(2)
        .map(|w| if w[0] <= floor { S::zero() } else { w[1] / w[0] })
        .collect();
    if ratios.is_empty() {
        return DivergenceStatus::Inconclusive;
    }
    if ratios.iter().all(|&r| r <= c(CONVERGING_RATIO)) {
        return DivergenceStatus::Converging;
    }
    let positive = ratios.iter().all(|&r| r > S::zero());
    if positive {
        let n = S::from_usize(ratios.len()).unwrap();
        let mean = (ratios.iter().map(|r| r.ln()).sum::<S>() / n).exp();
        if mean >= c(DIVERGING_MEAN_RATIO) {
            return DivergenceStatus::Diverging;
        }
        let increasing = ratios.windows(2).all(|w| w[1] - w[0] >= c(RATIO_GROWTH_STEP));
        if increasing && *ratios.last().unwrap() >= c(DIVERGING_LAST_RATIO) {
            return DivergenceStatus::Diverging;
        }
    }
    DivergenceStatus::Inconclusive
}
