//! Integration of the system `phi' = psi / p0`, `psi' = -r0 phi - (q0 / p0) psi`
//! with dense output, zero events and finite-escape detection.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{EquationSpec, InitialData};
use crate::scalar::{c, Scalar};

// Dormand-Prince 5(4) coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// Step size control.
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

pub const DEFAULT_ESCAPE_THRESHOLD: f64 = 1e8;
pub const DEFAULT_MIN_STEP: f64 = 1e-11;
pub const DEFAULT_MAX_ZEROS: usize = 100_000;
pub const DEFAULT_MAX_STEPS: usize = 2_000_000;
/// Interior probes per step when scanning the interpolant for sign changes.
const ZERO_PROBES: usize = 8;

/// Continuous extension of one accepted step.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dense<S, const N: usize> {
    pub t0: S,
    pub h: S,
    rc: [[S; N]; 5],
}

impl<S: Scalar, const N: usize> Dense<S, N> {
    pub fn t1(&self) -> S {
        self.t0 + self.h
    }

    pub fn eval(&self, t: S) -> [S; N] {
        let th = (t - self.t0) / self.h;
        let th1 = S::one() - th;
        let mut out = [S::zero(); N];
        for i in 0..N {
            let r = &self.rc;
            out[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct StepControl<S> {
    pub rtol: S,
    pub atol: S,
    pub min_step: S,
    /// Trial states beyond this magnitude whose evaluation fails are rejected, not reported.
    pub reject_above: S,
}

pub(crate) enum Step<S, const N: usize> {
    Accepted(Dense<S, N>),
    Collapsed { t: S, h: S },
}

/// Adaptive Dormand-Prince stepper with PI control, generic in the state size.
pub(crate) struct Stepper<S, const N: usize, F> {
    f: F,
    t: S,
    y: [S; N],
    k1: [S; N],
    h: S,
    err_old: S,
    rejected_last: bool,
    ctl: StepControl<S>,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<S: Scalar, const N: usize>(y: &[S; N], h: S, terms: &[(f64, &[S; N])]) -> [S; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = S::zero();
        for (a, k) in terms {
            acc = acc + c::<S>(*a) * k[i];
        }
        out[i] = out[i] + h * acc;
    }
    out
}

impl<S, const N: usize, F> Stepper<S, N, F>
where
    S: Scalar,
    F: FnMut(S, &[S; N]) -> Result<[S; N]>,
{
    pub fn new(mut f: F, t: S, y: [S; N], ctl: StepControl<S>, span: S) -> Result<Self> {
        let k1 = f(t, &y)?;
        let h = initial_step(&mut f, t, &y, &k1, &ctl, span)?;
        Ok(Self {
            f,
            t,
            y,
            k1,
            h,
            err_old: c(1e-4),
            rejected_last: false,
            ctl,
            accepted: 0,
            rejected: 0,
        })
    }

    pub fn t(&self) -> S {
        self.t
    }

    pub fn y(&self) -> [S; N] {
        self.y
    }

    /// Stage evaluation. `Ok(None)` marks a trial that left the representable regime.
    fn stage(&mut self, t: S, y: &[S; N]) -> Result<Option<[S; N]>> {
        let wild = y.iter().any(|v| !v.is_finite() || v.abs() > self.ctl.reject_above);
        match (self.f)(t, y) {
            Ok(k) if k.iter().all(|v| v.is_finite()) => Ok(Some(k)),
            Ok(_) => Ok(None),
            Err(_) if wild => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn min_step(&self) -> S {
        self.ctl.min_step.max(S::epsilon() * c(16.0) * self.t.abs())
    }

    /// Attempts steps until one is accepted, the step collapses, or `t_end` is reached.
    pub fn advance(&mut self, t_end: S) -> Result<Step<S, N>> {
        loop {
            let remaining = t_end - self.t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h < self.min_step() && !last {
                return Ok(Step::Collapsed { t: self.t, h });
            }
            match self.trial(h)? {
                Some((y1, k7, err, k)) => {
                    let fac11 = err.powf(c(0.2 - 0.75 * BETA));
                    let mut fac = fac11 / self.err_old.powf(c(BETA));
                    fac = (fac / c(SAFETY)).min(c(1.0 / FAC_MIN)).max(c(1.0 / FAC_MAX));
                    if err <= S::one() {
                        let dense = self.dense(h, &y1, &k7, &k);
                        self.err_old = err.max(c(1e-4));
                        let mut hnew = h / fac;
                        if self.rejected_last {
                            hnew = hnew.min(h);
                        }
                        self.rejected_last = false;
                        self.t = if last { t_end } else { self.t + h };
                        self.y = y1;
                        self.k1 = k7;
                        if !last || hnew > self.h {
                            self.h = hnew;
                        }
                        self.accepted += 1;
                        return Ok(Step::Accepted(dense));
                    }
                    let shrink = (fac11 / c(SAFETY)).min(c(1.0 / FAC_MIN));
                    self.h = h / shrink;
                    self.rejected_last = true;
                    self.rejected += 1;
                }
                None => {
                    self.h = h * c(FAC_MIN);
                    self.rejected_last = true;
                    self.rejected += 1;
                }
            }
            if self.h < self.min_step() {
                return Ok(Step::Collapsed { t: self.t, h: self.h });
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn trial(&mut self, h: S) -> Result<Option<([S; N], [S; N], S, [[S; N]; 6])>> {
        let (t, y, k1) = (self.t, self.y, self.k1);
        macro_rules! stage {
            ($tt:expr, $yy:expr) => {
                match self.stage($tt, &$yy)? {
                    Some(k) => k,
                    None => return Ok(None),
                }
            };
        }
        let k2 = stage!(t + h * c(C2), axpy(&y, h, &[(A21, &k1)]));
        let k3 = stage!(t + h * c(C3), axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = stage!(
            t + h * c(C4),
            axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)])
        );
        let k5 = stage!(
            t + h * c(C5),
            axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)])
        );
        let k6 = stage!(
            t + h,
            axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)])
        );
        let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = stage!(t + h, y1);
        let e = axpy(
            &[S::zero(); N],
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let mut acc = S::zero();
        for i in 0..N {
            let sk = self.ctl.atol + self.ctl.rtol * y[i].abs().max(y1[i].abs());
            let r = e[i] / sk;
            acc = acc + r * r;
        }
        let err = (acc / S::from_usize(N).unwrap()).sqrt();
        if !err.is_finite() {
            return Ok(None);
        }
        Ok(Some((y1, k7, err, [k1, k2, k3, k4, k5, k6])))
    }

    fn dense(&self, h: S, y1: &[S; N], k7: &[S; N], k: &[[S; N]; 6]) -> Dense<S, N> {
        let y0 = self.y;
        let mut rc = [[S::zero(); N]; 5];
        for i in 0..N {
            let ydiff = y1[i] - y0[i];
            let bspl = h * k[0][i] - ydiff;
            rc[0][i] = y0[i];
            rc[1][i] = ydiff;
            rc[2][i] = bspl;
            rc[3][i] = ydiff - h * k7[i] - bspl;
            rc[4][i] = h
                * (c::<S>(D1) * k[0][i]
                    + c::<S>(D3) * k[2][i]
                    + c::<S>(D4) * k[3][i]
                    + c::<S>(D5) * k[4][i]
                    + c::<S>(D6) * k[5][i]
                    + c::<S>(D7) * k7[i]);
        }
        Dense { t0: self.t, h, rc }
    }
}

fn rms_scaled<S: Scalar, const N: usize>(v: &[S; N], y: &[S; N], ctl: &StepControl<S>) -> S {
    let mut acc = S::zero();
    for i in 0..N {
        let r = v[i] / (ctl.atol + ctl.rtol * y[i].abs());
        acc = acc + r * r;
    }
    (acc / S::from_usize(N).unwrap()).sqrt()
}

/// Starting step from the usual two-evaluation heuristic.
fn initial_step<S: Scalar, const N: usize>(
    f: &mut impl FnMut(S, &[S; N]) -> Result<[S; N]>,
    t: S,
    y: &[S; N],
    k1: &[S; N],
    ctl: &StepControl<S>,
    span: S,
) -> Result<S> {
    let d0 = rms_scaled(y, y, ctl);
    let d1 = rms_scaled(k1, y, ctl);
    let small = c::<S>(1e-10);
    let mut h0 = if d0 < small || d1 < small { c(1e-6) } else { c::<S>(0.01) * d0 / d1 };
    h0 = h0.min(span);
    let y1 = axpy(y, h0, &[(1.0, k1)]);
    let d2 = match f(t + h0, &y1) {
        Ok(k2) => {
            let mut diff = [S::zero(); N];
            for i in 0..N {
                diff[i] = k2[i] - k1[i];
            }
            rms_scaled(&diff, y, ctl) / h0
        }
        Err(_) => return Ok(h0 * c(1e-3)),
    };
    let m = d1.max(d2);
    let h1 = if m <= c(1e-15) {
        (h0 * c(1e-3)).max(c(1e-6))
    } else {
        (c::<S>(0.01) / m).powf(c(0.2))
    };
    Ok((h0 * c(100.0)).min(h1).min(span))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegrationOptions<S> {
    pub rel_tol: S,
    pub abs_tol: S,
    /// Absolute end time of the integration.
    pub horizon: S,
    pub escape_threshold: S,
    pub min_step: S,
    pub max_zeros: usize,
    pub zero_tol: S,
    pub max_steps: usize,
}

impl<S: Scalar> IntegrationOptions<S> {
    pub fn with_horizon(horizon: S) -> Self {
        Self {
            rel_tol: c::<S>(1e-10).max(S::tol_floor()),
            abs_tol: c::<S>(1e-12).max(S::tol_floor()),
            horizon,
            escape_threshold: c(DEFAULT_ESCAPE_THRESHOLD),
            min_step: c(DEFAULT_MIN_STEP),
            max_zeros: DEFAULT_MAX_ZEROS,
            zero_tol: c::<S>(1e-12).max(S::tol_floor()),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    /// Relative and absolute tolerance scaled by `factor`.
    pub fn scaled(&self, factor: S) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }

    fn validate(&self, start: S) -> Result<()> {
        let positive = [self.rel_tol, self.abs_tol, self.escape_threshold, self.min_step, self.zero_tol]
            .iter()
            .all(|&x| x > S::zero() && x.is_finite());
        if !positive {
            return Err(Error::InvalidInput("tolerances and thresholds must be positive".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > start) {
            return Err(Error::InvalidInput(format!(
                "horizon {} must exceed the start time {start}",
                self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeReason {
    /// Threshold exceeded and the step size then collapsed.
    StepCollapse,
    /// `|phi| + |psi|` reached the overflow guard of the scalar type.
    OverflowGuard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal<S> {
    ReachedHorizon { t: S },
    FiniteEscape { t: S, bracket: S, reason: EscapeReason },
    StepCollapse { t: S },
}

impl<S: Scalar> Terminal<S> {
    pub fn time(&self) -> S {
        match *self {
            Terminal::ReachedHorizon { t } | Terminal::StepCollapse { t } => t,
            Terminal::FiniteEscape { t, .. } => t,
        }
    }

    pub fn is_escape(&self) -> bool {
        matches!(self, Terminal::FiniteEscape { .. })
    }

    pub fn escape_time(&self) -> Option<S> {
        match *self {
            Terminal::FiniteEscape { t, .. } => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample<S> {
    pub t: S,
    pub phi: S,
    pub psi: S,
}

/// Dense numerical solution with events. Immutable once returned.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    eq: EquationSpec<S>,
    ic: InitialData<S>,
    opts: IntegrationOptions<S>,
    samples: Arc<[Sample<S>]>,
    segments: Arc<[Dense<S, 2>]>,
    zeros: Arc<[S]>,
    terminal: Terminal<S>,
    truncated: bool,
    first_touch: Option<S>,
    accepted: usize,
    rejected: usize,
}

fn sign<S: Scalar>(x: S) -> i8 {
    if x > S::zero() {
        1
    } else if x < S::zero() {
        -1
    } else {
        0
    }
}

struct ZeroScan<S> {
    prev_sign: i8,
    prev_t: S,
}

/// Integrates the system from `ic` until the horizon, an escape, or a step collapse.
pub fn integrate<S: Scalar>(
    eq: &EquationSpec<S>,
    ic: &InitialData<S>,
    opts: &IntegrationOptions<S>,
) -> Result<Trajectory<S>> {
    opts.validate(ic.t1)?;
    if ic.t1 < eq.t0() {
        return Err(Error::InvalidInput(format!(
            "initial time {} precedes t0 = {}",
            ic.t1,
            eq.t0()
        )));
    }
    let psi0 = ic.psi(eq)?;
    let guard = S::overflow_guard();
    let ctl = StepControl {
        rtol: opts.rel_tol,
        atol: opts.abs_tol,
        min_step: opts.min_step,
        reject_above: opts.escape_threshold,
    };
    let rhs = |t: S, y: &[S; 2]| eq.rhs(t, y[0], y[1]);
    let mut stepper = Stepper::new(rhs, ic.t1, [ic.phi0, psi0], ctl, opts.horizon - ic.t1)?;

    let mut samples = vec![Sample { t: ic.t1, phi: ic.phi0, psi: psi0 }];
    let mut segments: Vec<Dense<S, 2>> = Vec::new();
    let mut zeros: Vec<S> = Vec::new();
    let terminal;
    let mut truncated = false;
    let mut first_touch = None;
    if ic.phi0.abs() <= opts.zero_tol && psi0.abs() <= opts.zero_tol {
        first_touch = Some(ic.t1);
    }
    let initial_sign = match sign(ic.phi0) {
        0 => sign(psi0),
        s => s,
    };
    let mut scan = ZeroScan { prev_sign: initial_sign, prev_t: ic.t1 };
    let mut above = false;

    loop {
        if stepper.accepted + stepper.rejected > opts.max_steps {
            return Err(Error::StepBudget(opts.max_steps));
        }
        match stepper.advance(opts.horizon)? {
            Step::Collapsed { t, h } => {
                terminal = if above {
                    Terminal::FiniteEscape { t, bracket: h, reason: EscapeReason::StepCollapse }
                } else {
                    Terminal::StepCollapse { t }
                };
                break;
            }
            Step::Accepted(seg) => {
                let t = stepper.t();
                let [phi, psi] = stepper.y();
                segments.push(seg);
                samples.push(Sample { t, phi, psi });
                scan.scan(&seg, opts.zero_tol, &mut zeros);
                if phi.abs() <= opts.zero_tol && psi.abs() <= opts.zero_tol && first_touch.is_none() {
                    first_touch = Some(t);
                }
                if zeros.len() > opts.max_zeros {
                    zeros.truncate(opts.max_zeros);
                    truncated = true;
                    terminal = Terminal::ReachedHorizon { t };
                    break;
                }
                let size = phi.abs() + psi.abs();
                if size > opts.escape_threshold {
                    above = true;
                }
                if size > guard {
                    terminal = Terminal::FiniteEscape {
                        t,
                        bracket: seg.h,
                        reason: EscapeReason::OverflowGuard,
                    };
                    break;
                }
                if t >= opts.horizon {
                    terminal = Terminal::ReachedHorizon { t };
                    break;
                }
            }
        }
    }
    Ok(Trajectory {
        eq: eq.clone(),
        ic: *ic,
        opts: *opts,
        samples: samples.into(),
        segments: segments.into(),
        zeros: zeros.into(),
        terminal,
        truncated,
        first_touch,
        accepted: stepper.accepted,
        rejected: stepper.rejected,
    })
}

impl<S: Scalar> ZeroScan<S> {
    /// Scans the interpolant of one step for strict sign changes of `phi`.
    fn scan(&mut self, seg: &Dense<S, 2>, tol: S, zeros: &mut Vec<S>) {
        let n = S::from_usize(ZERO_PROBES).unwrap();
        for i in 1..=ZERO_PROBES {
            let t = if i == ZERO_PROBES {
                seg.t1()
            } else {
                seg.t0 + seg.h * (S::from_usize(i).unwrap() / n)
            };
            let phi = seg.eval(t)[0];
            let s = sign(phi);
            if s != 0 && self.prev_sign != 0 && s != self.prev_sign {
                let lo = self.prev_t.max(seg.t0);
                zeros.push(bisect(seg, lo, t, self.prev_sign, tol));
            }
            if s != 0 {
                self.prev_sign = s;
            }
            self.prev_t = t;
        }
    }
}

fn bisect<S: Scalar>(seg: &Dense<S, 2>, mut lo: S, mut hi: S, lo_sign: i8, tol: S) -> S {
    let phi = |t: S| seg.eval(t)[0];
    for _ in 0..200 {
        let mid = (lo + hi) * c(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = phi(mid);
        if f.abs() <= tol {
            return mid;
        }
        if sign(f) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if phi(lo).abs() <= phi(hi).abs() {
        lo
    } else {
        hi
    }
}

impl<S: Scalar> Trajectory<S> {
    pub fn equation(&self) -> &EquationSpec<S> {
        &self.eq
    }

    pub fn initial(&self) -> &InitialData<S> {
        &self.ic
    }

    pub fn options(&self) -> &IntegrationOptions<S> {
        &self.opts
    }

    pub fn samples(&self) -> &[Sample<S>] {
        &self.samples
    }

    pub fn zeros(&self) -> &[S] {
        &self.zeros
    }

    pub fn terminal(&self) -> Terminal<S> {
        self.terminal
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// First accepted time at which both `|phi|` and `|psi|` were within `zero_tol`.
    pub fn first_touch(&self) -> Option<S> {
        self.first_touch
    }

    pub fn zero_tol(&self) -> S {
        self.opts.zero_tol
    }

    pub fn start(&self) -> S {
        self.samples[0].t
    }

    pub fn end(&self) -> S {
        self.samples.last().unwrap().t
    }

    pub fn mesh(&self) -> Vec<S> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn step_counts(&self) -> (usize, usize) {
        (self.accepted, self.rejected)
    }

    /// `(phi, psi)` at `t` from the dense output.
    pub fn eval(&self, t: S) -> Option<[S; 2]> {
        if t < self.start() || t > self.end() || t.is_nan() {
            return None;
        }
        if self.segments.is_empty() {
            let s = self.samples[0];
            return Some([s.phi, s.psi]);
        }
        let k = self.segments.partition_point(|s| s.t0 <= t).saturating_sub(1);
        let seg = &self.segments[k];
        if t == seg.t1() {
            let s = self.samples[k + 1];
            return Some([s.phi, s.psi]);
        }
        Some(seg.eval(t))
    }

    pub fn phi(&self, t: S) -> Option<S> {
        self.eval(t).map(|y| y[0])
    }

    pub fn psi(&self, t: S) -> Option<S> {
        self.eval(t).map(|y| y[1])
    }

    /// `phi'(t) = psi / p0(t, phi)`.
    pub fn dphi(&self, t: S) -> Result<S> {
        let [phi, psi] = self
            .eval(t)
            .ok_or_else(|| Error::InvalidInput(format!("t = {t} outside the trajectory")))?;
        Ok(psi / self.eq.p_checked(t, phi)?)
    }

    /// Points `t0 + h * k / m` for `k = 1..m` inside every step, for scanning the interpolant.
    pub fn probe_times(&self, per_step: usize) -> Vec<S> {
        let mut out = vec![self.start()];
        let m = S::from_usize(per_step.max(1)).unwrap();
        for seg in self.segments.iter() {
            for k in 1..per_step {
                out.push(seg.t0 + seg.h * (S::from_usize(k).unwrap() / m));
            }
            out.push(seg.t1());
        }
        out
    }

    pub fn max_abs_phi(&self) -> S {
        self.samples.iter().fold(S::zero(), |m, s| m.max(s.phi.abs()))
    }

    /// Writes `t, phi, psi, y` with `y` empty where `|phi| <= zero_tol`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Output(format!("csv write failed: {e}"));
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "phi", "psi", "y"]).map_err(io)?;
        for s in self.samples.iter() {
            let y = if s.phi.abs() <= self.opts.zero_tol {
                String::new()
            } else {
                format!("{:.16e}", s.psi / s.phi)
            };
            out.write_record([
                format!("{:.16e}", s.t),
                format!("{:.16e}", s.phi),
                format!("{:.16e}", s.psi),
                y,
            ])
            .map_err(io)?;
        }
        out.flush()
            .map_err(|e| Error::Output(format!("csv flush failed: {e}")))
    }

    pub fn summary(&self) -> TrajectorySummary<S> {
        TrajectorySummary {
            initial: self.ic,
            start: self.start(),
            end: self.end(),
            terminal: self.terminal,
            zero_count: self.zeros.len(),
            zeros: self.zeros.to_vec(),
            truncated: self.truncated,
            first_touch: self.first_touch,
            accepted_steps: self.accepted,
            rejected_steps: self.rejected,
            options: self.opts,
        }
    }
}

/// JSON sidecar content for an exported trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySummary<S> {
    pub initial: InitialData<S>,
    pub start: S,
    pub end: S,
    pub terminal: Terminal<S>,
    pub zero_count: usize,
    pub zeros: Vec<S>,
    pub truncated: bool,
    pub first_touch: Option<S>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub options: IntegrationOptions<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RefineReport<S> {
    pub rel_tol: S,
    /// Max `|phi_tol - phi_tol/10|` on the common grid.
    pub discrepancy: S,
    pub common_end: S,
    pub grid_points: usize,
}

const REFINE_GRID: usize = 256;

/// Integrates at the given tolerance and a tenth of it and compares `phi` on a common grid.
pub fn refine_check<S: Scalar>(
    eq: &EquationSpec<S>,
    ic: &InitialData<S>,
    opts: &IntegrationOptions<S>,
) -> Result<RefineReport<S>> {
    let coarse = integrate(eq, ic, opts)?;
    let fine = integrate(eq, ic, &opts.scaled(c(0.1)))?;
    let end = coarse.end().min(fine.end());
    let ts = crate::field::linspace(ic.t1, end, REFINE_GRID);
    let mut d = S::zero();
    for &t in &ts {
        let (a, b) = (coarse.phi(t), fine.phi(t));
        if let (Some(a), Some(b)) = (a, b) {
            d = d.max((a - b).abs());
        }
    }
    Ok(RefineReport {
        rel_tol: opts.rel_tol,
        discrepancy: d,
        common_end: end,
        grid_points: ts.len(),
    })
}

/// Scalar Riccati-type solve used by the comparison equation.
pub(crate) fn solve_scalar<S: Scalar>(
    f: impl FnMut(S, &[S; 1]) -> Result<[S; 1]>,
    t1: S,
    y1: S,
    t2: S,
    ctl: StepControl<S>,
    max_steps: usize,
) -> Result<(Vec<Dense<S, 1>>, Terminal<S>)> {
    let mut stepper = Stepper::new(f, t1, [y1], ctl, t2 - t1)?;
    let mut segs = Vec::new();
    let mut above = false;
    loop {
        if stepper.accepted + stepper.rejected > max_steps {
            return Err(Error::StepBudget(max_steps));
        }
        match stepper.advance(t2)? {
            Step::Collapsed { t, h } => {
                let term = if above {
                    Terminal::FiniteEscape { t, bracket: h, reason: EscapeReason::StepCollapse }
                } else {
                    Terminal::StepCollapse { t }
                };
                return Ok((segs, term));
            }
            Step::Accepted(seg) => {
                segs.push(seg);
                let y = stepper.y()[0].abs();
                let t = stepper.t();
                above |= y > ctl.reject_above;
                if y > S::overflow_guard() {
                    let term = Terminal::FiniteEscape { t, bracket: seg.h, reason: EscapeReason::OverflowGuard };
                    return Ok((segs, term));
                }
                if t >= t2 {
                    return Ok((segs, Terminal::ReachedHorizon { t }));
                }
            }
        }
    }
}
