//! Emden-Fowler and Van der Pol case studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cert::{
    check_t3_1, check_t3_3, check_t3_5, check_t3_6, Certificate, ComparisonFamily, Conclusion, T35Options, Theorem,
};
use crate::classify::{classify, ClassifyPolicy, Kind};
use crate::dynamics::{integrate, IntegrationOptions, Terminal, Trajectory};
use crate::error::{Error, Result};
use crate::field::{linspace, BoundTriple, EquationSpec, Grid, InitialData, Region, ScalarField, Tag, TimeFunction};
use crate::quad::QuadOptions;
use crate::scalar::{c, Scalar};

/// Which nonlinearity: `t^sigma phi^n` or `t^sigma |phi|^{n-1} phi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EfVariant {
    Signed,
    Absolute,
}

/// `(t^rho phi')' - t^sigma N(phi) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EfParams<S> {
    pub rho: S,
    pub sigma: S,
    pub n: S,
    pub variant: EfVariant,
}

impl<S: Scalar> EfParams<S> {
    pub fn new(rho: S, sigma: S, n: S, variant: EfVariant) -> Result<Self> {
        if !(n > S::one() && rho.is_finite() && sigma.is_finite() && n.is_finite()) {
            return Err(Error::Domain(format!("need finite rho, sigma and n > 1, got n = {n}")));
        }
        Ok(Self { rho, sigma, n, variant })
    }

    pub fn absolute(rho: S, sigma: S, n: S) -> Result<Self> {
        Self::new(rho, sigma, n, EfVariant::Absolute)
    }
}

/// `w^k` with integer powers taken exactly, so negative `w` is fine for integer `k`.
fn signed_pow<S: Scalar>(w: S, k: S) -> S {
    if k == k.round() && k.abs() < c(64.0) {
        w.powi(k.to_i32().unwrap())
    } else {
        w.powf(k)
    }
}

pub fn ef_equation<S: Scalar>(p: &EfParams<S>, t0: S) -> Result<EquationSpec<S>> {
    if !(t0 > S::zero()) {
        return Err(Error::Domain(format!("Emden-Fowler equations need t0 > 0, got {t0}")));
    }
    let EfParams { rho, sigma, n, variant } = *p;
    let p0 = ScalarField::new("t^rho", move |t: S, _| t.powf(rho)).with_tag(Tag::Positive);
    let q0 = ScalarField::constant("0", S::zero());
    let k = n - S::one();
    let r0 = match variant {
        EfVariant::Absolute => ScalarField::new("-t^sigma |w|^(n-1)", move |t: S, w: S| -t.powf(sigma) * w.abs().powf(k))
            .with_tag(Tag::Nonpositive),
        EfVariant::Signed => ScalarField::new("-t^sigma w^(n-1)", move |t: S, w: S| -t.powf(sigma) * signed_pow(w, k)),
    };
    EquationSpec::new(p0, q0, r0, t0)
}

/// Envelope triple `P = t^rho`, `Q = 0`, `R = -t^sigma`.
pub fn ef_bound_triple<S: Scalar>(p: &EfParams<S>) -> BoundTriple<S> {
    let (rho, sigma) = (p.rho, p.sigma);
    BoundTriple::new(
        TimeFunction::new("t^rho", move |t: S| t.powf(rho)),
        TimeFunction::constant("0", S::zero()),
        TimeFunction::new("-t^sigma", move |t: S| -t.powf(sigma)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EfCase {
    /// `-1 < sigma < rho - 2` and `A < 1`.
    BoundA,
    /// `sigma < -1` and `B < 1`.
    BoundB,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EfBounds<S> {
    pub a: Option<S>,
    pub b: Option<S>,
    pub case: EfCase,
}

/// Closed-form uniform bounds `A` (for `-1 < sigma < rho - 2`) and `B` (for `sigma < -1`)
/// of `F(t0; t; c1; c2)` with the Emden-Fowler envelope triple. For `rho - 2 <= sigma`
/// the double integral in `F` diverges, so no uniform `A` exists.
pub fn ef_bounds_a_b<S: Scalar>(p: &EfParams<S>, t0: S, c1: S, c2: S) -> Result<EfBounds<S>> {
    let (rho, sigma) = (p.rho, p.sigma);
    let one = S::one();
    if !(rho > one) {
        return Err(Error::Domain(format!("closed-form bounds need rho > 1, got {rho}")));
    }
    if !(t0 > S::zero()) {
        return Err(Error::Domain(format!("need t0 > 0, got {t0}")));
    }
    let k = rho - one;
    let lead = c2 / k * t0.powf(one - rho);
    let tail = t0.powf(sigma + c::<S>(2.0) - rho);
    let a = (sigma > -one && sigma < rho - c::<S>(2.0))
        .then(|| c1.abs() * (lead - tail / ((sigma + one) * (sigma + c::<S>(2.0) - rho))).exp());
    let b = (sigma < -one).then(|| c1.abs() * (lead - tail / ((sigma + one) * k)).exp());
    let case = if a.is_some_and(|a| a < one) {
        EfCase::BoundA
    } else if b.is_some_and(|b| b < one) {
        EfCase::BoundB
    } else {
        EfCase::Neither
    };
    Ok(EfBounds { a, b, case })
}

/// Power-law solution `phi_B(t) = K t^e` of the `rho = 0` equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KneserSolution<S> {
    pub coefficient: S,
    pub exponent: S,
}

impl<S: Scalar> KneserSolution<S> {
    pub fn phi(&self, t: S) -> S {
        self.coefficient * t.powf(self.exponent)
    }

    pub fn dphi(&self, t: S) -> S {
        self.coefficient * self.exponent * t.powf(self.exponent - S::one())
    }

    /// `p phi_B' / phi_B` with `p = 1`.
    pub fn y(&self, t: S) -> S {
        self.exponent / t
    }

    /// Residual of `phi'' - t^sigma |phi|^{n-1} phi` at `t`, relative to the size of `phi''`.
    pub fn residual(&self, p: &EfParams<S>, t: S) -> S {
        let e = self.exponent;
        let d2 = self.coefficient * e * (e - S::one()) * t.powf(e - c(2.0));
        let phi = self.phi(t);
        let rhs = t.powf(p.sigma) * phi.abs().powf(p.n - S::one()) * phi;
        (d2 - rhs).abs() / S::one().max(d2.abs())
    }
}

pub fn kneser_solution<S: Scalar>(p: &EfParams<S>) -> Result<KneserSolution<S>> {
    let (sigma, n) = (p.sigma, p.n);
    if p.rho != S::zero() || !(sigma + n + S::one() < S::zero()) {
        return Err(Error::Domain(format!(
            "power-law solution needs rho = 0 and sigma + n + 1 < 0, got rho = {}, sigma + n + 1 = {}",
            p.rho,
            sigma + n + S::one()
        )));
    }
    let k = n - S::one();
    let base = (sigma + c(2.0)) * (sigma + n + S::one()) / (k * k);
    Ok(KneserSolution { coefficient: base.powf(k.recip()), exponent: -(sigma + c(2.0)) / k })
}

/// Change of variables taking the `rho != 1` equation to `psi'' = s^sigma1 |psi|^{n-1} psi`.
///
/// For `rho > 1`: `s = t^{rho-1} / (rho-1)`, `phi = C psi / s` with
/// `C^{n-1} = (rho-1)^{(3 rho - sigma - 4) / (rho-1)}`.
/// For `rho < 1`: `s = t^{1-rho} / (1-rho)`, `phi = C psi` with
/// `C = (1-rho)^{-(sigma+rho) / ((n-1)(1-rho))}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EfTransform<S> {
    pub rho: S,
    pub sigma: S,
    pub n: S,
    pub sigma1: S,
    pub scale: S,
}

pub fn ef_transform<S: Scalar>(p: &EfParams<S>) -> Result<EfTransform<S>> {
    let (rho, sigma, n) = (p.rho, p.sigma, p.n);
    let one = S::one();
    let k = n - one;
    let (sigma1, scale) = if rho > one {
        let m = rho - one;
        let s1 = (sigma + rho) / m - (n + c(3.0));
        let log_c = (c::<S>(3.0) * rho - sigma - c(4.0)) / m * m.ln() / k;
        (s1, log_c.exp())
    } else if rho < one {
        let m = one - rho;
        ((sigma + rho) / m, (-(sigma + rho) / (k * m) * m.ln()).exp())
    } else {
        return Err(Error::Domain("the transformation is undefined for rho = 1".into()));
    };
    Ok(EfTransform { rho, sigma, n, sigma1, scale })
}

impl<S: Scalar> EfTransform<S> {
    fn m(&self) -> S {
        (self.rho - S::one()).abs()
    }

    fn upper(&self) -> bool {
        self.rho > S::one()
    }

    /// `s = t^m / m` with `m = |rho - 1|` on both branches.
    pub fn s_of_t(&self, t: S) -> S {
        let m = self.m();
        t.powf(m) / m
    }

    pub fn t_of_s(&self, s: S) -> S {
        let m = self.m();
        (m * s).powf(m.recip())
    }

    /// `(t, phi, phi') -> (s, psi, dpsi/ds)`.
    pub fn forward(&self, t: S, phi: S, dphi: S) -> (S, S, S) {
        let s = self.s_of_t(t);
        let flux = t.powf(self.rho) * dphi;
        if self.upper() {
            let m = self.m();
            let psi = phi * s / self.scale;
            (s, psi, (flux / (self.scale * m * m) + psi) / s)
        } else {
            (s, phi / self.scale, flux / self.scale)
        }
    }

    /// `(s, psi, dpsi/ds) -> (t, phi, phi')`.
    pub fn inverse(&self, s: S, psi: S, dpsi: S) -> (S, S, S) {
        let t = self.t_of_s(s);
        let rho_t = t.powf(self.rho);
        if self.upper() {
            let m = self.m();
            let phi = self.scale * psi / s;
            (t, phi, self.scale * m * m * (dpsi * s - psi) / rho_t)
        } else {
            (t, self.scale * psi, self.scale * dpsi / rho_t)
        }
    }

    /// The transformed equation `psi'' - s^sigma1 |psi|^{n-1} psi = 0` starting at `s0`.
    pub fn target_equation(&self, s0: S) -> Result<EquationSpec<S>> {
        ef_equation(&EfParams::absolute(S::zero(), self.sigma1, self.n)?, s0)
    }
}

/// Parameter regions of the Emden-Fowler assertions.
pub mod regions {
    use super::*;

    /// The power-law majorant exists: `rho = 0`, `sigma + n + 1 < 0`.
    pub fn kneser<S: Scalar>(p: &EfParams<S>) -> bool {
        p.rho == S::zero() && p.sigma + p.n + S::one() < S::zero()
    }

    /// A two-parameter family of global solutions: `rho > max(1, sigma + 2)` or
    /// `(sigma + 1) / n + 1 < rho < 1`. Both are `sigma1 + n + 1 < 0` after the transformation.
    pub fn two_parameter_family<S: Scalar>(p: &EfParams<S>) -> bool {
        let one = S::one();
        (p.rho > one && p.rho > p.sigma + c(2.0)) || ((p.sigma + one) / p.n + one < p.rho && p.rho < one)
    }

    /// The zero solution is conditionally stable: `rho > 1`, `sigma < -1`.
    pub fn conditionally_stable<S: Scalar>(p: &EfParams<S>) -> bool {
        p.rho > S::one() && p.sigma < -S::one()
    }
}

fn stability_domain<S: Scalar>(p: &EfParams<S>, t0: S) -> Result<()> {
    if !regions::conditionally_stable(p) || !(t0 > S::zero()) {
        return Err(Error::Domain(format!(
            "conditional stability needs rho > 1, sigma < -1 and t0 > 0, got rho = {}, sigma = {}, t0 = {t0}",
            p.rho, p.sigma
        )));
    }
    Ok(())
}

/// Upper end of the admissible `phi(t0)` on the stable manifold (with `phi'(t0) = 0`).
pub fn stable_manifold_top<S: Scalar>(p: &EfParams<S>, t0: S) -> Result<S> {
    stability_domain(p, t0)?;
    let one = S::one();
    Ok((t0.powf(p.sigma + c(2.0) - p.rho) / ((p.sigma + one) * (p.rho - one))).exp())
}

pub fn conditional_stability_delta<S: Scalar>(p: &EfParams<S>, t0: S, eps: S) -> Result<S> {
    stability_domain(p, t0)?;
    if !(eps > S::zero()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let one = S::one();
    let sigma = p.sigma;
    let lin = one - t0.powf(sigma + one) / (sigma + one);
    Ok(eps / c(2.0) / lin * stable_manifold_top(p, t0)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityCase<S> {
    pub phi0: S,
    /// Largest sampled `|phi| + |t^rho phi'|`.
    pub sup: S,
    pub terminal: Terminal<S>,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport<S> {
    pub delta: S,
    pub eps: S,
    pub cases: Vec<StabilityCase<S>>,
    pub all_within: bool,
}

fn sup_phase<S: Scalar>(tr: &Trajectory<S>) -> S {
    let mut sup = S::zero();
    for s in tr.samples() {
        sup = sup.max(s.phi.abs() + s.psi.abs());
    }
    for t in tr.probe_times(4) {
        if let Some([phi, psi]) = tr.eval(t) {
            sup = sup.max(phi.abs() + psi.abs());
        }
    }
    sup
}

/// Starts `count` solutions on the stable manifold at `phi(t0) = delta (i + 1) / (count + 1)`,
/// `phi'(t0) = 0`, and records `sup |phi| + |t^rho phi'|` up to `horizon`.
pub fn conditional_stability_experiment<S: Scalar>(
    p: &EfParams<S>,
    t0: S,
    eps: S,
    count: usize,
    horizon: S,
) -> Result<StabilityReport<S>> {
    let delta = conditional_stability_delta(p, t0, eps)?;
    let eq = ef_equation(p, t0)?;
    let opts = IntegrationOptions::with_horizon(horizon);
    let denom = S::from_usize(count + 1).unwrap();
    let cases = (0..count)
        .into_par_iter()
        .map(|i| {
            let phi0 = delta * S::from_usize(i + 1).unwrap() / denom;
            let tr = integrate(&eq, &InitialData::new(t0, phi0, S::zero())?, &opts)?;
            let sup = sup_phase(&tr);
            let reached = matches!(tr.terminal(), Terminal::ReachedHorizon { .. });
            Ok(StabilityCase { phi0, sup, terminal: tr.terminal(), within: reached && sup < eps })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_within = cases.iter().all(|c| c.within);
    Ok(StabilityReport { delta, eps, cases, all_within })
}

/// Global existence certificate for the Emden-Fowler equation with the `F` envelope.
/// When the closed-form case holds, `uniform_bound` is the closed-form `A` or `B`.
pub fn ef_certify_t3_1<S: Scalar>(
    p: &EfParams<S>,
    ic: &InitialData<S>,
    horizon: S,
    grid: &Grid,
    quad: &QuadOptions<S>,
) -> Result<(Certificate<S>, Option<EfBounds<S>>)> {
    let eq = ef_equation(p, ic.t1)?;
    let mut cert = check_t3_1(&eq, ic, &ef_bound_triple(p), None, horizon, grid, quad)?;
    let bounds = if p.rho > S::one() && ic.phi0 != S::zero() {
        let c2 = ic.t1.powf(p.rho) * ic.phi1 / ic.phi0;
        Some(ef_bounds_a_b(p, ic.t1, ic.phi0, c2)?)
    } else {
        None
    };
    if cert.status.is_verified() {
        match bounds.map(|b| (b.case, b)) {
            Some((EfCase::BoundA, b)) => cert.uniform_bound = b.a,
            Some((EfCase::BoundB, b)) => cert.uniform_bound = b.b,
            _ => {}
        }
    }
    Ok((cert, bounds))
}

/// Comparison certificate for `rho = 0` against the power-law solution.
/// The majorant is integrated numerically from the exact values at `ic0.t1`.
pub fn ef_certify_t3_3<S: Scalar>(
    p: &EfParams<S>,
    ic0: &InitialData<S>,
    horizon: S,
    w_max: S,
    grid: &Grid,
) -> Result<(Certificate<S>, Trajectory<S>)> {
    let kn = kneser_solution(p)?;
    let t0 = ic0.t1;
    let eq = ef_equation(p, t0)?;
    let opts = IntegrationOptions::with_horizon(horizon);
    let major = integrate(&eq, &InitialData::new(t0, kn.phi(t0), kn.dphi(t0))?, &opts)?;
    let region = Region::new((t0, horizon), (-w_max, w_max))?;
    let cert = check_t3_3(&eq, &eq, &major, ic0, &region, grid)?;
    Ok((cert, major))
}

/// `(lambda phi')' + mu (phi^2 - 1) phi' + nu phi = 0`.
#[derive(Clone, Debug)]
pub struct VdpParams<S> {
    pub lambda: TimeFunction<S>,
    pub mu: TimeFunction<S>,
    pub nu: TimeFunction<S>,
}

impl<S: Scalar> VdpParams<S> {
    pub fn constant(lambda: S, mu: S, nu: S) -> Self {
        Self {
            lambda: TimeFunction::constant("lambda", lambda),
            mu: TimeFunction::constant("mu", mu),
            nu: TimeFunction::constant("nu", nu),
        }
    }
}

/// Sample count for the sign checks of the coefficients.
const VDP_SIGN_SAMPLES: usize = 129;

/// Builds the equation after checking `lambda > 0`, `mu >= 0`, `nu >= 0` on `[t0, t_check]`.
pub fn vdp_equation<S: Scalar>(v: &VdpParams<S>, t0: S, t_check: S) -> Result<EquationSpec<S>> {
    for t in linspace(t0, t_check.max(t0), VDP_SIGN_SAMPLES) {
        let (l, m, n) = (v.lambda.eval(t)?, v.mu.eval(t)?, v.nu.eval(t)?);
        if !(l > S::zero() && m >= S::zero() && n >= S::zero()) {
            return Err(Error::Domain(format!(
                "need lambda > 0, mu >= 0, nu >= 0; got {l}, {m}, {n} at t = {t}"
            )));
        }
    }
    let mu = v.mu.clone();
    EquationSpec::new(
        ScalarField::of_time("lambda", v.lambda.clone()),
        ScalarField::new("mu (w^2 - 1)", move |t, w| mu.raw(t) * (w * w - S::one())),
        ScalarField::of_time("nu", v.nu.clone()),
        t0,
    )
}

/// Comparison family `p_e = lambda`, `q_e = mu (e^2 - 1)`, `r_e = nu`.
pub fn vdp_family<S: Scalar>(v: &VdpParams<S>) -> ComparisonFamily<S> {
    let (l, m, n) = (v.lambda.clone(), v.mu.clone(), v.nu.clone());
    ComparisonFamily::new(
        move |_, t| l.raw(t),
        move |e: S, t| m.raw(t) * (e * e - S::one()),
        move |_, t| n.raw(t),
    )
}

/// `P = lambda`, `Q = 0`. `R` plays no role in the oscillation check and is set to `0`.
pub fn vdp_bound_triple<S: Scalar>(v: &VdpParams<S>) -> BoundTriple<S> {
    BoundTriple::new(v.lambda.clone(), TimeFunction::constant("0", S::zero()), TimeFunction::constant("0", S::zero()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T42Options<S> {
    pub t_end: S,
    pub w_max: S,
    pub grid: Grid,
    pub oscillation: T35Options<S>,
}

impl<S: Scalar> T42Options<S> {
    pub fn new(t0: S) -> Self {
        Self {
            t_end: t0 + c(100.0),
            w_max: c(10.0),
            grid: Grid::default(),
            oscillation: T35Options::new(S::one(), S::one()),
        }
    }
}

/// Global existence part followed by the oscillation part with `N = 1`.
pub fn check_t4_2<S: Scalar>(v: &VdpParams<S>, t0: S, opts: &T42Options<S>) -> Result<Certificate<S>> {
    let eq = vdp_equation(v, t0, opts.t_end)?;
    let region = Region::new((t0, opts.t_end), (-opts.w_max, opts.w_max))?;
    let global = check_t3_6(&eq, &region, &opts.grid)?;
    let osc = check_t3_5(&eq, &vdp_bound_triple(v), &vdp_family(v), &region, &opts.grid, &opts.oscillation)?;
    Ok(Certificate::aggregate(
        Theorem::T4_2,
        vec![global, osc],
        vec![Conclusion::GlobalForAllIc, Conclusion::Oscillatory],
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VdpRun<S> {
    pub phi0: S,
    pub dphi0: S,
    pub terminal: Terminal<S>,
    pub zeros: usize,
    pub kind: Kind,
}

/// Integrates `count` solutions from initial data drawn uniformly from `[-half, half]^2`.
pub fn vdp_experiment<S: Scalar>(
    v: &VdpParams<S>,
    t0: S,
    count: usize,
    half: S,
    horizon: S,
    seed: u64,
) -> Result<Vec<VdpRun<S>>> {
    let eq = vdp_equation(v, t0, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = half.as_f64();
    let ics: Vec<(S, S)> = (0..count)
        .map(|_| (c(rng.gen_range(-h..=h)), c(rng.gen_range(-h..=h))))
        .collect();
    let opts = IntegrationOptions::with_horizon(horizon);
    let policy = ClassifyPolicy::default();
    ics.into_par_iter()
        .map(|(phi0, dphi0)| {
            let tr = integrate(&eq, &InitialData::new(t0, phi0, dphi0)?, &opts)?;
            Ok(VdpRun {
                phi0,
                dphi0,
                terminal: tr.terminal(),
                zeros: tr.zeros().len(),
                kind: classify(&tr, &policy).kind,
            })
        })
        .collect()
}
