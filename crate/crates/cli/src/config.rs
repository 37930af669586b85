//! Run configuration: JSON with a versioned `schema` field, unknown keys rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rcert_core::apps::{EfParams, EfVariant, VdpParams};
use rcert_core::cert::ComparisonFamily;
use rcert_core::field::{BoundTriple, EquationSpec, Grid, InitialData, Region, ScalarField, TimeFunction};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA: &str = "rcert.config/1";

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    /// Optional consistency check against the command line, e.g. `"certify t3_1"`.
    #[serde(default)]
    pub command: Option<String>,
    pub equation: EquationConfig,
    /// `[t1, phi(t1), phi'(t1)]`.
    #[serde(default)]
    pub ic: Option<[f64; 3]>,
    /// Absolute end time. Defaults to `t0 + 50`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub q_tilde: Option<TermList>,
    #[serde(default)]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub oscillation: Option<OscillationConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EquationConfig {
    /// `(p0 phi')' + q0 phi' + r0 phi = 0` with coefficients given as sums of terms.
    Fields { t0: f64, p0: TermList, q0: TermList, r0: TermList },
    EmdenFowler {
        t0: f64,
        rho: f64,
        sigma: f64,
        n: f64,
        #[serde(default)]
        variant: VariantConfig,
    },
    VanDerPol { t0: f64, lambda: TermList, mu: TermList, nu: TermList },
}

#[derive(Debug, Default, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantConfig {
    #[default]
    Absolute,
    Signed,
}

/// A coefficient: either a constant or a sum of terms.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TermList {
    Constant(f64),
    Terms(Vec<Term>),
}

/// `c * t^t * e^e * exp(exp * t) * w^w`, with `|w|^w` when `abs` is set.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub c: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub w: f64,
    #[serde(default)]
    pub abs: bool,
    #[serde(default)]
    pub exp: f64,
    #[serde(default)]
    pub e: f64,
}

fn pow(x: f64, k: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else if k == k.round() && k.abs() < 64.0 {
        x.powi(k as i32)
    } else {
        x.powf(k)
    }
}

impl Term {
    fn eval(&self, e: f64, t: f64, w: f64) -> f64 {
        let wv = if self.abs { w.abs() } else { w };
        let mut v = self.c * pow(t, self.t) * pow(wv, self.w) * pow(e, self.e);
        if self.exp != 0.0 {
            v *= (self.exp * t).exp();
        }
        v
    }
}

impl TermList {
    fn terms(&self) -> Vec<Term> {
        match self {
            TermList::Constant(c) => vec![Term { c: *c, t: 0.0, w: 0.0, abs: false, exp: 0.0, e: 0.0 }],
            TermList::Terms(ts) => ts.clone(),
        }
    }

    fn eval(terms: &[Term], e: f64, t: f64, w: f64) -> f64 {
        terms.iter().map(|k| k.eval(e, t, w)).sum()
    }

    fn check(&self, what: &str, state: bool, eps: bool) -> Result<Vec<Term>> {
        let terms = self.terms();
        for k in &terms {
            if !state && (k.w != 0.0 || k.abs) {
                bail!("{what} may not depend on w");
            }
            if !eps && k.e != 0.0 {
                bail!("{what} may not depend on e");
            }
        }
        Ok(terms)
    }

    pub fn field(&self, name: &str) -> Result<ScalarField<f64>> {
        let terms = self.check(name, true, false)?;
        Ok(ScalarField::new(name, move |t, w| Self::eval(&terms, 0.0, t, w)))
    }

    pub fn time(&self, name: &str) -> Result<TimeFunction<f64>> {
        let terms = self.check(name, false, false)?;
        Ok(TimeFunction::new(name, move |t| Self::eval(&terms, 0.0, t, 0.0)))
    }

    fn family(&self, name: &str) -> Result<impl Fn(f64, f64) -> f64 + Send + Sync + 'static> {
        let terms = self.check(name, false, true)?;
        Ok(move |e, t| Self::eval(&terms, e, t, 0.0))
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub escape_threshold: Option<f64>,
    #[serde(default)]
    pub max_zeros: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nt: usize,
    pub nw: usize,
    #[serde(default)]
    pub slack: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub t: [f64; 2],
    pub w: [f64; 2],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub p: TermList,
    pub q: TermList,
    pub r: TermList,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    /// Equation of the majorant; the main equation when absent.
    #[serde(default)]
    pub equation: Option<EquationConfig>,
    /// `[phi1(t1), phi1'(t1)]` at the time of `ic`.
    pub ic: [f64; 2],
}

/// Coefficients of the comparison family as functions of `(e, t)`.
#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub p: TermList,
    pub q: TermList,
    pub r: TermList,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationConfig {
    pub n: f64,
    pub eps0: f64,
    #[serde(default)]
    pub eps_fractions: Option<Vec<f64>>,
    #[serde(default)]
    pub large_multiples: Option<Vec<f64>>,
    #[serde(default)]
    pub span: Option<f64>,
    #[serde(default)]
    pub min_zeros: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub phi: [f64; 2],
    pub dphi: [f64; 2],
    pub resolution: [usize; 2],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub eps: f64,
    pub count: usize,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub count: usize,
    pub half_width: f64,
    pub seed: u64,
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("config error at `{path}`: {}", e.into_inner())
    })?;
    if cfg.schema != CONFIG_SCHEMA {
        bail!("config error at `schema`: expected \"{CONFIG_SCHEMA}\", got \"{}\"", cfg.schema);
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text)
}

impl EquationConfig {
    pub fn t0(&self) -> f64 {
        match self {
            EquationConfig::Fields { t0, .. }
            | EquationConfig::EmdenFowler { t0, .. }
            | EquationConfig::VanDerPol { t0, .. } => *t0,
        }
    }

    pub fn ef_params(&self) -> Option<Result<EfParams<f64>>> {
        match *self {
            EquationConfig::EmdenFowler { rho, sigma, n, variant, .. } => {
                let v = match variant {
                    VariantConfig::Absolute => EfVariant::Absolute,
                    VariantConfig::Signed => EfVariant::Signed,
                };
                Some(EfParams::new(rho, sigma, n, v).map_err(Into::into))
            }
            _ => None,
        }
    }

    pub fn vdp_params(&self) -> Option<Result<VdpParams<f64>>> {
        match self {
            EquationConfig::VanDerPol { lambda, mu, nu, .. } => Some((|| {
                Ok(VdpParams { lambda: lambda.time("lambda")?, mu: mu.time("mu")?, nu: nu.time("nu")? })
            })()),
            _ => None,
        }
    }

    /// Builds the equation; `t_check` bounds the sampled sign checks of Van der Pol coefficients.
    pub fn build(&self, t_check: f64) -> Result<EquationSpec<f64>> {
        match self {
            EquationConfig::Fields { t0, p0, q0, r0 } => {
                Ok(EquationSpec::new(p0.field("p0")?, q0.field("q0")?, r0.field("r0")?, *t0)?)
            }
            EquationConfig::EmdenFowler { t0, .. } => {
                Ok(rcert_core::apps::ef_equation(&self.ef_params().unwrap()?, *t0)?)
            }
            EquationConfig::VanDerPol { t0, .. } => {
                Ok(rcert_core::apps::vdp_equation(&self.vdp_params().unwrap()?, *t0, t_check)?)
            }
        }
    }
}

impl RunConfig {
    pub fn t0(&self) -> f64 {
        self.equation.t0()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(self.t0() + 50.0)
    }

    pub fn initial(&self) -> Result<InitialData<f64>> {
        let [t, a, b] = self.ic.context("config error at `ic`: initial data required for this command")?;
        Ok(InitialData::new(t, a, b)?)
    }

    pub fn grid(&self) -> Grid {
        match &self.grid {
            Some(g) => {
                let mut grid = Grid::new(g.nt, g.nw);
                if let Some(s) = g.slack {
                    grid.slack = s;
                }
                grid
            }
            None => Grid::default(),
        }
    }

    /// Configured rectangle, or `[t0, horizon] x [-10, 10]`.
    pub fn region(&self) -> Result<Region<f64>> {
        Ok(match &self.region {
            Some(r) => Region::new((r.t[0], r.t[1]), (r.w[0], r.w[1]))?,
            None => Region::new((self.t0(), self.horizon()), (-10.0, 10.0))?,
        })
    }

    pub fn bounds(&self) -> Result<Option<BoundTriple<f64>>> {
        self.bounds
            .as_ref()
            .map(|b| Ok(BoundTriple::new(b.p.time("P")?, b.q.time("Q")?, b.r.time("R")?)))
            .transpose()
    }

    pub fn family(&self) -> Result<Option<ComparisonFamily<f64>>> {
        self.family
            .as_ref()
            .map(|f| Ok(ComparisonFamily::new(f.p.family("p_e")?, f.q.family("q_e")?, f.r.family("r_e")?)))
            .transpose()
    }
}
