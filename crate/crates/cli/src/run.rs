//! Command dispatch: builds the inputs from a config, runs the checks and assembles the report.

use anyhow::{anyhow, bail, Context, Result};
use rcert_core::apps::{
    check_t4_2, conditional_stability_experiment, ef_bound_triple, ef_bounds_a_b, ef_certify_t3_1, ef_certify_t3_3,
    ef_transform, kneser_solution, regions, vdp_bound_triple, vdp_experiment, vdp_family, EfParams, T42Options,
};
use rcert_core::cert::{
    check_t3_1, check_t3_2, check_t3_3, check_t3_4, check_t3_5, check_t3_6, Certificate, Status, T35Options, Theorem,
};
use rcert_core::classify::{classify, sweep, write_sweep_csv, ClassifyPolicy, Kind};
use rcert_core::dynamics::{integrate, IntegrationOptions, Trajectory};
use rcert_core::field::{linspace, BoundTriple, InitialData};
use rcert_core::quad::QuadOptions;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{EquationConfig, RunConfig};
use crate::report::REPORT_SCHEMA;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Certify(Theorem),
    Integrate,
    Classify,
    Sweep,
    Emden,
    Vdp,
}

impl Command {
    pub fn label(self) -> String {
        match self {
            Command::Certify(th) => format!("certify {}", th.id()),
            Command::Integrate => "integrate".into(),
            Command::Classify => "classify".into(),
            Command::Sweep => "sweep".into(),
            Command::Emden => "emden".into(),
            Command::Vdp => "vdp".into(),
        }
    }
}

/// Command-line values that take precedence over the config.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub horizon: Option<f64>,
    /// Relative tolerance; the absolute tolerance is set to `tol / 100`.
    pub tol: Option<f64>,
}

/// Everything a run produces. `settled` is false when a certificate is not verified.
pub struct Outcome {
    pub report: Value,
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
    pub settled: bool,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

fn apply(cfg: &mut RunConfig, ov: Overrides) {
    if let Some(h) = ov.horizon {
        cfg.horizon = Some(h);
    }
    if let Some(tol) = ov.tol {
        cfg.integration.rel_tol = Some(tol);
        cfg.integration.abs_tol = Some(tol * 1e-2);
    }
}

fn integration(cfg: &RunConfig) -> IntegrationOptions<f64> {
    let mut o = IntegrationOptions::with_horizon(cfg.horizon());
    let ic = &cfg.integration;
    if let Some(x) = ic.rel_tol {
        o.rel_tol = x;
    }
    if let Some(x) = ic.abs_tol {
        o.abs_tol = x;
    }
    if let Some(x) = ic.escape_threshold {
        o.escape_threshold = x;
    }
    if let Some(x) = ic.max_zeros {
        o.max_zeros = x;
    }
    o
}

fn ef_params(cfg: &RunConfig) -> Option<Result<EfParams<f64>>> {
    cfg.equation.ef_params()
}

fn default_bounds(cfg: &RunConfig) -> Result<BoundTriple<f64>> {
    if let Some(b) = cfg.bounds()? {
        return Ok(b);
    }
    if let Some(p) = ef_params(cfg) {
        return Ok(ef_bound_triple(&p?));
    }
    if let Some(v) = cfg.equation.vdp_params() {
        return Ok(vdp_bound_triple(&v?));
    }
    bail!("config error at `bounds`: envelope functions required for this equation")
}

fn t35_options(cfg: &RunConfig) -> Result<T35Options<f64>> {
    let mut opts = match &cfg.oscillation {
        Some(o) => {
            let mut opts = T35Options::new(o.n, o.eps0);
            if let Some(f) = &o.eps_fractions {
                opts.eps_fractions = f.clone();
            }
            if let Some(m) = &o.large_multiples {
                opts.large_multiples = m.clone();
            }
            if let Some(s) = o.span {
                opts.oscillation_span = s;
            }
            if let Some(z) = o.min_zeros {
                opts.min_zeros = z;
            }
            opts
        }
        None if matches!(cfg.equation, EquationConfig::VanDerPol { .. }) => T35Options::new(1.0, 1.0),
        None => bail!("config error at `oscillation`: N and eps0 required for this equation"),
    };
    opts.integration = integration(cfg);
    Ok(opts)
}

fn certificate_line(c: &Certificate<f64>) -> String {
    let id = c.theorem.id();
    match &c.status {
        Status::Verified => {
            let concl: Vec<String> =
                c.conclusions.iter().map(|x| to_value(x).as_str().unwrap_or_default().to_string()).collect();
            let bound = c.uniform_bound.map(|b| format!(" (bound {b:.6})")).unwrap_or_default();
            format!("{id} verified: {}{bound}", concl.join(", "))
        }
        Status::Falsified { witness } => {
            let mut at = format!("t = {}", witness.t);
            if let Some(w) = witness.w {
                at.push_str(&format!(", w = {w}"));
            }
            if let Some(w1) = witness.w1 {
                at.push_str(&format!(", w1 = {w1}"));
            }
            format!("{id} falsified: {} fails at {at}", witness.hypothesis)
        }
        Status::Inconclusive { reason } => format!("{id} inconclusive: {reason}"),
    }
}

fn outcome_label(certs: &[&Certificate<f64>]) -> &'static str {
    if certs.iter().any(|c| c.status.is_falsified()) {
        "falsified"
    } else if certs.iter().all(|c| c.status.is_verified()) {
        "verified"
    } else {
        "inconclusive"
    }
}

struct Builder {
    body: Map<String, Value>,
    files: Vec<(String, Vec<u8>)>,
    summary: Vec<String>,
    certs: Vec<Certificate<f64>>,
}

impl Builder {
    fn new() -> Self {
        Self { body: Map::new(), files: Vec::new(), summary: Vec::new(), certs: Vec::new() }
    }

    fn put(&mut self, key: &str, v: Value) {
        self.body.insert(key.into(), v);
    }

    fn cert(&mut self, c: Certificate<f64>) {
        self.summary.push(certificate_line(&c));
        self.certs.push(c);
    }

    fn trajectory_csv(&mut self, tr: &Trajectory<f64>) -> Result<()> {
        let mut buf = Vec::new();
        tr.write_csv(&mut buf)?;
        self.files.push(("trajectory.csv".into(), buf));
        Ok(())
    }
}

pub fn run(mut cfg: RunConfig, cmd: Command, ov: Overrides) -> Result<Outcome> {
    if let Some(c) = &cfg.command {
        if c.trim() != cmd.label() {
            bail!("config error at `command`: config is for `{c}` but `{}` was requested", cmd.label());
        }
    }
    apply(&mut cfg, ov);
    let mut b = Builder::new();
    match cmd {
        Command::Certify(th) => certify(&cfg, th, &mut b)?,
        Command::Integrate => run_integrate(&cfg, &mut b)?,
        Command::Classify => run_classify(&cfg, &mut b)?,
        Command::Sweep => run_sweep(&cfg, &mut b)?,
        Command::Emden => run_emden(&cfg, &mut b)?,
        Command::Vdp => run_vdp(&cfg, &mut b)?,
    }
    let refs: Vec<&Certificate<f64>> = b.certs.iter().collect();
    let (label, settled) = if refs.is_empty() {
        ("completed", true)
    } else {
        let l = outcome_label(&refs);
        (l, l == "verified")
    };
    let mut report = Map::new();
    report.insert("schema".into(), json!(REPORT_SCHEMA));
    report.insert("command".into(), json!(cmd.label()));
    report.insert("config".into(), to_value(&cfg));
    report.insert("outcome".into(), json!(label));
    report.insert("certificates".into(), to_value(&b.certs));
    for (k, v) in b.body {
        report.insert(k, v);
    }
    Ok(Outcome { report: Value::Object(report), files: b.files, summary: b.summary, settled })
}

fn certify(cfg: &RunConfig, th: Theorem, b: &mut Builder) -> Result<()> {
    let horizon = cfg.horizon();
    let eq = cfg.equation.build(horizon)?;
    let grid = cfg.grid();
    let quad = QuadOptions::default();
    let cert = match th {
        Theorem::T3_1 => {
            let ic = cfg.initial()?;
            match (ef_params(cfg), cfg.bounds.is_none()) {
                (Some(p), true) => {
                    let (cert, closed) = ef_certify_t3_1(&p?, &ic, horizon, &grid, &quad)?;
                    b.put("closed_form", to_value(&closed));
                    cert
                }
                _ => check_t3_1(&eq, &ic, &default_bounds(cfg)?, cfg.epsilon, horizon, &grid, &quad)?,
            }
        }
        Theorem::T3_2 => {
            let ic = cfg.initial()?;
            let qt = cfg.q_tilde.as_ref().context("config error at `q_tilde`: required for t3_2")?.time("Q~")?;
            check_t3_2(&eq, &ic, &default_bounds(cfg)?, &qt, cfg.epsilon, horizon, &grid, &quad)?
        }
        Theorem::T3_3 => {
            let ic = cfg.initial()?;
            match (&cfg.comparison, ef_params(cfg)) {
                (Some(cmp), _) => {
                    let eq1 = match &cmp.equation {
                        Some(e) => e.build(horizon)?,
                        None => eq.clone(),
                    };
                    let start = InitialData::new(ic.t1, cmp.ic[0], cmp.ic[1])?;
                    let major = integrate(&eq1, &start, &integration(cfg))?;
                    b.put("majorant", to_value(&major.summary()));
                    check_t3_3(&eq, &eq1, &major, &ic, &cfg.region()?, &grid)?
                }
                (None, Some(p)) => {
                    let p = p?;
                    let reg = cfg.region()?;
                    let w_max = reg.w.0.abs().max(reg.w.1.abs());
                    let (cert, major) = ef_certify_t3_3(&p, &ic, horizon, w_max, &grid)?;
                    b.put("majorant", to_value(&major.summary()));
                    cert
                }
                (None, None) => bail!("config error at `comparison`: majorant required for t3_3"),
            }
        }
        Theorem::T3_4 => check_t3_4(&eq, &default_bounds(cfg)?, &cfg.region()?, &grid)?,
        Theorem::T3_5 => {
            let family = match (cfg.family()?, cfg.equation.vdp_params()) {
                (Some(f), _) => f,
                (None, Some(v)) => vdp_family(&v?),
                (None, None) => bail!("config error at `family`: comparison family required for t3_5"),
            };
            check_t3_5(&eq, &default_bounds(cfg)?, &family, &cfg.region()?, &grid, &t35_options(cfg)?)?
        }
        Theorem::T3_6 => check_t3_6(&eq, &cfg.region()?, &grid)?,
        Theorem::T4_2 => t4_2(cfg)?,
    };
    b.cert(cert);
    Ok(())
}

fn t4_2(cfg: &RunConfig) -> Result<Certificate<f64>> {
    let v = cfg.equation.vdp_params().ok_or_else(|| anyhow!("t4_2 needs a van_der_pol equation"))??;
    let reg = cfg.region()?;
    let mut opts = T42Options::new(cfg.t0());
    opts.t_end = reg.t.1;
    opts.w_max = reg.w.0.abs().max(reg.w.1.abs());
    opts.grid = cfg.grid();
    opts.oscillation = t35_options(cfg)?;
    Ok(check_t4_2(&v, cfg.t0(), &opts)?)
}

fn run_integrate(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    let eq = cfg.equation.build(cfg.horizon())?;
    let tr = integrate(&eq, &cfg.initial()?, &integration(cfg))?;
    let terminal = to_value(&tr.terminal());
    b.summary.push(format!(
        "integrate: {} at t = {}, {} zeros",
        terminal["kind"].as_str().unwrap_or_default(),
        tr.terminal().time(),
        tr.zeros().len()
    ));
    b.put("trajectory", to_value(&tr.summary()));
    b.trajectory_csv(&tr)
}

fn run_classify(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    let eq = cfg.equation.build(cfg.horizon())?;
    let tr = integrate(&eq, &cfg.initial()?, &integration(cfg))?;
    let cl = classify(&tr, &ClassifyPolicy::default());
    b.summary.push(format!("classify: {}", cl.kind));
    b.put("classification", to_value(&cl));
    b.put("trajectory", to_value(&tr.summary()));
    b.trajectory_csv(&tr)
}

fn run_sweep(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    let s = cfg.sweep.as_ref().context("config error at `sweep`: rectangle and resolution required")?;
    let eq = cfg.equation.build(cfg.horizon())?;
    let cells = sweep(
        &eq,
        (s.phi[0], s.phi[1]),
        (s.dphi[0], s.dphi[1]),
        (s.resolution[0], s.resolution[1]),
        &integration(cfg),
        &ClassifyPolicy::default(),
    )?;
    let mut counts = Map::new();
    for cell in &cells {
        let n = counts.entry(cell.kind.as_str()).or_insert(json!(0));
        *n = json!(n.as_u64().unwrap() + 1);
    }
    let errors = cells.iter().filter(|c| c.error.is_some()).count();
    b.summary.push(format!("sweep: {} cells, {errors} errors", cells.len()));
    b.put("sweep", json!({"cells": cells.len(), "counts": counts, "errors": errors, "raster": "sweep.csv"}));
    let mut buf = Vec::new();
    write_sweep_csv(&cells, &mut buf)?;
    b.files.push(("sweep.csv".into(), buf));
    Ok(())
}

fn run_emden(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    let p = ef_params(cfg).ok_or_else(|| anyhow!("emden needs an emden_fowler equation"))??;
    let (t0, horizon) = (cfg.t0(), cfg.horizon());
    let grid = cfg.grid();
    let mut ef = Map::new();
    ef.insert(
        "regions".into(),
        json!({
            "kneser": regions::kneser(&p),
            "two_parameter_family": regions::two_parameter_family(&p),
            "conditionally_stable": regions::conditionally_stable(&p),
        }),
    );
    if p.rho != 1.0 {
        ef.insert("transform".into(), to_value(&ef_transform(&p)?));
    }
    if regions::kneser(&p) {
        let k = kneser_solution(&p)?;
        let worst = linspace(t0, horizon, 100).into_iter().map(|t| k.residual(&p, t)).fold(0.0, f64::max);
        ef.insert("kneser".into(), json!({"solution": to_value(&k), "max_residual": worst}));
    }
    if regions::conditionally_stable(&p) {
        let (eps, count) = cfg.stability.as_ref().map_or((1.0, 20), |s| (s.eps, s.count));
        let rep = conditional_stability_experiment(&p, t0, eps, count, horizon)?;
        b.summary.push(format!(
            "emden: delta = {:.12}, {} of {} runs within eps",
            rep.delta,
            rep.cases.iter().filter(|c| c.within).count(),
            rep.cases.len()
        ));
        ef.insert("stability".into(), to_value(&rep));
    }
    if let Some(ic) = cfg.ic {
        let ic = InitialData::new(ic[0], ic[1], ic[2])?;
        if p.rho > 1.0 {
            if ic.phi0 != 0.0 {
                let c2 = ic.t1.powf(p.rho) * ic.phi1 / ic.phi0;
                ef.insert("bounds".into(), to_value(&ef_bounds_a_b(&p, ic.t1, ic.phi0, c2)?));
            }
            let (cert, _) = ef_certify_t3_1(&p, &ic, horizon, &grid, &QuadOptions::default())?;
            b.cert(cert);
        }
        if regions::kneser(&p) {
            let reg = cfg.region()?;
            let w_max = reg.w.0.abs().max(reg.w.1.abs());
            let (cert, _) = ef_certify_t3_3(&p, &ic, horizon, w_max, &grid)?;
            b.cert(cert);
        }
        let eq = cfg.equation.build(horizon)?;
        let tr = integrate(&eq, &ic, &integration(cfg))?;
        let cl = classify(&tr, &ClassifyPolicy::default());
        b.summary.push(format!("emden: trajectory {}", cl.kind));
        ef.insert("classification".into(), to_value(&cl));
        ef.insert("trajectory".into(), to_value(&tr.summary()));
        b.trajectory_csv(&tr)?;
    }
    b.put("emden", Value::Object(ef));
    Ok(())
}

fn run_vdp(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    let v = cfg.equation.vdp_params().ok_or_else(|| anyhow!("vdp needs a van_der_pol equation"))??;
    let cert = t4_2(cfg)?;
    b.cert(cert);
    let (count, half, seed) = cfg.experiment.as_ref().map_or((10, 5.0, 0), |e| (e.count, e.half_width, e.seed));
    let runs = vdp_experiment(&v, cfg.t0(), count, half, cfg.horizon(), seed)?;
    let oscillatory = runs.iter().filter(|r| r.kind == Kind::Oscillatory).count();
    let escapes = runs.iter().filter(|r| r.terminal.is_escape()).count();
    let min_zeros = runs.iter().map(|r| r.zeros).min().unwrap_or(0);
    b.summary.push(format!(
        "vdp: {oscillatory} of {} runs oscillatory, {escapes} escapes, at least {min_zeros} zeros",
        runs.len()
    ));
    b.put(
        "experiment",
        json!({"runs": to_value(&runs), "oscillatory": oscillatory, "escapes": escapes, "min_zeros": min_zeros}),
    );
    Ok(())
}
