//! Labels a computed trajectory with the solution classes used by the theorems.
//!
//! Only finite evidence is available, so "infinitely many sign changes" is read as
//! zero gaps shrinking geometrically toward the escape time, and bounded support as
//! a dead band around zero that persists to the horizon. Under unique solvability a
//! solution cannot vanish together with its derivative without being trivial, so the
//! dead-band label is only ever a candidate.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{integrate, IntegrationOptions, Terminal, Trajectory};
use crate::error::{Error, Result};
use crate::field::{linspace, EquationSpec, InitialData};
use crate::scalar::{c, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    GlobalMonotoneNonvanishing,
    Oscillatory,
    SingularOscillatorySecondKind,
    SingularOscillatoryFirstKindCandidate,
    GlobalNonOscillatory,
    Undetermined,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::GlobalMonotoneNonvanishing => "global_monotone_nonvanishing",
            Kind::Oscillatory => "oscillatory",
            Kind::SingularOscillatorySecondKind => "singular_oscillatory_second_kind",
            Kind::SingularOscillatoryFirstKindCandidate => "singular_oscillatory_first_kind_candidate",
            Kind::GlobalNonOscillatory => "global_non_oscillatory",
            Kind::Undetermined => "undetermined",
        }
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassifyPolicy<S> {
    /// Zeros required for an oscillatory label.
    pub min_zeros: usize,
    /// Trailing fraction of the span that must contain a zero.
    pub window: S,
    /// Largest ratio of consecutive zero gaps accepted as accumulation.
    pub gap_ratio: S,
    /// Number of trailing gaps inspected for accumulation.
    pub gap_count: usize,
    /// Dead band half-width in units of the trajectory's zero tolerance.
    pub dead_band_factor: S,
    /// Fraction of the span the dead band must persist.
    pub dead_band_fraction: S,
    /// Relative slack for "|phi| nondecreasing".
    pub monotone_tol: S,
}

impl<S: Scalar> Default for ClassifyPolicy<S> {
    fn default() -> Self {
        Self {
            min_zeros: 3,
            window: c(0.25),
            gap_ratio: c(0.9),
            gap_count: 4,
            dead_band_factor: c(10.0),
            dead_band_fraction: c(0.05),
            monotone_tol: c::<S>(1e-8).max(S::tol_floor()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evidence<S> {
    pub zero_count: usize,
    /// Ratios of consecutive trailing zero gaps.
    pub gap_ratios: Vec<S>,
    pub terminal: Terminal<S>,
    pub truncated: bool,
    pub first_touch: Option<S>,
    /// `|phi|` nondecreasing within `monotone_tol` on the samples.
    pub monotone: bool,
    pub last_zero: Option<S>,
    pub dead_band_from: Option<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification<S> {
    pub kind: Kind,
    pub evidence: Evidence<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn monotone_abs<S: Scalar>(traj: &Trajectory<S>, tol: S) -> bool {
    let vals: Vec<S> = traj.samples().iter().map(|s| s.phi.abs()).collect();
    vals.windows(2).all(|w| w[1] >= w[0] - tol * S::one().max(w[0]))
}

fn gap_ratios<S: Scalar>(zeros: &[S], k: usize) -> Vec<S> {
    if k < 2 || zeros.len() < k + 1 {
        return Vec::new();
    }
    let gaps: Vec<S> = zeros[zeros.len() - k - 1..].windows(2).map(|w| w[1] - w[0]).collect();
    gaps.windows(2)
        .map(|g| if g[0] > S::zero() { g[1] / g[0] } else { S::infinity() })
        .collect()
}

/// Start of the trailing run of samples with `|phi|, |phi'| <= band`, if it follows a zero.
fn dead_band_start<S: Scalar>(traj: &Trajectory<S>, band: S) -> Option<S> {
    let first_zero = *traj.zeros().first()?;
    let mut from = None;
    for s in traj.samples().iter().rev() {
        let dphi = traj.dphi(s.t).ok()?;
        if s.phi.abs() <= band && dphi.abs() <= band && s.t >= first_zero {
            from = Some(s.t);
        } else {
            break;
        }
    }
    from
}

pub fn classify<S: Scalar>(traj: &Trajectory<S>, policy: &ClassifyPolicy<S>) -> Classification<S> {
    let zeros = traj.zeros();
    let (start, end) = (traj.start(), traj.end());
    let span = end - start;
    let band = policy.dead_band_factor * traj.zero_tol();
    let dead_band_from = dead_band_start(traj, band).filter(|&t| end - t >= policy.dead_band_fraction * span);
    let evidence = Evidence {
        zero_count: zeros.len(),
        gap_ratios: gap_ratios(zeros, policy.gap_count),
        terminal: traj.terminal(),
        truncated: traj.truncated(),
        first_touch: traj.first_touch(),
        monotone: monotone_abs(traj, policy.monotone_tol),
        last_zero: zeros.last().copied(),
        dead_band_from,
    };
    let verdict = |kind: Kind, note: Option<&str>| Classification {
        kind,
        evidence: evidence.clone(),
        note: note.map(str::to_string),
    };
    let trivial = traj.samples().iter().all(|s| s.phi == S::zero() && s.psi == S::zero());
    if trivial {
        return verdict(Kind::GlobalNonOscillatory, Some("trivial solution"));
    }
    if evidence.truncated {
        return verdict(Kind::Undetermined, Some("zero budget exhausted"));
    }
    if evidence.first_touch.is_some() {
        return verdict(Kind::Undetermined, Some("tangential zero"));
    }
    match evidence.terminal {
        Terminal::StepCollapse { .. } => verdict(Kind::Undetermined, Some("step size collapsed")),
        Terminal::FiniteEscape { t, .. } => {
            let k = policy.gap_count;
            let ratios = &evidence.gap_ratios;
            if ratios.is_empty() {
                return verdict(Kind::Undetermined, Some("escape without accumulating zeros"));
            }
            let r_max = ratios.iter().copied().fold(S::zero(), S::max);
            let last_gap = zeros[zeros.len() - 1] - zeros[zeros.len() - 2];
            let tail = t - zeros[zeros.len() - 1];
            let geometric = r_max <= policy.gap_ratio && tail <= last_gap / (S::one() - r_max);
            if geometric && ratios.len() + 1 == k {
                verdict(Kind::SingularOscillatorySecondKind, None)
            } else {
                verdict(Kind::Undetermined, Some("escape without geometric accumulation of zeros"))
            }
        }
        Terminal::ReachedHorizon { .. } => {
            if evidence.dead_band_from.is_some() {
                return verdict(
                    Kind::SingularOscillatoryFirstKindCandidate,
                    Some("dead band after sign changes; excluded under unique solvability"),
                );
            }
            if zeros.is_empty() {
                return if evidence.monotone {
                    verdict(Kind::GlobalMonotoneNonvanishing, None)
                } else {
                    verdict(Kind::GlobalNonOscillatory, None)
                };
            }
            let window_start = end - policy.window * span;
            if zeros.len() >= policy.min_zeros && evidence.last_zero.unwrap() >= window_start {
                verdict(Kind::Oscillatory, None)
            } else {
                verdict(Kind::GlobalNonOscillatory, None)
            }
        }
    }
}

/// One cell of an initial-condition raster.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell<S> {
    pub ic_phi: S,
    pub ic_dphi: S,
    pub kind: Kind,
    pub zero_count: usize,
    pub escape_time: Option<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Classifies the trajectories started at `t0` from a `res.0 x res.1` raster of
/// `(phi, phi')` in `phi_range x dphi_range`. Cells are ordered `phi`-outer.
/// A failing cell is recorded as undetermined with its error message.
pub fn sweep<S: Scalar>(
    eq: &EquationSpec<S>,
    phi_range: (S, S),
    dphi_range: (S, S),
    res: (usize, usize),
    opts: &IntegrationOptions<S>,
    policy: &ClassifyPolicy<S>,
) -> Result<Vec<SweepCell<S>>> {
    if res.0 < 2 || res.1 < 2 {
        return Err(Error::InvalidInput(format!("sweep resolution must be at least 2x2, got {}x{}", res.0, res.1)));
    }
    let phis = linspace(phi_range.0, phi_range.1, res.0);
    let dphis = linspace(dphi_range.0, dphi_range.1, res.1);
    let cells: Vec<(S, S)> = phis.iter().flat_map(|&a| dphis.iter().map(move |&b| (a, b))).collect();
    let t0 = eq.t0();
    Ok(cells
        .par_iter()
        .map(|&(phi, dphi)| {
            let run = InitialData::new(t0, phi, dphi).and_then(|ic| integrate(eq, &ic, opts));
            match run {
                Ok(tr) => {
                    let cl = classify(&tr, policy);
                    SweepCell {
                        ic_phi: phi,
                        ic_dphi: dphi,
                        kind: cl.kind,
                        zero_count: tr.zeros().len(),
                        escape_time: tr.terminal().escape_time(),
                        error: None,
                    }
                }
                Err(e) => SweepCell {
                    ic_phi: phi,
                    ic_dphi: dphi,
                    kind: Kind::Undetermined,
                    zero_count: 0,
                    escape_time: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Raster CSV with columns `ic_phi, ic_dphi, kind, zero_count, escape_time`.
pub fn write_sweep_csv<S: Scalar, W: Write>(cells: &[SweepCell<S>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Output(format!("csv write failed: {e}"));
    w.write_record(["ic_phi", "ic_dphi", "kind", "zero_count", "escape_time"]).map_err(io)?;
    for cell in cells {
        w.write_record([
            format!("{:.16e}", cell.ic_phi),
            format!("{:.16e}", cell.ic_dphi),
            cell.kind.as_str().to_string(),
            cell.zero_count.to_string(),
            cell.escape_time.map(|t| format!("{t:.16e}")).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Output(format!("csv write failed: {e}")))?;
    Ok(())
}
