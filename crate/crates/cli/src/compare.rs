//! Cross-check of steady-state particle moments against a propagated grid.

use granular_core::dsmc::SteadyStateReport;
use granular_core::moments::MomentGrid;
use granular_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub p: f64,
    pub value: f64,
    pub stderr: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    pub reliable: bool,
    /// `[value − kσ, value + kσ]` meets `[m_lo, m_hi]`.
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub e_report: f64,
    pub e_grid: Option<f64>,
    pub p_max: f64,
    pub k_sigma: f64,
    pub verdicts: Vec<Verdict>,
    pub violations: Vec<f64>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Per-order verdicts for `p ≤ p_max`.
///
/// The grid must be non-empty and carry the report's forcing model. A
/// differing restitution coefficient is reported and fails the comparison
/// but still yields per-order verdicts.
pub fn compare(
    report: &SteadyStateReport,
    grid: &MomentGrid,
    p_max: f64,
    k_sigma: f64,
) -> Result<Comparison, Error> {
    if grid.is_empty() {
        return Err(Error::Mismatched("moment grid is empty".into()));
    }
    let model = match (&report.model, &grid.model) {
        (Some(a), Some(b)) if a == b => *a,
        (a, b) => {
            return Err(Error::Mismatched(format!("report model {a:?} differs from grid model {b:?}")));
        }
    };
    let mut warnings = Vec::new();
    let e_match = grid.restitution.is_some_and(|e| (e - report.e).abs() <= 1e-12);
    if !e_match {
        warnings.push(format!(
            "restitution differs: report e = {}, grid e = {:?}",
            report.e, grid.restitution
        ));
    }
    let mut verdicts = Vec::new();
    for m in report.moments.entries.iter().filter(|m| m.p <= p_max) {
        let Some((lo, hi)) = grid.get(m.p) else {
            warnings.push(format!("grid has no interval at p = {}", m.p));
            continue;
        };
        let tol = k_sigma * m.stderr;
        verdicts.push(Verdict {
            p: m.p,
            value: m.value,
            stderr: m.stderr,
            m_lo: lo,
            m_hi: hi,
            reliable: m.reliable,
            inside: lo <= m.value + tol && m.value - tol <= hi,
        });
    }
    if verdicts.is_empty() {
        return Err(Error::Mismatched(format!("no common orders p <= {p_max}")));
    }
    let violations: Vec<f64> = verdicts.iter().filter(|v| !v.inside).map(|v| v.p).collect();
    Ok(Comparison {
        model: model.name().into(),
        e_report: report.e,
        e_grid: grid.restitution,
        p_max,
        k_sigma,
        pass: violations.is_empty() && e_match,
        verdicts,
        violations,
        warnings,
    })
}
