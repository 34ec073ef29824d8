use serde::{Deserialize, Serialize};

use super::balance::{grid_index, surplus_terms};
use super::grid::{slack, LnInterval, MomentGrid};
use super::{ForcingModel, Side};
use crate::error::{Error, Result};
use crate::kernel::{gamma_p_with, QuadratureConfig, RestitutionParams};
use crate::special::log_sum_exp;

/// Seed data: `m₁` (a point or an interval) and optionally one exact higher
/// moment `m_{p₀}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub m1_lo: f64,
    pub m1_hi: f64,
    pub p0: Option<(f64, f64)>,
}

impl Seed {
    pub fn new(m1: f64) -> Self {
        Self::interval(m1, m1)
    }

    pub fn interval(m1_lo: f64, m1_hi: f64) -> Self {
        Self {
            m1_lo,
            m1_hi,
            p0: None,
        }
    }

    /// Adds the exact moment `m_{p0} = m`.
    pub fn with_moment(mut self, p0: f64, m: f64) -> Self {
        self.p0 = Some((p0, m));
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.m1_lo > 0.0 && self.m1_lo <= self.m1_hi && self.m1_hi.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "seed m1 interval [{}, {}] must be positive and ordered",
                self.m1_lo, self.m1_hi
            )));
        }
        if let Some((p0, m)) = self.p0 {
            let ok = MomentGrid::index(p0).is_some_and(|k| k >= 3) && m > 0.0 && m.is_finite();
            if !ok {
                return Err(Error::InvalidParam(format!(
                    "seed moment m_{p0} = {m} must sit on the half-integer grid above p = 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagateConfig {
    /// Balance steps start at `p = 1 + eps` (rounded up to the grid).
    pub eps: f64,
    /// Orders propagated beyond `p_max` and then discarded, so that the top
    /// of the returned grid is constrained from above.
    pub headroom: f64,
    /// Initial lower endpoint of `m_{1/2}` relative to `√m₁`.
    pub m_half_floor: f64,
    pub max_passes: usize,
    pub quadrature: QuadratureConfig,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self {
            eps: 0.5,
            headroom: 2.0,
            m_half_floor: 1e-6,
            max_passes: 400,
            quadrature: QuadratureConfig::default(),
        }
    }
}

/// Per-order record of the quantities entering the balance at `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub p: f64,
    pub gamma_p: f64,
    /// `ln S_p` from upper endpoints.
    pub ln_surplus_hi: f64,
    /// `ln M_p`, `M_p = max_k {m_k m_{p−k+1/2}, m_{k+1/2} m_{p−k}}`.
    pub ln_max_product: f64,
    /// `ln(2^{p+1} M_p)`, an upper bound for `S_p`.
    pub ln_surplus_envelope: f64,
    /// `ln` of the coarse bound `K_ε(G_p + 2^{p+1} M_p)` on `m_{p+1/2}`
    /// (friction dropped), with `G_p` from upper endpoints.
    pub ln_coarse_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationDiagnostics {
    pub p_start: f64,
    pub k_eps: f64,
    pub passes: usize,
    pub converged: bool,
    pub steps: Vec<StepRecord>,
}

/// Positive monomial `e^{ln_coef} Π m_{vars}`.
#[derive(Debug, Clone)]
struct Term {
    ln_coef: f64,
    vars: Vec<usize>,
}

impl Term {
    fn new(coef: f64, vars: &[usize]) -> Self {
        Self {
            ln_coef: coef.ln(),
            vars: vars.to_vec(),
        }
    }

    fn ln_side(&self, g: &MomentGrid, side: Side) -> f64 {
        self.ln_coef + self.vars.iter().map(|&v| g.entries()[v].side(side)).sum::<f64>()
    }

    /// `ln` of the coefficient times all factors except the `v` ones, with
    /// the multiplicity of `v`.
    fn without(&self, g: &MomentGrid, v: usize, side: Side) -> (f64, f64) {
        let mut acc = self.ln_coef;
        let mut mult = 0.0;
        for &w in &self.vars {
            if w == v {
                mult += 1.0;
            } else {
                acc += g.entries()[w].side(side);
            }
        }
        (acc, mult)
    }
}

/// `Σ pos − Σ neg ≥ 0` over positive monomials in the moments.
#[derive(Debug, Clone)]
struct Constraint {
    pos: Vec<Term>,
    neg: Vec<Term>,
}

/// `ln(e^a − e^b)` for `a > b` plus its outward slack.
fn ln_diff(a: f64, b: f64) -> Option<(f64, f64)> {
    if !(a > b) {
        return None;
    }
    let d = b - a;
    let gap = -d.exp_m1();
    let amp = (1.0 + d.exp()) / gap;
    let mag = a.abs() + if b.is_finite() { b.abs() } else { 0.0 };
    Some((a + gap.ln(), slack(mag, amp)))
}

fn sum_except(terms: &[Term], skip: usize, g: &MomentGrid, side: Side) -> f64 {
    log_sum_exp(
        terms
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, t)| t.ln_side(g, side)),
    )
}

impl Constraint {
    /// Narrows every variable the constraint bounds; returns whether any
    /// change was significant.
    fn apply(&self, g: &mut MomentGrid) -> Result<bool> {
        let mut changed = false;
        // upper bounds from negative terms: t ≤ Σ pos_hi − Σ other neg_lo
        for (ti, t) in self.neg.iter().enumerate() {
            let a = log_sum_exp(self.pos.iter().map(|x| x.ln_side(g, Side::Hi)));
            if a == f64::INFINITY {
                continue;
            }
            let b = sum_except(&self.neg, ti, g, Side::Lo);
            let Some((ln_r, r_slack)) = ln_diff(a, b) else {
                let v = t.vars.first().copied().unwrap_or(0);
                return Err(Error::Infeasible {
                    p: v as f64 / 2.0,
                    ln_lo: b,
                    ln_hi: a,
                });
            };
            let mut seen = Vec::new();
            for &v in &t.vars {
                if seen.contains(&v) {
                    continue;
                }
                seen.push(v);
                let (rest, mult) = t.without(g, v, Side::Lo);
                if rest == f64::NEG_INFINITY {
                    continue;
                }
                let bound = (ln_r - rest) / mult;
                let s = (r_slack + slack(rest.abs() + ln_r.abs(), 1.0)) / mult;
                changed |= g.lower_hi(v, bound + s)?;
            }
        }
        // lower bounds from positive terms: t ≥ Σ neg_lo − Σ other pos_hi
        for (ti, t) in self.pos.iter().enumerate() {
            let b = log_sum_exp(self.neg.iter().map(|x| x.ln_side(g, Side::Lo)));
            if b == f64::NEG_INFINITY {
                continue;
            }
            let a = sum_except(&self.pos, ti, g, Side::Hi);
            if a == f64::INFINITY {
                continue;
            }
            let Some((ln_r, r_slack)) = ln_diff(b, a) else {
                continue;
            };
            let mut seen = Vec::new();
            for &v in &t.vars {
                if seen.contains(&v) {
                    continue;
                }
                seen.push(v);
                let (rest, mult) = t.without(g, v, Side::Hi);
                if rest == f64::INFINITY {
                    continue;
                }
                let bound = (ln_r - rest) / mult;
                let s = (r_slack + slack(rest.abs() + ln_r.abs(), 1.0)) / mult;
                changed |= g.raise_lo(v, bound - s)?;
            }
        }
        Ok(changed)
    }
}

/// Balance constraints `m_{p+1/2} ≥ G_p` and
/// `(1−γ_p) m_{p+1/2} ≤ G_p + γ_p S_p` at grid order `p`.
fn balance_constraints(model: &ForcingModel, p: f64, gamma: f64) -> Result<Vec<Constraint>> {
    let k = grid_index(p)?;
    let (x, y, w) = (k + 1, k, k - 2);
    let mut s_terms: Vec<Term> = surplus_terms(p)?
        .into_iter()
        .map(|(lc, i, j)| Term {
            ln_coef: lc + gamma.ln(),
            vars: vec![i, j],
        })
        .collect();
    let loss = Term::new(1.0 - gamma, &[x]);
    let out = match *model {
        ForcingModel::PureDiffusion { mu } => {
            let gw = 2.0 * mu * p * (2.0 * p + 1.0);
            s_terms.push(Term::new(gw, &[w]));
            vec![
                Constraint {
                    pos: vec![Term::new(1.0, &[x])],
                    neg: vec![Term::new(gw, &[w])],
                },
                Constraint {
                    pos: s_terms,
                    neg: vec![loss],
                },
            ]
        }
        ForcingModel::DiffusionFriction { mu, lambda } => {
            let gw = 2.0 * mu * p * (2.0 * p + 1.0);
            let gy = 2.0 * lambda * p;
            s_terms.push(Term::new(gw, &[w]));
            vec![
                Constraint {
                    pos: vec![Term::new(1.0, &[x]), Term::new(gy, &[y])],
                    neg: vec![Term::new(gw, &[w])],
                },
                Constraint {
                    pos: s_terms,
                    neg: vec![loss, Term::new(gy, &[y])],
                },
            ]
        }
        ForcingModel::NegativeFriction { kappa } => {
            let gy = 2.0 * kappa * p;
            s_terms.push(Term::new(gy, &[y]));
            vec![
                Constraint {
                    pos: vec![Term::new(1.0, &[x])],
                    neg: vec![Term::new(gy, &[y])],
                },
                Constraint {
                    pos: s_terms,
                    neg: vec![loss],
                },
            ]
        }
        ForcingModel::ShearFlow { kappa } => {
            s_terms.push(Term::new(2.0 * kappa * p, &[y]));
            vec![Constraint {
                pos: s_terms,
                neg: vec![loss],
            }]
        }
    };
    Ok(out)
}

/// Energy balance (`p = 1`): with `c = β(1−β)/2` the dissipation
/// `c ∫∫ f f |u|³` equals `G_1`, and `m_{3/2} ≤ ∫∫ f f |u|³ ≤ 2 m_{3/2} + 6 m_1 m_{1/2}`.
fn energy_constraints(model: &ForcingModel, beta: f64) -> Vec<Constraint> {
    let c = 0.5 * beta * (1.0 - beta);
    if c <= 0.0 {
        return Vec::new();
    }
    let (h, y, x) = (1usize, 2usize, 3usize);
    let upper_dissipation = || vec![Term::new(2.0 * c, &[x]), Term::new(6.0 * c, &[y, h])];
    match *model {
        ForcingModel::PureDiffusion { mu } => vec![
            Constraint {
                pos: vec![Term::new(6.0 * mu, &[])],
                neg: vec![Term::new(c, &[x])],
            },
            Constraint {
                pos: upper_dissipation(),
                neg: vec![Term::new(6.0 * mu, &[])],
            },
        ],
        ForcingModel::DiffusionFriction { mu, lambda } => {
            let mut pos = upper_dissipation();
            pos.push(Term::new(2.0 * lambda, &[y]));
            vec![
                Constraint {
                    pos: vec![Term::new(6.0 * mu, &[])],
                    neg: vec![Term::new(c, &[x]), Term::new(2.0 * lambda, &[y])],
                },
                Constraint {
                    pos,
                    neg: vec![Term::new(6.0 * mu, &[])],
                },
            ]
        }
        ForcingModel::NegativeFriction { kappa } => vec![
            Constraint {
                pos: vec![Term::new(2.0 * kappa, &[y])],
                neg: vec![Term::new(c, &[x])],
            },
            Constraint {
                pos: upper_dissipation(),
                neg: vec![Term::new(2.0 * kappa, &[y])],
            },
        ],
        ForcingModel::ShearFlow { kappa } => vec![Constraint {
            pos: vec![Term::new(2.0 * kappa, &[y])],
            neg: vec![Term::new(c, &[x])],
        }],
    }
}

/// Propagates steady-state moment bounds up to `p_max` with default
/// settings.
pub fn propagate(
    model: &ForcingModel,
    params: &RestitutionParams<f64>,
    seed: &Seed,
    p_max: f64,
) -> Result<MomentGrid> {
    propagate_with(model, params, seed, p_max, &PropagateConfig::default()).map(|(g, _)| g)
}

/// Interval propagation of the steady moment balance.
///
/// Every balance inequality (`p ≥ 1 + ε`) and the energy balance are solved
/// for each moment they contain, interleaved with the log-convexity closure,
/// until no interval narrows. Every step only narrows, so the result is a
/// valid enclosure of the moments of any steady state matching the seed.
pub fn propagate_with(
    model: &ForcingModel,
    params: &RestitutionParams<f64>,
    seed: &Seed,
    p_max: f64,
    cfg: &PropagateConfig,
) -> Result<(MomentGrid, PropagationDiagnostics)> {
    model.validate()?;
    seed.validate()?;
    if !(p_max >= 0.0 && p_max.is_finite()) {
        return Err(Error::InvalidParam(format!("p_max = {p_max} must be non-negative")));
    }
    if !(cfg.eps > 0.0 && cfg.headroom >= 0.0) {
        return Err(Error::InvalidParam("eps must be positive and headroom non-negative".into()));
    }
    let (l1_lo, l1_hi) = (seed.m1_lo.ln(), seed.m1_hi.ln());
    let mut g = MomentGrid::from_ln(vec![
        LnInterval::exact(0.0),
        LnInterval::UNBOUNDED,
        LnInterval { lo: l1_lo, hi: l1_hi },
    ])?;
    g.model = Some(*model);
    g.restitution = Some(params.e);
    g.upper_only = !model.has_lower_forcing_bound();
    g.seed_m1 = (0.5 * (l1_lo + l1_hi)).exp();
    g.raise_lo(1, cfg.m_half_floor.ln() + 0.5 * l1_lo)?;
    g.lower_hi(1, 0.5 * l1_hi)?;

    let p_start = ((1.0 + cfg.eps) * 2.0).ceil() / 2.0;
    let gamma_start = gamma_p_with(params, p_start, &cfg.quadrature)?.value;
    let k_eps = 1.0 / (1.0 - gamma_start);
    let mut diag = PropagationDiagnostics {
        p_start,
        k_eps,
        passes: 0,
        converged: true,
        steps: Vec::new(),
    };

    let top = if p_max < 2.0 {
        2
    } else {
        (2.0 * (p_max + cfg.headroom)).ceil() as usize
    };
    if let Some((p0, m)) = seed.p0 {
        let k0 = grid_index(p0)?;
        g.extend_to(k0 + 1);
        g.raise_lo(k0, m.ln())?;
        g.lower_hi(k0, m.ln())?;
    }
    if p_max < 2.0 {
        g.close()?;
        g.truncate(p_max.max(1.0));
        return Ok((g, diag));
    }
    g.extend_to(top + 1);

    let mut steps: Vec<(f64, f64, Vec<Constraint>)> = Vec::new();
    steps.push((1.0, 1.0, energy_constraints(model, params.beta)));
    let mut k = grid_index(p_start)?;
    while k < top {
        let p = k as f64 / 2.0;
        let gamma = gamma_p_with(params, p, &cfg.quadrature)?.value;
        let gap = 1.0 - gamma;
        if gap < 1e-12 {
            return Err(Error::GammaDegenerate { p, gap });
        }
        steps.push((p, gamma, balance_constraints(model, p, gamma)?));
        k += 1;
    }

    // ascending extension: each order is closed before the next one
    for (_, _, cs) in &steps {
        for c in cs {
            c.apply(&mut g)?;
        }
        g.close()?;
    }
    diag.converged = false;
    for pass in 0..cfg.max_passes {
        let mut changed = false;
        for (_, _, cs) in &steps {
            for c in cs {
                changed |= c.apply(&mut g)?;
            }
        }
        g.close()?;
        diag.passes = pass + 1;
        if !changed {
            diag.converged = true;
            break;
        }
    }

    for &(p, gamma, _) in steps.iter().skip(1) {
        diag.steps.push(step_record(model, &g, p, gamma, k_eps)?);
    }
    g.truncate(p_max);
    diag.steps.retain(|s| s.p + 0.5 <= p_max);
    Ok((g, diag))
}

fn step_record(model: &ForcingModel, g: &MomentGrid, p: f64, gamma: f64, k_eps: f64) -> Result<StepRecord> {
    let terms = surplus_terms(p)?;
    let hi = |i: usize| g.entries()[i].hi;
    let ln_max_product = terms
        .iter()
        .map(|&(_, i, j)| hi(i) + hi(j))
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_surplus_hi = log_sum_exp(terms.iter().map(|&(lc, i, j)| lc + hi(i) + hi(j)));
    let ln_surplus_envelope = (p + 1.0) * std::f64::consts::LN_2 + ln_max_product;
    let k = grid_index(p)?;
    let ln_forcing = match *model {
        ForcingModel::PureDiffusion { mu } | ForcingModel::DiffusionFriction { mu, .. } => {
            (2.0 * mu * p * (2.0 * p + 1.0)).ln() + hi(k - 2)
        }
        ForcingModel::NegativeFriction { kappa } | ForcingModel::ShearFlow { kappa } => {
            (2.0 * kappa * p).ln() + hi(k)
        }
    };
    Ok(StepRecord {
        p,
        gamma_p: gamma,
        ln_surplus_hi,
        ln_max_product,
        ln_surplus_envelope,
        ln_coarse_bound: k_eps.ln() + log_sum_exp([ln_forcing, ln_surplus_envelope]),
    })
}
