use super::grid::MomentGrid;
use super::{ForcingModel, Side};
use crate::combinatorics::{gen_binom, BinomOrder};
use crate::error::{Error, Result};
use crate::kernel::{gamma_p, RestitutionParams};
use crate::special::log_sum_exp;

pub(crate) fn grid_index(p: f64) -> Result<usize> {
    MomentGrid::index(p)
        .ok_or_else(|| Error::Domain(format!("order p = {p} is not on the half-integer grid")))
}

/// Grid-index pairs `(i, j)` and `ln C(p,k)` of the products
/// `m_{k+1/2} m_{p−k}` and `m_k m_{p−k+1/2}`, `k = 1..=k_p`.
pub(crate) fn surplus_terms(p: f64) -> Result<Vec<(f64, usize, usize)>> {
    let order = BinomOrder::new(p)?;
    let kp = grid_index(p)?;
    let mut out = Vec::with_capacity(2 * order.k_p as usize);
    for k in 1..=order.k_p as usize {
        let lc = gen_binom(p, k as u32).ln();
        out.push((lc, 2 * k + 1, kp - 2 * k));
        out.push((lc, 2 * k, kp - 2 * k + 1));
    }
    Ok(out)
}

/// `ln S_p` with every moment taken from the requested interval side.
pub fn ln_surplus(p: f64, grid: &MomentGrid, side: Side) -> Result<f64> {
    let terms = surplus_terms(p)?;
    grid.require(terms.iter().flat_map(|&(_, i, j)| [i, j]))?;
    let mut ln_terms = Vec::with_capacity(terms.len());
    for (lc, i, j) in terms {
        ln_terms.push(lc + grid.ln_side(i, side)? + grid.ln_side(j, side)?);
    }
    Ok(log_sum_exp(ln_terms))
}

/// `S_p = Σ_{k=1}^{k_p} C(p,k)(m_{k+1/2} m_{p−k} + m_k m_{p−k+1/2})`.
pub fn surplus(p: f64, grid: &MomentGrid, side: Side) -> Result<f64> {
    ln_surplus(p, grid, side).map(f64::exp)
}

/// `[−x_hi, −(1−γ) x_lo + γ s_hi]`: the collision-moment interval from the
/// loss lower bound and the Povzner upper bound.
pub fn collision_bounds(gamma: f64, x_lo: f64, x_hi: f64, s_hi: f64) -> (f64, f64) {
    (-x_hi, -(1.0 - gamma) * x_lo + gamma * s_hi)
}

/// Interval containing `Q_p`, the `|v|^{2p}` moment of the collision
/// operator, given bounds on `m_{p+1/2}` and `S_p`.
pub fn collision_moment_interval(
    p: f64,
    grid: &MomentGrid,
    params: &RestitutionParams<f64>,
) -> Result<(f64, f64)> {
    let k = grid_index(p)?;
    grid.require([k + 1])?;
    let s_hi = surplus(p, grid, Side::Hi)?;
    let x = grid.ln_at(k + 1).expect("checked");
    let gamma = gamma_p(params, p)?.value;
    Ok(collision_bounds(gamma, x.lo_value(), x.hi_value(), s_hi))
}

fn opposite(side: Side) -> Side {
    match side {
        Side::Lo => Side::Hi,
        Side::Hi => Side::Lo,
    }
}

/// `G_p`, the `|v|^{2p}` moment of the forcing term, bounded on the
/// requested side by the grid intervals.
///
/// Shear forcing only admits the upper bound `2κ p m_p`.
pub fn forcing_moment(model: &ForcingModel, p: f64, grid: &MomentGrid, side: Side) -> Result<f64> {
    model.validate()?;
    let k = grid_index(p)?;
    let lower_index = || {
        k.checked_sub(2)
            .ok_or_else(|| Error::Domain(format!("diffusion moment needs p >= 1 (got {p})")))
    };
    let m = |idx: usize, s: Side| grid.ln_side(idx, s).map(f64::exp);
    match *model {
        ForcingModel::PureDiffusion { mu } => {
            Ok(2.0 * mu * p * (2.0 * p + 1.0) * m(lower_index()?, side)?)
        }
        ForcingModel::DiffusionFriction { mu, lambda } => {
            let w = m(lower_index()?, side)?;
            let y = m(k, opposite(side))?;
            Ok(-2.0 * lambda * p * y + 2.0 * mu * p * (2.0 * p + 1.0) * w)
        }
        ForcingModel::NegativeFriction { kappa } => Ok(2.0 * kappa * p * m(k, side)?),
        ForcingModel::ShearFlow { kappa } => match side {
            Side::Hi => Ok(2.0 * kappa * p * m(k, Side::Hi)?),
            Side::Lo => Err(Error::ShearLowerUnavailable),
        },
    }
}

/// Interval for `m_{p+1/2}` from `G_p ≤ m_{p+1/2} ≤ (G_p + γ_p S_p)/(1−γ_p)`.
///
/// For shear forcing the lower endpoint is whatever the grid already holds
/// for `m_{p+1/2}` (zero when absent).
pub fn steady_balance_interval(
    p: f64,
    grid: &MomentGrid,
    model: &ForcingModel,
    params: &RestitutionParams<f64>,
) -> Result<(f64, f64)> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("steady balance needs p > 1 (got {p})")));
    }
    let gamma = gamma_p(params, p)?.value;
    let gap = 1.0 - gamma;
    if gap < 1e-12 {
        return Err(Error::GammaDegenerate { p, gap });
    }
    let g_hi = forcing_moment(model, p, grid, Side::Hi)?;
    let s_hi = surplus(p, grid, Side::Hi)?;
    let hi = (g_hi + gamma * s_hi) / gap;
    let lo = match model {
        ForcingModel::ShearFlow { .. } => grid
            .ln_at(grid_index(p)? + 1)
            .map(|e| e.lo_value())
            .unwrap_or(0.0),
        _ => forcing_moment(model, p, grid, Side::Lo)?.max(0.0),
    };
    Ok((lo, hi))
}
