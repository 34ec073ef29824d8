use serde::{Deserialize, Serialize};

use super::ForcingModel;
use crate::error::{Error, Result};
use crate::kernel::{gamma_p, RestitutionParams};
use crate::special::{ln_beta, ln_gamma, ln_gamma_ratio};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// `ln C(p,k) + ln[B(k + a/2 + b, p − k + b) + B(k + b, p − k + a/2 + b)]`.
fn ln_surplus_beta_term(p: f64, k: f64, a: f64, b: f64) -> f64 {
    let ln_c = ln_gamma(p + 1.0) - ln_gamma(k + 1.0) - ln_gamma(p - k + 1.0);
    let h = 0.5 * a;
    let b1 = ln_beta(k + h + b, p - k + b);
    let b2 = ln_beta(k + b, p - k + h + b);
    let m = b1.max(b2);
    ln_c + m + ((b1 - m).exp() + (b2 - m).exp()).ln()
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    f1.max(f2)
}

/// Uniform-in-`p` bound `A(a,b)` on the Beta sum multiplying
/// `Γ(ap + a/2 + 2b) Z_p` in the normalized surplus estimate:
/// `A = B(a/2 + b, b) + sup_{p>1} C(p,k_p)[B(k_p + a/2 + b, p − k_p + b)
/// + B(k_p + b, p − k_p + a/2 + b)]`.
///
/// The supremum is taken on a grid of step `1/64` up to `p = 200` with
/// golden-section refinement on every branch of constant `k_p` (including
/// the left limits at odd integers), and beyond `p = 200` through the
/// `O(1/p)` envelope `max_{[100,200]} p T(p) / 200`.
pub fn compute_surplus_constant(a: f64, b: f64) -> Result<f64> {
    compute_surplus_constant_with(a, b, 1.0 / 64.0, 200.0)
}

pub fn compute_surplus_constant_with(a: f64, b: f64, step: f64, p_tail: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParam(format!("surplus constant needs a, b > 0 (got {a}, {b})")));
    }
    if !(step > 0.0 && p_tail >= 3.0) {
        return Err(Error::InvalidParam("grid step must be positive and p_tail >= 3".into()));
    }
    let mut sup_ln = f64::NEG_INFINITY;
    let mut seg_lo = 1.0;
    while seg_lo < p_tail {
        // on [n, n+2] (n odd) the branch k = (n+1)/2 is smooth
        let seg_hi = (seg_lo + 2.0).min(p_tail);
        let k = (seg_lo + 1.0) / 2.0;
        let t = |p: f64| ln_surplus_beta_term(p, k, a, b);
        let n = ((seg_hi - seg_lo) / step).ceil() as usize;
        let mut best = (f64::NEG_INFINITY, seg_lo);
        for i in 0..=n {
            let p = (seg_lo + i as f64 * step).min(seg_hi);
            let v = t(p);
            if v > best.0 {
                best = (v, p);
            }
        }
        let lo = (best.1 - step).max(seg_lo);
        let hi = (best.1 + step).min(seg_hi);
        sup_ln = sup_ln.max(best.0).max(golden_max(t, lo, hi));
        seg_lo += 2.0;
    }
    // tail envelope: T(p) ≤ E/p with E = max p·T(p) over [p_tail/2, p_tail]
    let mut e_ln = f64::NEG_INFINITY;
    let mut p = 0.5 * p_tail;
    while p <= p_tail {
        let k = ((p + 1.0) / 2.0).floor();
        e_ln = e_ln.max(p.ln() + ln_surplus_beta_term(p, k, a, b));
        p += 0.25;
    }
    let tail = (e_ln - p_tail.ln()).exp();
    Ok((ln_beta(0.5 * a + b, b)).exp() + sup_ln.exp().max(tail))
}

/// Constants of the normalized-moment recursion for one forcing and one
/// normalization `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConstants {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    /// `K_ε = 1/(1 − γ_{1+ε})`.
    pub k_eps: f64,
    /// `A(a, b)`.
    pub a_ab: f64,
    /// Bounds of `2p(2p+1)/((ap−a+b)(ap+1−a+b))` on `p ≥ 1+ε`.
    pub c3: f64,
    pub big_c3: f64,
    /// `A · sup_{p≥1+ε} 4(ap + a/2 + 2b − 1)/(p+1)`.
    pub c4: f64,
    /// Bounds of `2p/(ap+b)` on `p ≥ 1+ε`.
    pub c5: f64,
    pub big_c5: f64,
    /// Smallest half-integer from which the Gamma-ratio prefactor
    /// conditions hold; `+∞` if they never do (e.g. `b` too large).
    pub p1: f64,
}

impl PropagationConstants {
    pub fn compute(
        model: &ForcingModel,
        params: &RestitutionParams<f64>,
        a: f64,
        b: f64,
        eps: f64,
    ) -> Result<Self> {
        model.validate()?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParam(format!("eps = {eps} must be positive")));
        }
        let a_ab = compute_surplus_constant(a, b)?;
        let p_lo = 1.0 + eps;
        let k_eps = 1.0 / (1.0 - gamma_p(params, p_lo)?.value);

        let f3 = |p: f64| 2.0 * p * (2.0 * p + 1.0) / ((a * p - a + b) * (a * p + 1.0 - a + b));
        let (mut c3, mut big_c3) = (4.0 / (a * a), 4.0 / (a * a));
        let mut p = p_lo;
        while p < 1e7 {
            let v = f3(p);
            c3 = c3.min(v);
            big_c3 = big_c3.max(v);
            p *= 1.005;
        }
        // Möbius maps are monotone, so endpoint and limit values bound them
        let f4 = |p: f64| 4.0 * (a * p + 0.5 * a + 2.0 * b - 1.0) / (p + 1.0);
        let c4 = a_ab * f4(p_lo).max(4.0 * a);
        let f5 = |p: f64| 2.0 * p / (a * p + b);
        let (c5, big_c5) = (f5(p_lo).min(2.0 / a), f5(p_lo).max(2.0 / a));

        let h = 0.5 * a;
        let cond = |p: f64| -> bool {
            let x = a * p;
            match *model {
                ForcingModel::DiffusionFriction { lambda, .. } => {
                    c4.ln() + ln_gamma_ratio(x, h + 2.0 * b - 1.0, b + 1.0) <= (0.5 * c5 * lambda).ln()
                        && ln_gamma_ratio(x, h + b, b + 1.0) <= 0.0
                }
                _ => (c4 * k_eps).ln() + ln_gamma_ratio(x, h + 2.0 * b - 1.0, h + b) <= 0.5f64.ln(),
            }
        };
        let p1 = first_true(cond, p_lo);
        Ok(Self {
            a,
            b,
            eps,
            k_eps,
            a_ab,
            c3,
            big_c3,
            c4,
            c5,
            big_c5,
            p1,
        })
    }
}

/// Smallest half-integer `p ≥ start` with `cond(p)`, for a condition that
/// stays true once it holds.
fn first_true<F: Fn(f64) -> bool>(cond: F, start: f64) -> f64 {
    let snap = |p: f64| (2.0 * p).ceil() / 2.0;
    let mut lo = snap(start);
    if cond(lo) {
        return lo;
    }
    let mut hi = 2.0 * lo;
    while !cond(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    for _ in 0..2000 {
        let mid = snap(0.5 * (lo + hi));
        if mid <= lo || mid >= hi {
            break;
        }
        if cond(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    snap(hi)
}
