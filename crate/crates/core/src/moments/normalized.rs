use std::io::Write;

use serde::{Deserialize, Serialize};

use super::balance::surplus_terms;
use super::grid::{LnInterval, MomentGrid};
use super::{compute_surplus_constant, Side};
use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Geometric envelope `c q^p ≤ z_p ≤ C Q^p` found on a range of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub q: f64,
    pub big_q: f64,
    pub c: f64,
    pub big_c: f64,
    pub p_from: f64,
    pub p_to: f64,
}

/// Normalized moments `z_p = m_p / Γ(ap + b)` in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMoments {
    pub a: f64,
    pub b: f64,
    entries: Vec<LnInterval>,
    /// Only the upper endpoints are informative.
    pub upper_only: bool,
    pub growth: Option<Growth>,
}

/// Default `b` for a normalization exponent: `1.4` at `a = 1`, `0.9`
/// otherwise.
pub fn default_b(a: f64) -> f64 {
    if (a - 1.0).abs() < 1e-12 {
        1.4
    } else {
        0.9
    }
}

/// `z_p = m_p / Γ(ap + b)` for every grid order.
pub fn normalize(grid: &MomentGrid, a: f64, b: f64) -> Result<NormalizedMoments> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParam(format!("normalization needs a, b > 0 (got {a}, {b})")));
    }
    let entries = grid
        .entries()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let lg = ln_gamma(a * k as f64 / 2.0 + b);
            LnInterval {
                lo: e.lo - lg,
                hi: e.hi - lg,
            }
        })
        .collect();
    Ok(NormalizedMoments {
        a,
        b,
        entries,
        upper_only: grid.upper_only,
        growth: None,
    })
}

impl NormalizedMoments {
    /// Builds normalized moments directly from `ln z` intervals on the grid
    /// `p = 0, 1/2, …`.
    pub fn from_ln(a: f64, b: f64, entries: Vec<LnInterval>) -> Self {
        Self {
            a,
            b,
            entries,
            upper_only: false,
            growth: None,
        }
    }

    pub fn entries(&self) -> &[LnInterval] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ln_z(&self, p: f64) -> Option<LnInterval> {
        MomentGrid::index(p).and_then(|k| self.entries.get(k).copied())
    }

    /// `(p, ln z)` pairs on one side over `p ≥ p_from`, skipping
    /// non-finite values.
    pub fn series(&self, side: Side, p_from: f64) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(k, e)| (k as f64 / 2.0, e.side(side)))
            .filter(|&(p, v)| p >= p_from && v.is_finite())
            .collect()
    }

    /// Writes `p,a,b,z_lo,z_hi` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "a", "b", "z_lo", "z_hi"])?;
        for (k, e) in self.entries.iter().enumerate() {
            w.serialize((k as f64 / 2.0, self.a, self.b, e.lo.exp(), e.hi.exp()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `ln[A · Γ(ap + a/2 + 2b) · Z_p]` with
/// `Z_p = max_{1≤k≤k_p} {z_{k+1/2} z_{p−k}, z_k z_{p−k+1/2}}` from upper
/// endpoints.
pub fn ln_surplus_normalized_bound(p: f64, z: &NormalizedMoments, a_ab: f64) -> Result<f64> {
    let terms = surplus_terms(p)?;
    let missing: Vec<f64> = terms
        .iter()
        .flat_map(|&(_, i, j)| [i, j])
        .filter(|&k| k >= z.entries.len())
        .map(|k| k as f64 / 2.0)
        .collect();
    if !missing.is_empty() {
        let mut m = missing;
        m.sort_by(f64::total_cmp);
        m.dedup();
        return Err(Error::MissingMoments(m));
    }
    let ln_zp = terms
        .iter()
        .map(|&(_, i, j)| z.entries[i].hi + z.entries[j].hi)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(a_ab.ln() + ln_gamma(z.a * p + 0.5 * z.a + 2.0 * z.b) + ln_zp)
}

/// `A(a,b) Γ(ap + a/2 + 2b) Z_p`, computing `A` for the normalization of `z`.
pub fn surplus_normalized_bound(p: f64, z: &NormalizedMoments) -> Result<f64> {
    let a_ab = compute_surplus_constant(z.a, z.b)?;
    surplus_normalized_bound_with(p, z, a_ab)
}

/// As [`surplus_normalized_bound`] with a precomputed `A(a,b)`.
pub fn surplus_normalized_bound_with(p: f64, z: &NormalizedMoments, a_ab: f64) -> Result<f64> {
    ln_surplus_normalized_bound(p, z, a_ab).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::ln_surplus;

    #[test]
    fn gamma_table_normalizes_to_one() {
        let (a, b) = (4.0 / 3.0, 0.9);
        let vals: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let m = ln_gamma(a * k as f64 / 2.0 + b).exp();
                (m, m)
            })
            .collect();
        let z = normalize(&MomentGrid::from_values(&vals).unwrap(), a, b).unwrap();
        for e in z.entries() {
            assert!(e.lo.abs() < 1e-12 && e.hi.abs() < 1e-12);
        }
    }

    #[test]
    fn maxwellian_is_exactly_geometric_at_a_one() {
        let t: f64 = 0.7;
        let vals: Vec<(f64, f64)> = (0..16)
            .map(|k| {
                let p = k as f64 / 2.0;
                let m = (p * (2.0 * t).ln() + ln_gamma(p + 1.5) - ln_gamma(1.5)).exp();
                (m, m)
            })
            .collect();
        let z = normalize(&MomentGrid::from_values(&vals).unwrap(), 1.0, 1.5).unwrap();
        for w in z.entries().windows(2) {
            assert!((w[1].hi - w[0].hi - 0.5 * (2.0 * t).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroth_moment_normalizes_to_one_at_b_one() {
        let g = MomentGrid::seeded(2.0).unwrap();
        let z = normalize(&g, 2.0, 1.0).unwrap();
        assert!(z.entries()[0].hi.abs() < 1e-14);
    }

    #[test]
    fn normalized_bound_dominates_direct_surplus() {
        let (a, b) = (1.0, 0.5);
        let vals: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let m = ln_gamma(k as f64 / 2.0 + 0.5).exp();
                (m, m)
            })
            .collect();
        let g = MomentGrid::from_values(&vals).unwrap();
        let z = normalize(&g, a, b).unwrap();
        let a_ab = compute_surplus_constant(a, b).unwrap();
        let bound = ln_surplus_normalized_bound(4.0, &z, a_ab).unwrap();
        assert!((bound - (a_ab.ln() + ln_gamma(5.5))).abs() < 1e-10);
        assert!(ln_surplus(4.0, &g, Side::Hi).unwrap() <= bound);
    }

    #[test]
    fn vanishing_z_gives_zero_bound() {
        let z = NormalizedMoments::from_ln(1.0, 0.5, vec![LnInterval::exact(f64::NEG_INFINITY); 8]);
        assert_eq!(surplus_normalized_bound_with(3.0, &z, 2.0).unwrap(), 0.0);
    }
}
