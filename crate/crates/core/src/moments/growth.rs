use serde::{Deserialize, Serialize};

use super::normalized::{Growth, NormalizedMoments};
use super::Side;
use crate::linfit::weighted_least_squares;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    /// Largest admissible `|δ|` in `ln z_p ≈ α + θp + c ln p + δ p ln p`.
    pub trend_tol: f64,
    pub min_points: usize,
    /// The trend is fitted on the top `trend_window` fraction of the range.
    pub trend_window: f64,
    /// Moving-average length (grid points) applied before the trend fit;
    /// 12 points span whole periods of both the 3- and 4-point ripples of
    /// propagated bounds.
    pub smooth_points: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            trend_tol: 0.15,
            min_points: 8,
            trend_window: 0.5,
            smooth_points: 12,
        }
    }
}

/// Outcome of [`geometric_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricCheck {
    /// `inf (z_lo(p+1/2)/z_lo(p))²`.
    pub q: f64,
    /// `sup (z_hi(p+1/2)/z_hi(p))²`.
    pub big_q: f64,
    /// `min z_lo(p)/q^p`.
    pub c: f64,
    /// `max z_hi(p)/Q^p`.
    pub big_c: f64,
    /// `δ` fitted to the upper endpoints.
    pub trend_hi: f64,
    /// `δ` fitted to the lower endpoints; `None` for one-sided grids or
    /// when the lower endpoints are not all positive.
    pub trend_lo: Option<f64>,
    pub p_from: f64,
    pub p_to: f64,
    pub n_points: usize,
    pub holds: bool,
}

impl GeometricCheck {
    pub fn growth(&self) -> Growth {
        Growth {
            q: self.q,
            big_q: self.big_q,
            c: self.c,
            big_c: self.big_c,
            p_from: self.p_from,
            p_to: self.p_to,
        }
    }
}

/// Super-geometric trend `δ` of a log-series: moving average over
/// `smooth` points, then a fit on the top `window` fraction.
fn trend(series: &[(f64, f64)], window: f64, smooth: usize) -> Option<f64> {
    let smooth = smooth.max(1);
    if series.len() < smooth + 4 {
        return None;
    }
    let inv = 1.0 / smooth as f64;
    let smoothed: Vec<(f64, f64)> = series
        .windows(smooth)
        .map(|w| {
            let (sp, sv) = w.iter().fold((0.0, 0.0), |(a, b), &(p, v)| (a + p, b + v));
            (sp * inv, sv * inv)
        })
        .collect();
    let (first, last) = (smoothed.first()?.0, smoothed.last()?.0);
    let cut = last - window.clamp(0.0, 1.0) * (last - first);
    let top: Vec<(f64, f64)> = smoothed.into_iter().filter(|&(p, _)| p >= cut - 1e-12).collect();
    let x: Vec<Vec<f64>> = top
        .iter()
        .map(|&(p, _)| vec![1.0, p, p.ln(), p * p.ln()])
        .collect();
    let y: Vec<f64> = top.iter().map(|&(_, v)| v).collect();
    weighted_least_squares(&x, &y, None).map(|f| f.coef[3])
}

/// Extreme squared half-step ratio and matching prefactor of a log-series.
fn envelope(series: &[(f64, f64)], upper: bool) -> (f64, f64) {
    let pick = |a: f64, b: f64| if upper { a.max(b) } else { a.min(b) };
    let init = if upper { f64::NEG_INFINITY } else { f64::INFINITY };
    let ln_ratio = series
        .windows(2)
        .filter(|w| (w[1].0 - w[0].0 - 0.5).abs() < 1e-12)
        .map(|w| 2.0 * (w[1].1 - w[0].1))
        .fold(init, pick);
    let ln_pref = series
        .iter()
        .map(|&(p, v)| v - p * ln_ratio)
        .fold(init, pick);
    (ln_ratio.exp(), ln_pref.exp())
}

/// Tests `c q^p ≤ z_p ≤ C Q^p` for `p ≥ p_from`.
///
/// `q`, `Q` are the extreme squared half-step ratios of the lower and
/// upper endpoints. On a finite grid those are always finite, so the
/// verdict rests on the trend `δ` of `ln z ≈ α + θp + c ln p + δ p ln p`
/// over the top of the range. A normalization off by `Δa` from the true
/// growth leaves `δ ≈ −Δa`.
///
/// Lower endpoints must be trend-free (`|δ_lo| ≤ tol`): a decaying lower
/// endpoint cannot certify `q > 0`, a growing one proves `Q = ∞`. Upper
/// endpoints only need `δ_hi ≤ tol`; they lag the true growth over finite
/// ranges and never certify decay. One-sided grids are judged on their
/// upper endpoints alone.
pub fn geometric_check(z: &NormalizedMoments, p_from: f64) -> GeometricCheck {
    geometric_check_with(z, p_from, &GrowthConfig::default())
}

pub fn geometric_check_with(z: &NormalizedMoments, p_from: f64, cfg: &GrowthConfig) -> GeometricCheck {
    let p_from = p_from.max(0.5);
    let hi = z.series(Side::Hi, p_from);
    let lo = z.series(Side::Lo, p_from);
    let n_points = hi.len();
    let (big_q, big_c) = envelope(&hi, true);
    let (q, c) = if lo.len() == n_points && n_points >= 2 {
        envelope(&lo, false)
    } else {
        (0.0, 0.0)
    };
    let trend_hi = trend(&hi, cfg.trend_window, cfg.smooth_points).unwrap_or(f64::NAN);
    let trend_lo = if z.upper_only || lo.len() != n_points {
        None
    } else {
        trend(&lo, cfg.trend_window, cfg.smooth_points)
    };
    let positive = |x: f64| x > 0.0 && x.is_finite();
    let upper_ok = positive(big_q) && positive(big_c) && trend_hi <= cfg.trend_tol;
    let lower_ok = z.upper_only
        || (positive(q) && positive(c) && trend_lo.is_some_and(|d| d.abs() <= cfg.trend_tol));
    GeometricCheck {
        q,
        big_q,
        c,
        big_c,
        trend_hi,
        trend_lo,
        p_from,
        p_to: hi.last().map_or(p_from, |x| x.0),
        n_points,
        holds: n_points >= cfg.min_points && upper_ok && lower_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::LnInterval;
    use crate::special::ln_gamma;

    fn table(f: impl Fn(f64) -> f64, n: usize) -> NormalizedMoments {
        NormalizedMoments::from_ln(
            1.0,
            1.0,
            (0..n).map(|k| LnInterval::exact(f(k as f64 / 2.0))).collect(),
        )
    }

    #[test]
    fn geometric_sequence_holds() {
        let z = table(|p| p * 3f64.ln(), 41);
        let g = geometric_check(&z, 1.0);
        assert!((g.q - 3.0).abs() < 1e-12 && (g.big_q - 3.0).abs() < 1e-12);
        assert!((g.c - 1.0).abs() < 1e-12 && (g.big_c - 1.0).abs() < 1e-12);
        assert!(g.holds);
    }

    #[test]
    fn factorial_growth_fails() {
        let z = table(|p| ln_gamma(p + 1.0), 41);
        let g = geometric_check(&z, 1.0);
        assert!(!g.holds);
        assert!((g.trend_hi - 1.0).abs() < 0.1, "{}", g.trend_hi);
    }

    #[test]
    fn decaying_upper_endpoints_pass_decaying_lower_fail() {
        let entries = |lo_shift: f64, hi_shift: f64| {
            (0..41)
                .map(|k| {
                    let p = k as f64 / 2.0;
                    let d = p * (p + 1.0).ln();
                    LnInterval {
                        lo: p - 1.0 - lo_shift * d,
                        hi: 3.0 * p + 1.0 - hi_shift * d,
                    }
                })
                .collect()
        };
        let z = NormalizedMoments::from_ln(1.0, 1.0, entries(0.0, 0.3));
        assert!(geometric_check(&z, 1.0).holds);
        let z = NormalizedMoments::from_ln(1.0, 1.0, entries(0.5, 0.0));
        assert!(!geometric_check(&z, 1.0).holds);
    }

    #[test]
    fn too_few_points_fail() {
        let z = table(|p| p, 6);
        assert!(!geometric_check(&z, 0.0).holds);
    }
}
