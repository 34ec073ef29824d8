#![allow(dead_code)]

use granular_core::kernel::a_plus_moment;
use granular_core::moments::{LnInterval, MomentGrid};
use granular_core::special::ln_gamma;
use granular_core::{Params, Vector};
use rand::Rng;

/// Discrete velocity distribution: `(weight, velocity)` atoms.
pub type Ensemble = Vec<(f64, Vector)>;

/// Random `k`-atom ensemble with unit mass and zero momentum.
pub fn random_ensemble<R: Rng>(rng: &mut R, k: usize) -> Ensemble {
    let raw: Vec<(f64, Vector)> = (0..k)
        .map(|_| {
            let w: f64 = rng.random_range(0.1..1.0);
            let v = Vector::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            (w, v)
        })
        .collect();
    let total: f64 = raw.iter().map(|a| a.0).sum();
    let mean = raw
        .iter()
        .fold(Vector::zero(), |acc, &(w, v)| acc + v * (w / total));
    raw.into_iter().map(|(w, v)| (w / total, v - mean)).collect()
}

pub fn ensemble_moment(e: &Ensemble, p: f64) -> f64 {
    e.iter().map(|&(w, v)| w * v.norm2().powf(p)).sum()
}

/// Exact moment grid `p = 0, 1/2, …, p_max` of an ensemble.
pub fn ensemble_grid(e: &Ensemble, p_max: f64) -> MomentGrid {
    let n = (2.0 * p_max).round() as usize + 1;
    MomentGrid::from_ln(
        (0..n)
            .map(|k| LnInterval::exact(ensemble_moment(e, k as f64 / 2.0).ln()))
            .collect(),
    )
    .unwrap()
}

/// `Q_p = ½ Σᵢⱼ wᵢwⱼ |vᵢ−vⱼ| (A⁺ − |vᵢ|^{2p} − |vⱼ|^{2p})`.
pub fn exact_collision_moment(e: &Ensemble, params: &Params, p: f64) -> f64 {
    let mut q = 0.0;
    for (i, &(wi, vi)) in e.iter().enumerate() {
        for &(wj, vj) in &e[i + 1..] {
            let u = (vi - vj).norm();
            let gain = a_plus_moment(vi, vj, params, p).unwrap();
            // the (i, j) and (j, i) terms coincide
            q += wi * wj * u * (gain - vi.norm2().powf(p) - vj.norm2().powf(p));
        }
    }
    q
}

/// `ln E|v|^{2p}` for the Maxwellian with per-component temperature `t`.
pub fn maxwellian_ln_moment(t: f64, p: f64) -> f64 {
    p * (2.0 * t).ln() + ln_gamma(p + 1.5) - ln_gamma(1.5)
}

pub fn maxwellian_grid(t: f64, p_max: f64) -> MomentGrid {
    let n = (2.0 * p_max).round() as usize + 1;
    MomentGrid::from_ln(
        (0..n)
            .map(|k| LnInterval::exact(maxwellian_ln_moment(t, k as f64 / 2.0)))
            .collect(),
    )
    .unwrap()
}
