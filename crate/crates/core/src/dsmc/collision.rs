use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::kernel::RestitutionParams;
use crate::Vector;

const REFRESH_STEPS: u32 = 100;
const COLLIDE_KEY: u64 = 0x6a09_e667_f3bc_c908;

/// A candidate pair with its scattering direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub i: usize,
    pub j: usize,
    pub sigma: Vector,
    /// `u = v_i − v_j` before the collision.
    pub u: Vector,
    pub accepted: bool,
}

/// `v' = v + (β/2)(|u|σ − u)`, `w' = w − (β/2)(|u|σ − u)`.
#[inline]
pub fn post_collision(v: Vector, w: Vector, sigma: Vector, beta: f64) -> (Vector, Vector) {
    let u = v - w;
    let d = (sigma * u.norm() - u) * (0.5 * beta);
    (v + d, w - d)
}

/// `|v'|² + |w'|² − |v|² − |w|² = −β(1−β)|u|²(1 − ν·σ)`.
pub fn pair_energy_change(u: Vector, sigma: Vector, beta: f64) -> f64 {
    let g = u.norm();
    if g == 0.0 {
        return 0.0;
    }
    -beta * (1.0 - beta) * g * g * (1.0 - u.dot(sigma) / g)
}

/// Uniform direction on the unit sphere.
#[inline]
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vector {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vector::new(s * phi.cos(), s * phi.sin(), z)
}

impl CollisionEvent {
    pub fn new(ens: &ParticleEnsemble, i: usize, j: usize, sigma: Vector) -> Result<Self> {
        let n = ens.len();
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidParam(format!("bad pair ({i}, {j}) for {n} particles")));
        }
        Ok(Self {
            i,
            j,
            sigma,
            u: ens.velocities[i] - ens.velocities[j],
            accepted: true,
        })
    }
}

impl ParticleEnsemble {
    /// Applies an accepted event; returns the pair energy change.
    pub fn apply_collision(&mut self, ev: &CollisionEvent, params: &RestitutionParams<f64>) -> f64 {
        if !ev.accepted {
            return 0.0;
        }
        let (v, w) = (self.velocities[ev.i], self.velocities[ev.j]);
        let (v1, w1) = post_collision(v, w, ev.sigma, params.beta);
        self.velocities[ev.i] = v1;
        self.velocities[ev.j] = w1;
        v1.norm2() + w1.norm2() - v.norm2() - w.norm2()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BatchStats {
    accepted: u64,
    overflows: u64,
    ratio_sum: f64,
    energy: f64,
    max_overflow: f64,
}

fn collide_batch<R: Rng>(
    rng: &mut R,
    v: &mut [Vector],
    candidates: u64,
    u_max: f64,
    beta: f64,
) -> BatchStats {
    let n = v.len();
    let mut st = BatchStats::default();
    if n < 2 {
        return st;
    }
    for _ in 0..candidates {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let u = v[i] - v[j];
        let g = u.norm();
        let accept = if g > u_max {
            st.overflows += 1;
            st.max_overflow = st.max_overflow.max(g);
            true
        } else {
            rng.random::<f64>() * u_max < g
        };
        if !accept {
            continue;
        }
        let sigma = sample_sphere(rng);
        let (a, b) = (v[i], v[j]);
        let d = (sigma * g - u) * (0.5 * beta);
        let (a1, b1) = (a + d, b - d);
        v[i] = a1;
        v[j] = b1;
        st.accepted += 1;
        st.ratio_sum += (g / u_max).min(1.0);
        st.energy += a1.norm2() + b1.norm2() - a.norm2() - b.norm2();
    }
    st
}

/// One collision step of length `dt`: `N·dt·U_max/2` expected candidates
/// (fractional part carried), acceptance `|u|/U_max`, `σ` uniform.
///
/// Pairs above the majorant are executed and raise `U_max` for the next
/// step. Advances `ens.time` by `dt`. Returns the accepted count.
pub fn collision_step(
    ens: &mut ParticleEnsemble,
    params: &RestitutionParams<f64>,
    dt: f64,
) -> Result<u64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParam(format!("dt must be positive (got {dt})")));
    }
    if ens.majorant.steps_since_refresh >= REFRESH_STEPS {
        ens.refresh_majorant();
    }
    ens.majorant.steps_since_refresh += 1;
    let n = ens.len();
    let u_max = ens.majorant.u_max;
    let expected = n as f64 * dt * u_max / 2.0 + ens.majorant.carry;
    let candidates = expected.floor();
    ens.majorant.carry = expected - candidates;
    let candidates = candidates as u64;
    let beta = params.beta;

    let st = if ens.partitions <= 1 || candidates == 0 {
        collide_batch(&mut ens.rng, &mut ens.velocities, candidates, u_max, beta)
    } else {
        collide_partitioned(ens, candidates, u_max, beta)
    };

    let s = &mut ens.stats;
    s.steps += 1;
    s.candidates += candidates;
    s.accepted += st.accepted;
    s.overflows += st.overflows;
    s.accepted_ratio_sum += st.ratio_sum;
    s.collision_energy += st.energy / n as f64;
    if st.max_overflow > 0.0 {
        ens.majorant.u_max = ens.majorant.u_max.max(1.5 * st.max_overflow);
    }
    ens.step_counter += 1;
    ens.time += dt;
    Ok(st.accepted)
}

/// Random partition into disjoint batches, each with its own counter-based
/// stream keyed by `(step, batch)`.
fn collide_partitioned(ens: &mut ParticleEnsemble, candidates: u64, u_max: f64, beta: f64) -> BatchStats {
    let n = ens.len();
    let parts = ens.partitions.min(n / 2).max(1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ens.rng);
    let (base, extra) = (n / parts, n % parts);
    let (cbase, cextra) = (candidates / parts as u64, candidates % parts as u64);
    let mut jobs = Vec::with_capacity(parts);
    let mut start = 0;
    for b in 0..parts {
        let len = base + usize::from(b < extra);
        let idx = perm[start..start + len].to_vec();
        let vel: Vec<Vector> = idx.iter().map(|&k| ens.velocities[k]).collect();
        jobs.push((b, idx, vel, cbase + u64::from((b as u64) < cextra)));
        start += len;
    }
    let seed = ens.seed() ^ COLLIDE_KEY;
    let step = ens.step_counter;
    let results: Vec<(Vec<usize>, Vec<Vector>, BatchStats)> = jobs
        .into_par_iter()
        .map(|(b, idx, mut vel, cand)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(step.wrapping_mul(parts as u64).wrapping_add(b as u64));
            let st = collide_batch(&mut rng, &mut vel, cand, u_max, beta);
            (idx, vel, st)
        })
        .collect();
    let mut total = BatchStats::default();
    for (idx, vel, st) in results {
        for (k, v) in idx.into_iter().zip(vel) {
            ens.velocities[k] = v;
        }
        total.accepted += st.accepted;
        total.overflows += st.overflows;
        total.ratio_sum += st.ratio_sum;
        total.energy += st.energy;
        total.max_overflow = total.max_overflow.max(st.max_overflow);
    }
    total
}
