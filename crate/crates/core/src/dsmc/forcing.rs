use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::moments::ForcingModel;
use crate::Vector;

const FORCE_KEY: u64 = 0xbb67_ae85_84ca_a73b;

/// Exact per-particle map of the forcing over `dt`.
#[derive(Debug, Clone, Copy)]
enum Map {
    /// `v ← a v + b ξ`.
    Affine { a: f64, b: f64 },
    /// `v₂ += k v₁`.
    Shear { k: f64 },
}

impl Map {
    fn new(model: &ForcingModel, dt: f64) -> Self {
        match *model {
            ForcingModel::PureDiffusion { mu } => Map::Affine {
                a: 1.0,
                b: (2.0 * mu * dt).sqrt(),
            },
            ForcingModel::DiffusionFriction { mu, lambda } => Map::Affine {
                a: (-lambda * dt).exp(),
                b: ((mu / lambda) * -(-2.0 * lambda * dt).exp_m1()).sqrt(),
            },
            ForcingModel::NegativeFriction { kappa } => Map::Affine {
                a: (kappa * dt).exp(),
                b: 0.0,
            },
            ForcingModel::ShearFlow { kappa } => Map::Shear { k: kappa * dt },
        }
    }

    fn apply<R: Rng>(self, rng: &mut R, vs: &mut [Vector]) {
        match self {
            Map::Affine { a, b: 0.0 } => {
                for v in vs {
                    *v = *v * a;
                }
            }
            Map::Affine { a, b } => {
                for v in vs {
                    let x: f64 = StandardNormal.sample(rng);
                    let y: f64 = StandardNormal.sample(rng);
                    let z: f64 = StandardNormal.sample(rng);
                    *v = *v * a + Vector::new(x, y, z) * b;
                }
            }
            Map::Shear { k } => {
                for v in vs {
                    v.y += k * v.x;
                }
            }
        }
    }
}

/// Applies the exact forcing map over `dt`, then removes the mean velocity.
///
/// Does not advance `ens.time`.
pub fn forcing_step(ens: &mut ParticleEnsemble, model: &ForcingModel, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParam(format!("dt must be positive (got {dt})")));
    }
    model.validate()?;
    let map = Map::new(model, dt);
    let e0 = ens.energy();
    if ens.partitions <= 1 {
        map.apply(&mut ens.rng, &mut ens.velocities);
    } else {
        let chunk = ens.len().div_ceil(ens.partitions);
        let seed = ens.seed() ^ FORCE_KEY;
        let base = ens.force_counter.wrapping_mul(ens.partitions as u64);
        ens.velocities
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(b, vs)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(base.wrapping_add(b as u64));
                map.apply(&mut rng, vs);
            });
    }
    ens.force_counter += 1;
    let drift = ens.recenter();
    ens.stats.max_recenter = ens.stats.max_recenter.max(drift);
    ens.stats.forcing_energy += ens.energy() - e0;
    Ok(())
}

/// Energy input per unit mass and time of one forcing step of length `dt`,
/// from `m₁`, `⟨v₁v₂⟩` and `⟨v₁²⟩` of the state it acts on.
pub fn forcing_power(model: &ForcingModel, dt: f64, m1: f64, v1v2: f64, v1sq: f64) -> f64 {
    match *model {
        ForcingModel::PureDiffusion { mu } => 6.0 * mu,
        ForcingModel::DiffusionFriction { mu, lambda } => {
            let decay = -(-2.0 * lambda * dt).exp_m1();
            (3.0 * mu / lambda - m1) * decay / dt
        }
        ForcingModel::NegativeFriction { kappa } => m1 * (2.0 * kappa * dt).exp_m1() / dt,
        ForcingModel::ShearFlow { kappa } => 2.0 * kappa * v1v2 + kappa * kappa * dt * v1sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsmc::init_ensemble;

    #[test]
    fn anti_drag_scales_speed() {
        let v = Vector::new(0.3, -1.2, 2.0);
        let mut ens = ParticleEnsemble::from_velocities(vec![v, -v], 0).unwrap();
        let model = ForcingModel::NegativeFriction { kappa: 0.7 };
        forcing_step(&mut ens, &model, 0.25).unwrap();
        let f = (0.7f64 * 0.25).exp();
        assert!((ens.velocities()[0].norm() - f * v.norm()).abs() < 1e-14);
    }

    #[test]
    fn shear_characteristic_map() {
        let e1 = Vector::new(1.0, 0.0, 0.0);
        let mut ens = ParticleEnsemble::from_velocities(vec![e1, -e1], 0).unwrap();
        forcing_step(&mut ens, &ForcingModel::ShearFlow { kappa: 1.0 }, 0.1).unwrap();
        let v = ens.velocities()[0];
        assert_eq!((v.x, v.z), (1.0, 0.0));
        assert!((v.y - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ornstein_uhlenbeck_relaxes_to_unit_variance() {
        let mut ens = init_ensemble(50_000, 0.0, 1).unwrap();
        let model = ForcingModel::DiffusionFriction { mu: 1.0, lambda: 1.0 };
        forcing_step(&mut ens, &model, 50.0).unwrap();
        let m1 = ens.energy();
        // var(|v|²) = 6 at unit component variance
        assert!((m1 - 3.0).abs() < 4.0 * (6.0f64 / 50_000.0).sqrt(), "{m1}");
    }

    #[test]
    fn brownian_kicks_grow_energy_linearly() {
        let mut ens = init_ensemble(50_000, 1.0, 2).unwrap();
        let e0 = ens.energy();
        let model = ForcingModel::PureDiffusion { mu: 0.5 };
        for _ in 0..10 {
            forcing_step(&mut ens, &model, 0.1).unwrap();
        }
        assert!((ens.energy() - e0 - 3.0).abs() < 0.1);
        assert!(ens.mean_velocity().norm() < 1e-14);
        assert!((ens.stats.forcing_energy - (ens.energy() - e0)).abs() < 1e-12);
    }

    #[test]
    fn partitioned_forcing_is_reproducible() {
        let model = ForcingModel::PureDiffusion { mu: 1.0 };
        let run = || {
            let mut ens = init_ensemble(1000, 1.0, 9).unwrap().with_partitions(3);
            forcing_step(&mut ens, &model, 0.1).unwrap();
            forcing_step(&mut ens, &model, 0.1).unwrap();
            ens
        };
        assert_eq!(run().velocities(), run().velocities());
    }

    #[test]
    fn discrete_power_limits() {
        let nf = ForcingModel::NegativeFriction { kappa: 0.2 };
        assert!((forcing_power(&nf, 1e-8, 2.0, 0.0, 0.0) - 0.8).abs() < 1e-7);
        let df = ForcingModel::DiffusionFriction { mu: 1.0, lambda: 2.0 };
        assert!((forcing_power(&df, 1e-8, 1.0, 0.0, 0.0) - (6.0 - 4.0)).abs() < 1e-6);
        assert!(forcing_step(&mut init_ensemble(4, 1.0, 0).unwrap(), &nf, 0.0).is_err());
    }
}
