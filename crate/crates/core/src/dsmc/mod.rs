//! Space-homogeneous particle solver: Maxwellian initialization, majorant
//! collision sampling, exact forcing maps and steady-state averaging.

mod collision;
mod ensemble;
mod forcing;
mod stats;
mod steady;
mod tailfit;

pub use collision::{collision_step, pair_energy_change, post_collision, sample_sphere, CollisionEvent};
pub use ensemble::{init_ensemble, CollisionStats, ParticleEnsemble};
pub use forcing::{forcing_power, forcing_step};
pub use stats::{
    empirical_moments, empirical_moments_with, group_jackknife, p_max_reliable, MomentConfig, MomentEstimate,
    MomentTable, SpeedHistogram,
};
pub use steady::{empirical_tail_config, run_to_steady, Diagnostics, EnergyBalance, RunConfig, SteadyStateReport};
pub use tailfit::{fit_tail, fit_tail_with, TailFit, TailFitConfig};
