//! Moment inequalities for steady states: collision-moment bounds, forcing
//! moments, interval propagation on the half-integer grid, normalized
//! moments and tail-order estimation.

mod balance;
mod constants;
mod grid;
mod growth;
mod normalized;
mod propagate;
mod tail;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use balance::{
    collision_bounds, collision_moment_interval, forcing_moment, ln_surplus, steady_balance_interval,
    surplus,
};
pub use constants::{compute_surplus_constant, PropagationConstants};
pub use grid::{jensen_closure, LnInterval, MomentGrid};
pub use growth::{geometric_check, geometric_check_with, GeometricCheck, GrowthConfig};
pub use normalized::{
    default_b, ln_surplus_normalized_bound, normalize, surplus_normalized_bound,
    surplus_normalized_bound_with, Growth, NormalizedMoments,
};
pub use propagate::{propagate, propagate_with, PropagateConfig, PropagationDiagnostics, Seed, StepRecord};
pub use tail::{estimate_tail_order, estimate_tail_order_with, TailConfig, TailEstimate, TailMethod};

/// Velocity-space forcing applied to the gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ForcingModel {
    /// `μ Δf`.
    PureDiffusion { mu: f64 },
    /// `μ Δf + λ div(v f)`.
    DiffusionFriction { mu: f64, lambda: f64 },
    /// `−κ div(v f)`: anti-drag, equivalent to the rescaled cooling state.
    NegativeFriction { kappa: f64 },
    /// `−κ v₁ ∂f/∂v₂`.
    ShearFlow { kappa: f64 },
}

impl ForcingModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!("{name} = {x} must be positive and finite")))
            }
        };
        match *self {
            Self::PureDiffusion { mu } => positive("mu", mu),
            Self::DiffusionFriction { mu, lambda } => {
                positive("mu", mu)?;
                positive("lambda", lambda)
            }
            Self::NegativeFriction { kappa } | Self::ShearFlow { kappa } => positive("kappa", kappa),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PureDiffusion { .. } => "PureDiffusion",
            Self::DiffusionFriction { .. } => "DiffusionFriction",
            Self::NegativeFriction { .. } => "NegativeFriction",
            Self::ShearFlow { .. } => "ShearFlow",
        }
    }

    /// Normalization exponent `a = 2/s` for the tail order predicted for
    /// this forcing (`s = 3/2, 2, 1, 1`).
    pub fn predicted_a(&self) -> f64 {
        match self {
            Self::PureDiffusion { .. } => 4.0 / 3.0,
            Self::DiffusionFriction { .. } => 1.0,
            Self::NegativeFriction { .. } | Self::ShearFlow { .. } => 2.0,
        }
    }

    /// Largest relaxation rate of the forcing (`λ` or `κ`), zero for pure
    /// diffusion.
    pub fn max_rate(&self) -> f64 {
        match *self {
            Self::PureDiffusion { .. } => 0.0,
            Self::DiffusionFriction { lambda, .. } => lambda,
            Self::NegativeFriction { kappa } | Self::ShearFlow { kappa } => kappa,
        }
    }

    /// Whether the balance supplies lower bounds for `G_p`.
    pub fn has_lower_forcing_bound(&self) -> bool {
        !matches!(self, Self::ShearFlow { .. })
    }
}

/// Interval endpoint selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Lo,
    Hi,
}
