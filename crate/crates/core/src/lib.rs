//! Moment inequalities, kernel quadratures and a particle solver for
//! inelastic hard spheres driven by four forcing models.

pub mod combinatorics;
pub mod dsmc;
pub mod error;
pub mod kernel;
pub mod linfit;
pub mod moments;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod vec3;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Params = kernel::RestitutionParams<f64>;
pub type KernelEvalF64 = kernel::KernelEval<f64>;
pub type Vector = vec3::Vec3<f64>;
