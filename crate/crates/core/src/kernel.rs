//! Inelastic Povzner kernel: `λ(μ)`, `g_β`, `ḡ_β`, the constants `γ_p` and
//! sphere integrals of the post-collisional gain functional.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadConfig};
use crate::scalar::Real;
use crate::vec3::Vec3;

/// Restitution coefficient `e` with `β = (1 + e)/2`.
///
/// `e ∈ [0, 1]`; the endpoints (`β = 1/2` sticky, `β = 1` elastic) are
/// admitted as analytic reference cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestitutionParams<T> {
    pub e: T,
    pub beta: T,
}

impl<T: Real> RestitutionParams<T> {
    pub fn new(e: T) -> Result<Self> {
        if !(e >= T::zero() && e <= T::one()) {
            return Err(Error::Domain(format!("restitution e = {e} outside [0, 1]")));
        }
        Ok(Self {
            e,
            beta: (T::one() + e) * T::half(),
        })
    }

    pub fn from_beta(beta: T) -> Result<Self> {
        if !(beta >= T::half() && beta <= T::one()) {
            return Err(Error::Domain(format!("beta = {beta} outside [1/2, 1]")));
        }
        Ok(Self {
            e: T::two() * beta - T::one(),
            beta,
        })
    }

    pub fn elastic() -> Self {
        Self {
            e: T::one(),
            beta: T::one(),
        }
    }

    /// Maximum of `ḡ_β`, attained at `μ = ±1`.
    pub fn g_bar_max(&self) -> T {
        let r = T::one() / self.beta - T::one();
        T::one() + r * r
    }

    fn check(&self) -> Result<()> {
        if !(self.beta >= T::half() && self.beta <= T::one()) {
            return Err(Error::Domain(format!("beta = {} outside [1/2, 1]", self.beta)));
        }
        Ok(())
    }
}

/// All kernel functions at one cosine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval<T> {
    pub mu: T,
    pub lambda_val: T,
    pub g_raw: T,
    pub g_sym: T,
}

impl<T: Real> KernelEval<T> {
    pub fn at(params: &RestitutionParams<T>, mu: T) -> Result<Self> {
        Ok(Self {
            mu,
            lambda_val: lambda_of_mu(params, mu)?,
            g_raw: g_raw(params, mu)?,
            g_sym: g_bar(params, mu)?,
        })
    }
}

fn check_mu<T: Real>(mu: T) -> Result<()> {
    if !(mu.abs() <= T::one()) {
        return Err(Error::Domain(format!("cosine mu = {mu} outside [-1, 1]")));
    }
    Ok(())
}

// (λ, R) with R = λ − (1−β)μ = sqrt((1−β)²μ² + 2β − 1).
fn lambda_and_root<T: Real>(beta: T, mu: T) -> (T, T) {
    let c = T::one() - beta;
    let b2 = (T::two() * beta - T::one()).max(T::zero());
    let root = (c * c * mu * mu + b2).sqrt();
    let lambda = if mu >= T::zero() {
        c * mu + root
    } else {
        // rationalized to avoid cancellation; 0/0 only when both vanish
        let den = root - c * mu;
        if den > T::zero() {
            b2 / den
        } else {
            T::zero()
        }
    };
    (lambda, root)
}

/// `λ(μ) = (1−β)μ + sqrt((1−β)²μ² + 2β − 1)`, with values in `[2β−1, 1]`.
pub fn lambda_of_mu<T: Real>(params: &RestitutionParams<T>, mu: T) -> Result<T> {
    params.check()?;
    check_mu(mu)?;
    Ok(lambda_and_root(params.beta, mu).0)
}

/// `g_β(μ) = λ²/(β(λ − (1−β)μ))`; the removable `0/0` at `β = 1/2, μ ≤ 0`
/// evaluates to its limit `0`.
pub fn g_raw<T: Real>(params: &RestitutionParams<T>, mu: T) -> Result<T> {
    params.check()?;
    check_mu(mu)?;
    Ok(g_unchecked(params.beta, mu))
}

#[inline]
fn g_unchecked<T: Real>(beta: T, mu: T) -> T {
    let (lambda, root) = lambda_and_root(beta, mu);
    if root > T::zero() {
        lambda * lambda / (beta * root)
    } else {
        T::zero()
    }
}

#[inline]
fn g_bar_unchecked<T: Real>(beta: T, mu: T) -> T {
    (g_unchecked(beta, mu) + g_unchecked(beta, -mu)) * T::half()
}

/// Symmetrized kernel `ḡ_β(μ) = (g_β(μ) + g_β(−μ))/2`.
pub fn g_bar<T: Real>(params: &RestitutionParams<T>, mu: T) -> Result<T> {
    params.check()?;
    check_mu(mu)?;
    Ok(g_bar_unchecked(params.beta, mu))
}

/// Tolerances for the kernel quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Absolute tolerance for `γ_p`.
    pub gamma_abs_tol: f64,
    /// Relative tolerance for sphere integrals.
    pub sphere_rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            gamma_abs_tol: 1e-12,
            sphere_rel_tol: 1e-10,
            max_subdivisions: 4000,
        }
    }
}

/// The constant `γ_p` together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaP {
    pub p: f64,
    pub beta: f64,
    pub value: f64,
    /// Zero when a closed form was used.
    pub err_estimate: f64,
}

/// `γ_p = 2/(p+1)` at `β = 1`.
pub fn gamma_p_elastic(p: f64) -> f64 {
    2.0 / (p + 1.0)
}

/// `γ_p = (p 2^p + 1)/(2^{p−2}(p+1)(p+2))` at `β = 1/2`.
pub fn gamma_p_sticky(p: f64) -> f64 {
    (p * p.exp2() + 1.0) / ((p - 2.0).exp2() * (p + 1.0) * (p + 2.0))
}

/// `γ_p` with default tolerances.
pub fn gamma_p(params: &RestitutionParams<f64>, p: f64) -> Result<GammaP> {
    gamma_p_with(params, p, &QuadratureConfig::default())
}

/// `γ_p`; closed forms are substituted only when `β` is exactly `1` or `1/2`.
pub fn gamma_p_with(
    params: &RestitutionParams<f64>,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<GammaP> {
    params.check()?;
    check_order(p)?;
    let closed = if params.beta == 1.0 {
        Some(gamma_p_elastic(p))
    } else if params.beta == 0.5 {
        Some(gamma_p_sticky(p))
    } else {
        None
    };
    match closed {
        Some(value) => Ok(GammaP {
            p,
            beta: params.beta,
            value,
            err_estimate: 0.0,
        }),
        None => gamma_p_quadrature(params, p, cfg),
    }
}

/// `γ_p` by adaptive Gauss–Kronrod on `[0, 1]`, split at `z = 1/2`, at
/// every `β` including the closed-form endpoints.
pub fn gamma_p_quadrature(
    params: &RestitutionParams<f64>,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<GammaP> {
    params.check()?;
    check_order(p)?;
    let beta = params.beta;
    let qc = QuadConfig {
        // the integral is doubled afterwards
        abs_tol: 0.5 * cfg.gamma_abs_tol,
        rel_tol: 0.0,
        max_subdivisions: cfg.max_subdivisions,
    };
    let r = integrate(
        |z| g_bar_unchecked(beta, 2.0 * z - 1.0) * z.powf(p),
        0.0,
        1.0,
        &[0.5],
        &qc,
    )?;
    Ok(GammaP {
        p,
        beta,
        value: 2.0 * r.value,
        err_estimate: 2.0 * r.abs_error,
    })
}

fn check_order(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("moment order p = {p} must be positive")));
    }
    Ok(())
}

/// Collision geometry in the frame whose polar axis is `ν = u/|u|`.
struct Frame {
    u_abs: f64,
    cm2: f64,
    cm_par: f64,
    cm_perp: f64,
}

impl Frame {
    fn new(v: Vec3<f64>, w: Vec3<f64>) -> Self {
        let u = v - w;
        let cm = (v + w) * 0.5;
        let u_abs = u.norm();
        let cm2 = cm.norm2();
        let (cm_par, cm_perp) = if u_abs > 0.0 {
            let nu = u * (1.0 / u_abs);
            let par = cm.dot(nu);
            let perp = (cm - nu * par).norm();
            (par, perp)
        } else {
            (0.0, cm.norm())
        };
        Self {
            u_abs,
            cm2,
            cm_par,
            cm_perp,
        }
    }
}

/// `½ ∫_{−1}^{1} dμ (1/2π) ∫_0^{2π} dφ h(μ, cos φ)`, i.e. the normalized
/// surface average over `S²`. `axial` marks integrands independent of `φ`.
fn sphere_average<H: Fn(f64, f64) -> f64>(
    h: H,
    axial: bool,
    scale: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let rel = cfg.sphere_rel_tol;
    let inner_tol = 1e-3 * rel * scale;
    let inner_excess = Cell::new(0.0f64);
    let azimuthal_mean = |mu: f64| -> f64 {
        if axial {
            return h(mu, 0.0);
        }
        // trapezoid on [0, π]; exponentially convergent for smooth even
        // periodic integrands
        let mut n = 8usize;
        let mut interior: f64 = (1..n)
            .map(|k| h(mu, (std::f64::consts::PI * k as f64 / n as f64).cos()))
            .sum();
        let ends = 0.5 * (h(mu, 1.0) + h(mu, -1.0));
        let mut t = (ends + interior) / n as f64;
        loop {
            let n2 = 2 * n;
            let odd: f64 = (0..n)
                .map(|k| h(mu, (std::f64::consts::PI * (2 * k + 1) as f64 / n2 as f64).cos()))
                .sum();
            interior += odd;
            let t2 = (ends + interior) / n2 as f64;
            let diff = (t2 - t).abs();
            t = t2;
            n = n2;
            if diff <= inner_tol.max(1e-14 * t.abs()) {
                break;
            }
            if n >= 1 << 16 {
                inner_excess.set(inner_excess.get().max(diff));
                break;
            }
        }
        t
    };
    let qc = QuadConfig {
        abs_tol: 2.0 * 1e-2 * rel * scale,
        rel_tol: 2.0 * rel,
        max_subdivisions: cfg.max_subdivisions,
    };
    let r = integrate(azimuthal_mean, -1.0, 1.0, &[0.0], &qc)?;
    let value = 0.5 * r.value;
    let excess = inner_excess.get();
    if excess > rel * value.abs().max(1e-2 * scale) {
        return Err(Error::Quadrature {
            estimate: value,
            error: excess,
            tolerance: rel * value.abs(),
        });
    }
    Ok(value)
}

/// `A⁺_β[|·|^{2p}](v, w) = (1/4π) ∫_{S²} (|v'|^{2p} + |w'|^{2p}) dσ` with
/// `v' = v + (β/2)(|u|σ − u)`, `w' = w − (β/2)(|u|σ − u)`.
pub fn a_plus_moment(
    v: Vec3<f64>,
    w: Vec3<f64>,
    params: &RestitutionParams<f64>,
    p: f64,
) -> Result<f64> {
    a_plus_moment_with(v, w, params, p, &QuadratureConfig::default())
}

pub fn a_plus_moment_with(
    v: Vec3<f64>,
    w: Vec3<f64>,
    params: &RestitutionParams<f64>,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    params.check()?;
    check_vectors(v, w, p)?;
    let f = Frame::new(v, w);
    if f.u_abs == 0.0 {
        return Ok(v.norm2().powf(p) + w.norm2().powf(p));
    }
    let beta = params.beta;
    let (a, b) = ((1.0 - beta) * 0.5 * f.u_abs, beta * 0.5 * f.u_abs);
    // v' = U + d, w' = U − d, d = a ν + b σ
    let h = |mu: f64, c: f64| {
        let d2 = a * a + b * b + 2.0 * a * b * mu;
        let sin = (1.0 - mu * mu).max(0.0).sqrt();
        let cross = 2.0 * (a * f.cm_par + b * (mu * f.cm_par + sin * c * f.cm_perp));
        let base = f.cm2 + d2;
        (base + cross).max(0.0).powf(p) + (base - cross).max(0.0).powf(p)
    };
    let scale = (v.norm2() + w.norm2()).powf(p);
    sphere_average(h, f.cm_perp == 0.0, scale, cfg)
}

/// The same gain functional through the `ω`-parametrization: weight
/// `g_β(ν·ω)`, post-collisional radius `λ(ν·ω)|u|/2` around `U`.
pub fn a_plus_via_omega(
    v: Vec3<f64>,
    w: Vec3<f64>,
    params: &RestitutionParams<f64>,
    p: f64,
) -> Result<f64> {
    a_plus_via_omega_with(v, w, params, p, &QuadratureConfig::default())
}

pub fn a_plus_via_omega_with(
    v: Vec3<f64>,
    w: Vec3<f64>,
    params: &RestitutionParams<f64>,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    params.check()?;
    check_vectors(v, w, p)?;
    let f = Frame::new(v, w);
    if f.u_abs == 0.0 {
        return Err(Error::Degenerate(
            "relative velocity u = v - w vanishes; direction nu undefined".into(),
        ));
    }
    let beta = params.beta;
    let h = |mu: f64, c: f64| {
        let (lambda, root) = lambda_and_root(beta, mu);
        let g = if root > 0.0 {
            lambda * lambda / (beta * root)
        } else {
            0.0
        };
        if g == 0.0 {
            return 0.0;
        }
        let r = 0.5 * lambda * f.u_abs;
        let sin = (1.0 - mu * mu).max(0.0).sqrt();
        let cross = 2.0 * r * (mu * f.cm_par + sin * c * f.cm_perp);
        let base = f.cm2 + r * r;
        g * ((base + cross).max(0.0).powf(p) + (base - cross).max(0.0).powf(p))
    };
    let scale = (v.norm2() + w.norm2()).powf(p);
    sphere_average(h, f.cm_perp == 0.0, scale, cfg)
}

fn check_vectors(v: Vec3<f64>, w: Vec3<f64>, p: f64) -> Result<()> {
    if !v.is_finite() || !w.is_finite() {
        return Err(Error::Domain("velocities must be finite".into()));
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("order p = {p} must be non-negative")));
    }
    Ok(())
}
