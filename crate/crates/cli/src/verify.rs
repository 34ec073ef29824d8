//! Randomized property suites over the kernel and the binomial sandwich.

use granular_core::combinatorics::binom_sandwich;
use granular_core::kernel::{a_plus_moment, a_plus_via_omega, gamma_p, gamma_p_quadrature, QuadratureConfig};
use granular_core::{Params, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Violations kept verbatim in a report.
const MAX_LISTED: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Povzner,
    Sandwich,
    Gamma,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Povzner => "povzner",
            Self::Sandwich => "sandwich",
            Self::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub checks: usize,
    pub violations: usize,
    /// Largest relative excess over all checks (negative when all hold).
    pub worst_excess: f64,
    pub listed: Vec<String>,
}

struct Check {
    excess: f64,
    detail: Option<String>,
}

impl Check {
    fn new(excess: f64, detail: impl FnOnce() -> String) -> Self {
        let failed = !(excess <= 0.0);
        Self {
            excess,
            detail: failed.then(detail),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self {
            excess: f64::INFINITY,
            detail: Some(e.to_string()),
        }
    }
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ suite as u64);
    let checks: Vec<Check> = match suite {
        Suite::Povzner => {
            let cases: Vec<_> = (0..trials)
                .map(|_| {
                    let mut v = || Vector::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                    let (a, b) = (v(), v());
                    (a, b, rng.random_range(0.5..=1.0), rng.random_range(1.0..=10.0))
                })
                .collect();
            cases.par_iter().flat_map_iter(|&(v, w, beta, p)| povzner(v, w, beta, p)).collect()
        }
        Suite::Sandwich => (0..trials)
            .flat_map(|k| {
                let p = if k % 4 == 0 {
                    (2 * rng.random_range(1..=12) + 1) as f64
                } else {
                    1.0 + (1.0 - rng.random::<f64>()) * 24.0
                };
                let x = 10f64.powf(rng.random_range(-3.0..3.0));
                let y = 10f64.powf(rng.random_range(-3.0..3.0));
                sandwich(p, x, y)
            })
            .collect(),
        Suite::Gamma => {
            let cases: Vec<_> = (0..trials)
                .map(|_| (rng.random_range(0.5..=1.0), rng.random_range(1.0..15.0), rng.random_range(0.05..2.0)))
                .collect();
            cases.par_iter().flat_map_iter(|&(beta, p, dp)| gamma(beta, p, dp)).collect()
        }
    };
    let violations = checks.iter().filter(|c| c.detail.is_some()).count();
    SuiteReport {
        suite,
        trials,
        seed,
        checks: checks.len(),
        violations,
        worst_excess: checks.iter().map(|c| c.excess).fold(f64::NEG_INFINITY, f64::max),
        listed: checks.into_iter().filter_map(|c| c.detail).take(MAX_LISTED).collect(),
    }
}

fn povzner(v: Vector, w: Vector, beta: f64, p: f64) -> Vec<Check> {
    let params = Params::from_beta(beta).expect("beta in range");
    let (lhs, gamma, omega) = match (
        a_plus_moment(v, w, &params, p),
        gamma_p(&params, p),
        a_plus_via_omega(v, w, &params, p),
    ) {
        (Ok(l), Ok(g), Ok(o)) => (l, g.value, o),
        (l, g, o) => {
            let msg = format!("{:?} {:?} {:?}", l.err(), g.err(), o.err());
            return vec![Check::error(msg)];
        }
    };
    let scale = (v.norm2() + w.norm2()).powf(p);
    let bound = gamma * scale;
    let ctx = move || format!("v={v:?} w={w:?} beta={beta} p={p}");
    vec![
        Check::new((lhs - bound - 1e-8 * scale.max(1.0)) / scale.max(1.0), || {
            format!("povzner bound: {lhs} > {bound} at {}", ctx())
        }),
        Check::new((lhs - omega).abs() / lhs.abs().max(1e-300) - 1e-8, || {
            format!("routes disagree: {lhs} vs {omega} at {}", ctx())
        }),
    ]
}

fn sandwich(p: f64, x: f64, y: f64) -> Vec<Check> {
    let s = match binom_sandwich(p, x, y) {
        Ok(s) => s,
        Err(e) => return vec![Check::error(format!("p={p} x={x} y={y}: {e}"))],
    };
    let scale = s.upper.abs().max(s.middle.abs());
    let tol = 1e-12 * scale;
    let mut out = vec![Check::new(((s.lower - s.middle).max(s.middle - s.upper) - tol) / scale, || {
        format!("unordered at p={p} x={x} y={y}: {s:?}")
    })];
    if p.fract() == 0.0 && (p as u64) % 2 == 1 {
        out.push(Check::new(((s.lower - s.middle).abs() - tol) / scale, || {
            format!("not tight at odd p={p} x={x} y={y}: {s:?}")
        }));
    }
    out
}

fn gamma(beta: f64, p: f64, dp: f64) -> Vec<Check> {
    let params = Params::from_beta(beta).expect("beta in range");
    let cfg = QuadratureConfig::default();
    let (a, b, one) = match (
        gamma_p(&params, p),
        gamma_p(&params, p + dp),
        gamma_p_quadrature(&params, 1.0, &cfg),
    ) {
        (Ok(a), Ok(b), Ok(c)) => (a.value, b.value, c.value),
        (a, b, c) => return vec![Check::error(format!("{:?} {:?} {:?}", a.err(), b.err(), c.err()))],
    };
    let q = p + dp;
    vec![
        Check::new(b - a, || format!("not decreasing: beta={beta} gamma({p})={a} gamma({q})={b}")),
        Check::new(b - (1.0f64).min(4.0 / (q + 1.0)), || format!("above bound: beta={beta} gamma({q})={b}")),
        Check::new((one - 1.0).abs() - 1e-10, || format!("gamma_1 = {one} at beta={beta}")),
    ]
}
