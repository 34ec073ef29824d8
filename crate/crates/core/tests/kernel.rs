use granular_core::combinatorics::{binom_sandwich, gen_binom};
use granular_core::kernel::{a_plus_moment, a_plus_via_omega, gamma_p, gamma_p_elastic, gamma_p_quadrature, QuadratureConfig};
use granular_core::{Params, Vector};
use proptest::prelude::*;

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Gain average for `v = e₁`, `w = 0`, reduced to `t = σ·e₁`:
/// `|v'|² = (1−β/2)² + β²/4 + β(1−β/2)t`, `|w'|² = β²(1−t)/2`.
fn gain_on_axis(beta: f64, p: f64) -> f64 {
    let f = |t: f64| {
        let a = (1.0 - beta / 2.0).powi(2) + beta * beta / 4.0 + beta * (1.0 - beta / 2.0) * t;
        let b = beta * beta * (1.0 - t) / 2.0;
        a.max(0.0).powf(p) + b.max(0.0).powf(p)
    };
    0.5 * simpson(f, -1.0, 1.0, 20_000)
}

#[test]
fn gain_on_axis_matches_independent_reduction() {
    let e1 = Vector::new(1.0, 0.0, 0.0);
    for &beta in &[0.5, 0.7, 0.9, 1.0] {
        for &p in &[1.0, 1.5, 2.0, 3.7, 6.0] {
            let params = Params::from_beta(beta).unwrap();
            let got = a_plus_moment(e1, Vector::zero(), &params, p).unwrap();
            let want = gain_on_axis(beta, p);
            assert!((got - want).abs() < 1e-9 * want, "beta={beta} p={p}: {got} vs {want}");
        }
    }
}

#[test]
fn elastic_axis_gain_is_gamma() {
    let e1 = Vector::new(1.0, 0.0, 0.0);
    for p in [1.5, 2.0, 4.5, 9.0] {
        let g = a_plus_moment(e1, Vector::zero(), &Params::elastic(), p).unwrap();
        assert!((g - gamma_p_elastic(p)).abs() < 1e-10);
    }
}

fn vec3() -> impl Strategy<Value = Vector> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vector::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_decreases_and_obeys_bounds(beta in 0.5..=1.0f64, p in 1.0..15.0f64, dp in 0.05..2.0f64) {
        let params = Params::from_beta(beta).unwrap();
        let a = gamma_p(&params, p).unwrap().value;
        let b = gamma_p(&params, p + dp).unwrap().value;
        prop_assert!(b < a);
        prop_assert!(b < 1.0 && b <= 4.0 / (p + dp + 1.0));
    }

    #[test]
    fn gamma_normalization(beta in 0.5..=1.0f64) {
        let params = Params::from_beta(beta).unwrap();
        let g = gamma_p_quadrature(&params, 1.0, &QuadratureConfig::default()).unwrap().value;
        prop_assert!((g - 1.0).abs() < 1e-10);
    }

    #[test]
    fn povzner_bound(v in vec3(), w in vec3(), beta in 0.5..=1.0f64, p in 1.0..8.0f64) {
        prop_assume!((v - w).norm() > 1e-3);
        let params = Params::from_beta(beta).unwrap();
        let lhs = a_plus_moment(v, w, &params, p).unwrap();
        let gamma = gamma_p(&params, p).unwrap().value;
        let scale = (v.norm2() + w.norm2()).powf(p);
        prop_assert!(lhs <= gamma * scale + 1e-8 * scale.max(1.0));
        let omega = a_plus_via_omega(v, w, &params, p).unwrap();
        prop_assert!((lhs - omega).abs() <= 1e-8 * lhs.abs().max(1e-300));
    }

    #[test]
    fn sandwich_orders(p in 1.01..25.0f64, x in 1e-3..1e3f64, y in 1e-3..1e3f64) {
        let s = binom_sandwich(p, x, y).unwrap();
        prop_assert!(s.is_ordered(1e-12), "{s:?}");
    }

    #[test]
    fn sandwich_is_tight_at_odd_integers(k in 1u32..12, x in 1e-2..1e2f64, y in 1e-2..1e2f64) {
        let p = (2 * k + 1) as f64;
        let s = binom_sandwich(p, x, y).unwrap();
        prop_assert!((s.lower - s.middle).abs() <= 1e-12 * s.middle.abs());
    }

    #[test]
    fn binomial_recurrence(p in 0.0..20.0f64, k in 1u32..15) {
        // C(p, k) = C(p, k−1)(p − k + 1)/k
        let lhs = gen_binom(p, k);
        let rhs = gen_binom(p, k - 1) * (p - k as f64 + 1.0) / k as f64;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }
}
