use granular_core::dsmc::*;
use granular_core::moments::{propagate, ForcingModel, Seed};
use granular_core::{Params, Vector};
use proptest::prelude::*;

fn short_run(model: Option<&ForcingModel>, params: &Params, n: usize, t0: f64, seed: u64, t_avg: f64) -> SteadyStateReport {
    let mut ens = init_ensemble(n, t0, seed).unwrap();
    let cfg = RunConfig::new(0.02, 20.0, t_avg);
    run_to_steady(&mut ens, model, params, &cfg).unwrap()
}

#[test]
fn elastic_gas_keeps_its_temperature() {
    let params = Params::from_beta(1.0).unwrap();
    let mut ens = init_ensemble(10_000, 1.5, 3).unwrap();
    let e0 = ens.energy();
    assert!((e0 - 4.5).abs() < 5.0 * 4.5 * (2.0f64 / 3.0 / 10_000.0).sqrt());
    let r = run_to_steady(&mut ens, None, &params, &RunConfig::new(0.02, 2.0, 10.0)).unwrap();
    let m1 = r.moments.get(1.0).unwrap();
    assert!((m1.value - e0).abs() < 1e-9 * e0, "{m1:?}");
    assert!(r.diagnostics.stationary);
    assert!(r.energy_balance.residual.abs() < 1e-9);
}

#[test]
fn elastic_energy_over_ten_thousand_steps() {
    let params = Params::from_beta(1.0).unwrap();
    let mut ens = init_ensemble(10_000, 1.0, 17).unwrap();
    let e0 = ens.energy();
    for _ in 0..10_000 {
        collision_step(&mut ens, &params, 0.01).unwrap();
    }
    assert!(((ens.energy() - e0) / e0).abs() < 1e-9);
    assert!(ens.stats.overflow_fraction() < 1e-4);
}

#[test]
fn thermostat_keeps_energy_below_forcing_only_value() {
    let params = Params::from_beta(0.9).unwrap();
    let model = ForcingModel::DiffusionFriction { mu: 1.0, lambda: 1.0 };
    let r = short_run(Some(&model), &params, 20_000, 1.0, 5, 20.0);
    let m1 = r.moments.get(1.0).unwrap();
    assert!(m1.value + 3.0 * m1.stderr < 3.0, "{m1:?}");
    assert!(r.energy_balance.within_3_sigma, "{:?}", r.energy_balance);
    assert!(r.energy_balance.collisional < 0.0);
}

#[test]
fn anti_drag_fixed_point_is_seed_independent() {
    let params = Params::from_beta(0.8).unwrap();
    let model = ForcingModel::NegativeFriction { kappa: 0.1 };
    let mut cfg = RunConfig::new(0.05, 120.0, 400.0);
    cfg.p_max = 2.0;
    let run = |t0: f64, seed: u64| {
        let mut ens = init_ensemble(10_000, t0, seed).unwrap();
        run_to_steady(&mut ens, Some(&model), &params, &cfg).unwrap()
    };
    let (a, b) = (run(0.05, 1), run(0.2, 2));
    let (ma, mb) = (a.moments.get(1.0).unwrap(), b.moments.get(1.0).unwrap());
    assert!(ma.value > 0.0);
    assert!((ma.value - mb.value).abs() < 3.0 * ma.stderr.hypot(mb.stderr), "{ma:?} {mb:?}");
}

#[test]
fn reports_are_reproducible() {
    let params = Params::new(0.8).unwrap();
    let model = ForcingModel::PureDiffusion { mu: 1.0 };
    let mut cfg = RunConfig::new(0.02, 2.0, 4.0);
    cfg.tail.bootstrap = 20;
    let run = || {
        let mut ens = init_ensemble(3000, 1.0, 42).unwrap();
        run_to_steady(&mut ens, Some(&model), &params, &cfg).unwrap().to_json().unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let back = SteadyStateReport::from_json(&a).unwrap();
    assert_eq!(back.to_json().unwrap(), a);
}

#[test]
fn steady_moments_lie_in_propagated_intervals() {
    let params = Params::new(0.8).unwrap();
    let models = [
        ForcingModel::PureDiffusion { mu: 1.0 },
        ForcingModel::DiffusionFriction { mu: 1.0, lambda: 1.0 },
        ForcingModel::NegativeFriction { kappa: 0.1 },
        ForcingModel::ShearFlow { kappa: 1.0 },
    ];
    for model in &models {
        let r = short_run(Some(model), &params, 20_000, 1.0, 9, 20.0);
        let m1 = r.moments.get(1.0).unwrap();
        let seed = Seed::interval(m1.value - 3.0 * m1.stderr, m1.value + 3.0 * m1.stderr);
        let grid = propagate(model, &params, &seed, 4.0).unwrap();
        for e in r.moments.entries.iter().filter(|e| e.p <= 4.0) {
            let (lo, hi) = grid.get(e.p).unwrap();
            let tol = 3.0 * e.stderr;
            assert!(lo <= e.value + tol && e.value - tol <= hi, "{} p={} {e:?} [{lo}, {hi}]", model.name(), e.p);
        }
    }
}

#[test]
fn maxwellian_ensemble_tail_is_gaussian() {
    let ens = init_ensemble(1_000_000, 1.0, 8).unwrap();
    let mut h = SpeedHistogram::new(1.5 * ens.max_speed(), 400).unwrap();
    for v in ens.velocities() {
        h.add(v.norm());
    }
    let fit = fit_tail(&h).unwrap();
    assert!((fit.estimate.s - 2.0).abs() < 0.25, "{:?}", fit.estimate);
    let (lo, hi) = fit.estimate.range;
    assert!(lo < hi && h.quantile(0.95).unwrap() == lo);
}

#[test]
fn dt_must_resolve_forcing_rate() {
    let params = Params::new(0.8).unwrap();
    let model = ForcingModel::NegativeFriction { kappa: 2.0 };
    let mut ens = init_ensemble(100, 1.0, 0).unwrap();
    let cfg = RunConfig::new(0.1, 1.0, 1.0);
    assert!(run_to_steady(&mut ens, Some(&model), &params, &cfg).is_err());
}

fn vec3() -> impl Strategy<Value = Vector> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Vector::new(x, y, z))
}

proptest! {
    #[test]
    fn collision_invariants(v in vec3(), w in vec3(), dir in vec3(), beta in 0.5..=1.0f64) {
        prop_assume!(dir.norm() > 1e-3);
        let sigma = dir * (1.0 / dir.norm());
        let (v1, w1) = post_collision(v, w, sigma, beta);
        let scale = v.norm() + w.norm() + 1.0;
        prop_assert!((v1 + w1 - v - w).norm() <= 1e-12 * scale);
        let de = v1.norm2() + w1.norm2() - v.norm2() - w.norm2();
        prop_assert!((de - pair_energy_change(v - w, sigma, beta)).abs() <= 1e-10 * scale * scale);
        prop_assert!(de <= 1e-12 * scale * scale);
    }

    #[test]
    fn recentering_zeroes_momentum(vs in prop::collection::vec(vec3(), 2..50)) {
        let mut ens = ParticleEnsemble::from_velocities(vs, 0).unwrap();
        ens.recenter();
        prop_assert!(ens.mean_velocity().norm() < 1e-12);
    }
}
