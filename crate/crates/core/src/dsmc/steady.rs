use serde::{Deserialize, Serialize};

use super::collision::collision_step;
use super::ensemble::ParticleEnsemble;
use super::forcing::{forcing_power, forcing_step};
use super::stats::{group_jackknife, MomentConfig, MomentTable, SpeedHistogram};
use super::tailfit::{fit_tail_with, TailFit, TailFitConfig};
use crate::error::{Error, Result};
use crate::kernel::RestitutionParams;
use crate::moments::{estimate_tail_order_with, ForcingModel, GrowthConfig, TailConfig, TailEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dt: f64,
    pub t_burn: f64,
    pub t_avg: f64,
    /// Steps between samples of the averaging phase.
    pub sample_every: usize,
    /// Largest reported order; orders are `0, 1/2, …, p_max`.
    pub p_max: f64,
    pub bins: usize,
    /// Histogram range as a multiple of the largest speed after burn-in.
    pub v_top_factor: f64,
    pub moments: MomentConfig,
    pub tail: TailFitConfig,
}

impl RunConfig {
    pub fn new(dt: f64, t_burn: f64, t_avg: f64) -> Self {
        Self {
            dt,
            t_burn,
            t_avg,
            sample_every: 10,
            p_max: 8.0,
            bins: 400,
            v_top_factor: 1.5,
            moments: MomentConfig::default(),
            tail: TailFitConfig::default(),
        }
    }

    pub fn validate(&self, model: Option<&ForcingModel>) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.t_burn >= 0.0 && self.t_avg > 0.0) {
            return bad(format!("need t_burn >= 0 and t_avg > 0 (got {}, {})", self.t_burn, self.t_avg));
        }
        if self.sample_every == 0 || self.bins == 0 || !(self.v_top_factor > 1.0) {
            return bad("sample_every, bins must be positive and v_top_factor > 1".into());
        }
        if !(self.p_max >= 1.0) || (2.0 * self.p_max).fract() != 0.0 {
            return bad(format!("p_max must be a half-integer >= 1 (got {})", self.p_max));
        }
        if let Some(m) = model {
            m.validate()?;
            if self.dt * m.max_rate() > 0.1 {
                return bad(format!(
                    "dt * rate = {} exceeds 0.1",
                    self.dt * m.max_rate()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    /// Mean collisional energy change per unit time (non-positive).
    pub collisional: f64,
    /// Mean measured forcing power.
    pub forcing: f64,
    /// Mean forcing power predicted by the forcing map on the sampled states.
    pub forcing_expected: f64,
    pub residual: f64,
    pub sigma: f64,
    pub within_3_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: u64,
    pub samples: usize,
    pub candidates: u64,
    pub collisions: u64,
    pub overflows: u64,
    pub overflow_fraction: f64,
    /// Mean accepted `|u|/U_max` and the acceptance rate.
    pub mean_accepted_ratio: f64,
    pub acceptance_rate: f64,
    pub u_max: f64,
    pub max_recenter: f64,
    /// Second-half minus first-half mean of `m₁` and its standard error.
    pub m1_drift: f64,
    pub m1_drift_sigma: f64,
    pub stationary: bool,
    /// Time-averaged `⟨v_a²⟩` per component and `⟨v₁v₂⟩`.
    pub temperatures: [f64; 3],
    pub v1v2: f64,
    pub collisions_per_particle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub model: Option<ForcingModel>,
    pub e: f64,
    pub n: usize,
    pub seed: u64,
    pub partitions: usize,
    pub config: RunConfig,
    pub time: f64,
    pub moments: MomentTable,
    pub histogram: SpeedHistogram,
    pub tail: Option<TailFit>,
    pub tail_error: Option<String>,
    /// Moment-scan estimate on the reliable empirical moments.
    pub moment_tail: Option<TailEstimate>,
    pub moment_tail_error: Option<String>,
    pub energy_balance: EnergyBalance,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

impl SteadyStateReport {
    pub fn m1(&self) -> f64 {
        self.moments.get(1.0).map_or(f64::NAN, |e| e.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Scan settings for the moment-based cross-check on a short empirical
/// table.
pub fn empirical_tail_config() -> TailConfig {
    TailConfig {
        min_p_max: 4.0,
        growth: GrowthConfig {
            min_points: 6,
            trend_window: 1.0,
            smooth_points: 1,
            ..GrowthConfig::default()
        },
        ..TailConfig::default()
    }
}

struct Sample {
    powers: Vec<f64>,
    comps: [f64; 3],
    v1v2: f64,
}

fn sample(ens: &ParticleEnsemble, kmax: usize, h: &mut SpeedHistogram) -> Sample {
    let mut powers = vec![0.0; kmax + 1];
    let (mut comps, mut v1v2) = ([0.0; 3], 0.0);
    for v in ens.velocities() {
        let r = v.norm();
        h.add(r);
        let mut x = 1.0;
        for acc in powers.iter_mut() {
            *acc += x;
            x *= r;
        }
        comps[0] += v.x * v.x;
        comps[1] += v.y * v.y;
        comps[2] += v.z * v.z;
        v1v2 += v.x * v.y;
    }
    let w = ens.weight();
    powers.iter_mut().for_each(|x| *x *= w);
    comps.iter_mut().for_each(|x| *x *= w);
    Sample {
        powers,
        comps,
        v1v2: v1v2 * w,
    }
}

fn step(
    ens: &mut ParticleEnsemble,
    model: Option<&ForcingModel>,
    params: &RestitutionParams<f64>,
    dt: f64,
) -> Result<()> {
    if let Some(m) = model {
        forcing_step(ens, m, 0.5 * dt)?;
    }
    collision_step(ens, params, dt)?;
    if let Some(m) = model {
        forcing_step(ens, m, 0.5 * dt)?;
    }
    Ok(())
}

/// Strang-split evolution (half forcing, collisions, half forcing): burn-in
/// over `t_burn`, then time averages over `t_avg`. `model = None` is the
/// unforced gas.
pub fn run_to_steady(
    ens: &mut ParticleEnsemble,
    model: Option<&ForcingModel>,
    params: &RestitutionParams<f64>,
    cfg: &RunConfig,
) -> Result<SteadyStateReport> {
    cfg.validate(model)?;
    let dt = cfg.dt;
    let n_burn = (cfg.t_burn / dt).round() as u64;
    let n_avg = ((cfg.t_avg / dt).round() as u64).max(cfg.sample_every as u64);
    for _ in 0..n_burn {
        step(ens, model, params, dt)?;
    }

    let kmax = (2.0 * cfg.p_max).round() as usize;
    let v_top = cfg.v_top_factor * ens.max_speed();
    let mut hist = SpeedHistogram::new(if v_top > 0.0 { v_top } else { 1.0 }, cfg.bins)?;
    ens.reset_stats();
    let mut samples = Vec::new();
    let mut rates = Vec::new();
    let mut last = (0.0, 0.0, 0u64);
    let mut warnings = Vec::new();
    for k in 1..=n_avg {
        step(ens, model, params, dt)?;
        if k % cfg.sample_every as u64 == 0 {
            let s = sample(ens, kmax, &mut hist);
            let m1 = s.powers[2];
            let elapsed = (ens.stats.steps - last.2) as f64 * dt;
            let coll = (ens.stats.collision_energy - last.0) / elapsed;
            let force = (ens.stats.forcing_energy - last.1) / elapsed;
            last = (ens.stats.collision_energy, ens.stats.forcing_energy, ens.stats.steps);
            let expected = model.map_or(0.0, |m| forcing_power(m, 0.5 * dt, m1, s.v1v2, s.comps[0]));
            rates.push((coll, force, expected));
            samples.push(s);
        }
    }

    let ps: Vec<f64> = (0..=kmax).map(|k| k as f64 / 2.0).collect();
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.powers.clone()).collect();
    let moments = MomentTable::from_samples(ens.len(), &ps, &rows, &cfg.moments);
    warnings.extend(moments.warnings.iter().cloned());

    let g = cfg.moments.groups;
    let residual: Vec<f64> = rates.iter().map(|(c, f, _)| c + f).collect();
    let (res_mean, res_sigma) = group_jackknife(&residual, g);
    let coll: Vec<f64> = rates.iter().map(|r| r.0).collect();
    let forcing: Vec<f64> = rates.iter().map(|r| r.1).collect();
    let energy_balance = EnergyBalance {
        collisional: group_jackknife(&coll, g).0,
        forcing: group_jackknife(&forcing, g).0,
        forcing_expected: rates.iter().map(|r| r.2).sum::<f64>() / rates.len() as f64,
        residual: res_mean,
        sigma: res_sigma,
        within_3_sigma: !(res_mean.abs() > 3.0 * res_sigma),
    };
    if !energy_balance.within_3_sigma {
        warnings.push(format!(
            "energy balance residual {res_mean:.3e} exceeds 3 sigma ({res_sigma:.3e})"
        ));
    }

    let m1s: Vec<f64> = samples.iter().map(|s| s.powers[2]).collect();
    let half = m1s.len() / 2;
    let (a, sa) = group_jackknife(&m1s[..half], g / 2);
    let (b, sb) = group_jackknife(&m1s[half..], g / 2);
    let (drift, drift_sigma) = (b - a, sa.hypot(sb));
    let stationary = !(drift.abs() > 3.0 * drift_sigma);
    if !stationary {
        warnings.push(format!("m1 drifts by {drift:.4e} over the averaging window (sigma {drift_sigma:.3e})"));
    }

    let (tail, tail_error) = match fit_tail_with(&hist, &cfg.tail) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (moment_tail, moment_tail_error) =
        match moments.to_grid().and_then(|g| estimate_tail_order_with(&g, &empirical_tail_config())) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };

    let st = ens.stats;
    let ns = samples.len() as f64;
    let mut temperatures = [0.0; 3];
    for s in &samples {
        for (t, c) in temperatures.iter_mut().zip(s.comps) {
            *t += c / ns;
        }
    }
    let v1v2 = samples.iter().map(|s| s.v1v2).sum::<f64>() / ns;
    let diagnostics = Diagnostics {
        steps: st.steps,
        samples: samples.len(),
        candidates: st.candidates,
        collisions: st.accepted,
        overflows: st.overflows,
        overflow_fraction: st.overflow_fraction(),
        mean_accepted_ratio: if st.accepted > 0 { st.accepted_ratio_sum / st.accepted as f64 } else { 0.0 },
        acceptance_rate: if st.candidates > 0 { st.accepted as f64 / st.candidates as f64 } else { 0.0 },
        u_max: ens.u_max(),
        max_recenter: st.max_recenter,
        m1_drift: drift,
        m1_drift_sigma: drift_sigma,
        stationary,
        temperatures,
        v1v2,
        collisions_per_particle: 2.0 * st.accepted as f64 / ens.len() as f64,
    };
    if diagnostics.overflow_fraction >= 1e-4 {
        warnings.push(format!("majorant overflow fraction {:.3e}", diagnostics.overflow_fraction));
    }

    Ok(SteadyStateReport {
        model: model.copied(),
        e: params.e,
        n: ens.len(),
        seed: ens.seed(),
        partitions: ens.partitions(),
        config: *cfg,
        time: ens.time,
        moments,
        histogram: hist,
        tail,
        tail_error,
        moment_tail,
        moment_tail_error,
        energy_balance,
        diagnostics,
        warnings,
    })
}
