use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{LnInterval, MomentGrid};
use crate::Vector;

use super::ensemble::ParticleEnsemble;

/// `p_max_reliable(N) = ln(N)/2`.
pub fn p_max_reliable(n: usize) -> f64 {
    (n as f64).ln() / 2.0
}

/// Mean and delete-one-group jackknife standard error of `samples` split
/// into `groups` contiguous blocks.
pub fn group_jackknife(samples: &[f64], groups: usize) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let total: f64 = samples.iter().sum();
    let mean = total / n as f64;
    let g = groups.clamp(1, n);
    if g < 2 {
        return (mean, f64::NAN);
    }
    let mut leave_out = Vec::with_capacity(g);
    for b in 0..g {
        let (lo, hi) = (b * n / g, (b + 1) * n / g);
        let part: f64 = samples[lo..hi].iter().sum();
        leave_out.push((total - part) / (n - (hi - lo)) as f64);
    }
    let centre = leave_out.iter().sum::<f64>() / g as f64;
    let var = leave_out.iter().map(|t| (t - centre).powi(2)).sum::<f64>() * (g - 1) as f64 / g as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub value: f64,
    pub stderr: f64,
    /// Below the order ceiling and within the relative-error threshold.
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    /// Particles per ensemble.
    pub n: usize,
    pub entries: Vec<MomentEstimate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    pub groups: usize,
    /// Relative jackknife error above which an entry is unreliable.
    pub max_rel_err: f64,
    /// Order ceiling; `None` uses [`p_max_reliable`].
    pub p_ceiling: Option<f64>,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            groups: 20,
            max_rel_err: 0.2,
            p_ceiling: None,
        }
    }
}

fn check_orders(p_list: &[f64]) -> Result<()> {
    match p_list.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        Some(p) => Err(Error::Domain(format!("moment order must be finite and >= 0 (got {p})"))),
        None => Ok(()),
    }
}

impl MomentTable {
    /// Builds a table from per-sample values `samples[k][i]` of `m_{p_i}`,
    /// with blocked jackknife errors over `k`.
    pub fn from_samples(n: usize, p_list: &[f64], samples: &[Vec<f64>], cfg: &MomentConfig) -> Self {
        let ceiling = cfg.p_ceiling.unwrap_or_else(|| p_max_reliable(n));
        let mut entries = Vec::with_capacity(p_list.len());
        let mut warnings = Vec::new();
        for (i, &p) in p_list.iter().enumerate() {
            let column: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            let (value, stderr) = if p == 0.0 {
                (1.0, 0.0)
            } else {
                group_jackknife(&column, cfg.groups)
            };
            let rel_ok = !(stderr > cfg.max_rel_err * value.abs());
            let reliable = p <= ceiling && rel_ok && value.is_finite();
            if p > ceiling {
                warnings.push(format!("m_{p} lies above the reliability ceiling {ceiling:.3}"));
            } else if !rel_ok {
                warnings.push(format!("m_{p} has relative error {:.3}", stderr / value));
            }
            entries.push(MomentEstimate {
                p,
                value,
                stderr,
                reliable,
            });
        }
        Self {
            n,
            entries,
            warnings,
        }
    }

    pub fn get(&self, p: f64) -> Option<&MomentEstimate> {
        self.entries.iter().find(|e| e.p == p)
    }

    /// Point-valued grid over the leading run of reliable half-integer
    /// orders `0, 1/2, 1, …`.
    pub fn to_grid(&self) -> Result<MomentGrid> {
        let mut cells = Vec::new();
        for k in 0.. {
            match self.get(k as f64 / 2.0) {
                Some(e) if e.reliable && e.value > 0.0 => cells.push(LnInterval::exact(e.value.ln())),
                _ => break,
            }
        }
        if cells.len() < 3 {
            return Err(Error::MissingMoments(vec![cells.len() as f64 / 2.0]));
        }
        MomentGrid::from_ln(cells)
    }
}

/// `m_p = Σ wᵢ|vᵢ|^{2p}` for one ensemble, with jackknife errors over
/// particle groups.
pub fn empirical_moments(ens: &ParticleEnsemble, p_list: &[f64]) -> Result<MomentTable> {
    empirical_moments_with(ens.velocities(), p_list, &MomentConfig::default())
}

pub fn empirical_moments_with(velocities: &[Vector], p_list: &[f64], cfg: &MomentConfig) -> Result<MomentTable> {
    check_orders(p_list)?;
    let n = velocities.len();
    let g = cfg.groups.clamp(1, n.max(1));
    let mut samples = Vec::with_capacity(g);
    for b in 0..g {
        let block = &velocities[b * n / g..(b + 1) * n / g];
        let inv = 1.0 / block.len() as f64;
        samples.push(
            p_list
                .iter()
                .map(|&p| block.iter().map(|v| v.norm2().powf(p)).sum::<f64>() * inv)
                .collect::<Vec<_>>(),
        );
    }
    // equal-size blocks up to one particle; block means reproduce Σ wᵢ|vᵢ|^{2p}
    let mut table = MomentTable::from_samples(n, p_list, &samples, &MomentConfig { groups: g, ..*cfg });
    for (e, &p) in table.entries.iter_mut().zip(p_list) {
        if p != 0.0 {
            e.value = velocities.iter().map(|v| v.norm2().powf(p)).sum::<f64>() / n as f64;
        }
    }
    Ok(table)
}

/// Speed histogram on `[0, v_top]` with uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples above `v_top`.
    pub overflow: u64,
}

impl SpeedHistogram {
    pub fn new(v_top: f64, bins: usize) -> Result<Self> {
        if !(v_top > 0.0 && v_top.is_finite()) || bins == 0 {
            return Err(Error::InvalidParam(format!(
                "histogram needs v_top > 0 and bins > 0 (got {v_top}, {bins})"
            )));
        }
        let edges = (0..=bins).map(|k| v_top * k as f64 / bins as f64).collect();
        Ok(Self {
            edges,
            counts: vec![0; bins],
            overflow: 0,
        })
    }

    pub fn v_top(&self) -> f64 {
        *self.edges.last().expect("at least one bin")
    }

    #[inline]
    pub fn add(&mut self, speed: f64) {
        let bins = self.counts.len();
        let k = (speed / self.v_top() * bins as f64) as usize;
        if k < bins {
            self.counts[k] += 1;
        } else {
            self.overflow += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// Speed below which a fraction `q` of samples lies, linear within bins.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        let total = self.total();
        if total == 0 || !(0.0..=1.0).contains(&q) {
            return None;
        }
        let target = q * total as f64;
        let mut acc = 0.0;
        for (k, &c) in self.counts.iter().enumerate() {
            let next = acc + c as f64;
            if next >= target && c > 0 {
                let t = (target - acc) / c as f64;
                return Some(self.edges[k] + t * (self.edges[k + 1] - self.edges[k]));
            }
            acc = next;
        }
        None
    }

    /// Radial density `f̂` at each bin: count over sample total and shell
    /// volume.
    pub fn density(&self, k: usize) -> f64 {
        let (a, b) = (self.edges[k], self.edges[k + 1]);
        let shell = 4.0 * std::f64::consts::PI / 3.0 * (b * b * b - a * a * a);
        self.counts[k] as f64 / (self.total() as f64 * shell)
    }

    /// `(bin midpoint, ln f̂)` for non-empty bins.
    pub fn log_density(&self) -> Vec<(f64, f64)> {
        (0..self.counts.len())
            .filter(|&k| self.counts[k] > 0)
            .map(|k| (0.5 * (self.edges[k] + self.edges[k + 1]), self.density(k).ln()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsmc::init_ensemble;

    #[test]
    fn two_atom_moments_are_one() {
        let e1 = Vector::new(1.0, 0.0, 0.0);
        let ens = ParticleEnsemble::from_velocities(vec![e1, -e1], 0).unwrap();
        let t = empirical_moments(&ens, &[0.0, 0.5, 1.0, 2.5, 7.0]).unwrap();
        assert!(t.entries.iter().all(|e| (e.value - 1.0).abs() < 1e-15));
        assert!(empirical_moments(&ens, &[]).unwrap().entries.is_empty());
        assert!(empirical_moments(&ens, &[f64::NAN]).is_err());
    }

    #[test]
    fn gaussian_fourth_moment() {
        let ens = init_ensemble(1_000_000, 1.0, 21).unwrap();
        let t = empirical_moments(&ens, &[2.0, 8.0]).unwrap();
        let m2 = t.get(2.0).unwrap();
        assert!((m2.value - 15.0).abs() < 3.0 * m2.stderr, "{m2:?}");
        assert!(m2.reliable);
        assert!(!t.get(8.0).unwrap().reliable);
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn jackknife_of_iid_samples() {
        let xs: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (m, se) = group_jackknife(&xs, 1000);
        assert_eq!(m, 0.0);
        assert!((se - 1.0 / 1000f64.sqrt()).abs() < 1e-3);
        assert!(group_jackknife(&[], 10).0.is_nan());
    }

    #[test]
    fn histogram_quantiles_and_density() {
        let mut h = SpeedHistogram::new(4.0, 4).unwrap();
        for v in [0.5, 1.5, 2.5, 3.5, 9.0] {
            h.add(v);
        }
        assert_eq!(h.counts, vec![1, 1, 1, 1]);
        assert_eq!(h.overflow, 1);
        assert!((h.quantile(0.4).unwrap() - 2.0).abs() < 1e-12);
        let shell = 4.0 * std::f64::consts::PI / 3.0;
        assert!((h.density(0) - 1.0 / (5.0 * shell)).abs() < 1e-15);
        assert!(h.quantile(0.99).is_none());
    }

    #[test]
    fn table_to_grid_stops_at_first_unreliable_order() {
        let ens = init_ensemble(10_000, 1.0, 2).unwrap();
        let ps: Vec<f64> = (0..=20).map(|k| k as f64 / 2.0).collect();
        let t = empirical_moments(&ens, &ps).unwrap();
        let g = t.to_grid().unwrap();
        assert!(g.p_max() <= p_max_reliable(10_000));
        assert!(g.p_max() >= 3.0);
    }
}
