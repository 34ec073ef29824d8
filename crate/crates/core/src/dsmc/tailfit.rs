use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::stats::SpeedHistogram;
use crate::error::{Error, Result};
use crate::moments::{TailEstimate, TailMethod};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFitConfig {
    /// Speed quantiles bounding the fit window.
    pub lo_quantile: f64,
    pub hi_quantile: f64,
    pub min_bins: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub s_step: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for TailFitConfig {
    fn default() -> Self {
        Self {
            lo_quantile: 0.95,
            hi_quantile: 0.999,
            min_bins: 10,
            s_min: 0.2,
            s_max: 4.0,
            s_step: 0.01,
            bootstrap: 200,
            seed: 0,
        }
    }
}

/// Histogram fit of `ln f̂ = ln C − r|v|^s` with bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub estimate: TailEstimate,
    pub ln_c: f64,
    /// Central 95% bootstrap intervals.
    pub s_interval: (f64, f64),
    pub r_interval: (f64, f64),
    pub bins: usize,
}

struct Point {
    v: f64,
    y: f64,
    w: f64,
}

/// Weighted fit of `y = a + b v^s`; `(a, b, weighted RSS)`.
fn line(points: &[Point], s: f64) -> (f64, f64, f64) {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = p.v.powf(s);
        sw += p.w;
        sx += p.w * x;
        sy += p.w * p.y;
        sxx += p.w * x * x;
        sxy += p.w * x * p.y;
    }
    let (mx, my) = (sx / sw, sy / sw);
    let b = (sxy - sw * mx * my) / (sxx - sw * mx * mx);
    let a = my - b * mx;
    let rss = points
        .iter()
        .map(|p| p.w * (p.y - a - b * p.v.powf(s)).powi(2))
        .sum();
    (a, b, rss)
}

/// Profile fit in `s`: grid scan, then golden-section refinement.
fn profile(points: &[Point], cfg: &TailFitConfig) -> Option<(f64, f64, f64)> {
    let steps = ((cfg.s_max - cfg.s_min) / cfg.s_step).round() as usize;
    let mut best = (f64::INFINITY, 0);
    for k in 0..=steps {
        let rss = line(points, cfg.s_min + k as f64 * cfg.s_step).2;
        if rss < best.0 {
            best = (rss, k);
        }
    }
    if !best.0.is_finite() || best.1 == 0 || best.1 == steps {
        return None;
    }
    let centre = cfg.s_min + best.1 as f64 * cfg.s_step;
    let (mut a, mut b) = (centre - cfg.s_step, centre + cfg.s_step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if line(points, c).2 < line(points, d).2 {
            b = d;
        } else {
            a = c;
        }
    }
    let s = 0.5 * (a + b);
    let (ln_c, slope, _) = line(points, s);
    (slope < 0.0).then_some((s, -slope, ln_c))
}

fn window_points(h: &SpeedHistogram, counts: &[u64], lo: f64, hi: f64) -> Vec<Point> {
    let total = h.total() as f64;
    (0..counts.len())
        .filter(|&k| h.edges[k] >= lo && h.edges[k + 1] <= hi && counts[k] > 0)
        .map(|k| {
            let (a, b) = (h.edges[k], h.edges[k + 1]);
            let shell = 4.0 * std::f64::consts::PI / 3.0 * (b * b * b - a * a * a);
            Point {
                v: 0.5 * (a + b),
                y: (counts[k] as f64 / (total * shell)).ln(),
                w: counts[k] as f64,
            }
        })
        .collect()
}

fn central_interval(mut xs: Vec<f64>) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let at = |q: f64| xs[((xs.len() - 1) as f64 * q).round() as usize];
    (at(0.025), at(0.975))
}

/// Fits `ln f̂(|v|) = ln C − r|v|^s` over the configured speed quantile
/// window, weighting bins by their counts.
pub fn fit_tail(h: &SpeedHistogram) -> Result<TailFit> {
    fit_tail_with(h, &TailFitConfig::default())
}

pub fn fit_tail_with(h: &SpeedHistogram, cfg: &TailFitConfig) -> Result<TailFit> {
    if !(0.0 < cfg.lo_quantile && cfg.lo_quantile < cfg.hi_quantile && cfg.hi_quantile < 1.0)
        || !(0.0 < cfg.s_min && cfg.s_min < cfg.s_max && cfg.s_step > 0.0)
    {
        return Err(Error::InvalidParam(format!("bad tail-fit configuration {cfg:?}")));
    }
    let insufficient = |msg: String| Error::InsufficientTail(msg);
    let lo = h
        .quantile(cfg.lo_quantile)
        .ok_or_else(|| insufficient("lower window quantile outside the histogram".into()))?;
    let hi = h
        .quantile(cfg.hi_quantile)
        .ok_or_else(|| insufficient("upper window quantile outside the histogram".into()))?;
    let points = window_points(h, &h.counts, lo, hi);
    if points.len() < cfg.min_bins {
        return Err(insufficient(format!(
            "{} occupied bins in [{lo:.4}, {hi:.4}], need {}",
            points.len(),
            cfg.min_bins
        )));
    }
    let (s, r, ln_c) = profile(&points, cfg).ok_or_else(|| {
        insufficient(format!(
            "no decaying stretched exponential with s in ({}, {}) fits [{lo:.4}, {hi:.4}]",
            cfg.s_min, cfg.s_max
        ))
    })?;
    let residuals: Vec<f64> = points.iter().map(|p| p.y - ln_c + r * p.v.powf(s)).collect();
    let wsum: f64 = points.iter().map(|p| p.w).sum();
    let rms = (points.iter().zip(&residuals).map(|(p, e)| p.w * e * e).sum::<f64>() / wsum).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut ss, mut rs) = (Vec::new(), Vec::new());
    for _ in 0..cfg.bootstrap {
        let counts: Vec<u64> = h
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                if c == 0 || h.edges[k] < lo || h.edges[k + 1] > hi {
                    c
                } else {
                    Poisson::new(c as f64).expect("positive mean").sample(&mut rng) as u64
                }
            })
            .collect();
        let pts = window_points(h, &counts, lo, hi);
        if pts.len() < cfg.min_bins {
            continue;
        }
        if let Some((bs, br, _)) = profile(&pts, cfg) {
            ss.push(bs);
            rs.push(br);
        }
    }
    let (s_stderr, s_interval, r_interval) = if ss.len() >= 2 && 2 * ss.len() >= cfg.bootstrap {
        let mean = ss.iter().sum::<f64>() / ss.len() as f64;
        let var = ss.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (ss.len() - 1) as f64;
        (Some(var.sqrt()), central_interval(ss), central_interval(rs))
    } else {
        (None, (s, s), (r, r))
    };
    Ok(TailFit {
        estimate: TailEstimate {
            s,
            r_star: r,
            one_sided: false,
            residual_rms: rms,
            residuals,
            range: (lo, hi),
            s_stderr,
            method: TailMethod::Histogram,
        },
        ln_c,
        s_interval,
        r_interval,
        bins: points.len(),
    })
}
