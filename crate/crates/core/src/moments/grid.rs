use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ForcingModel;
use crate::error::{Error, Result};

/// Closed interval `[e^lo, e^hi]` stored by its logarithms; `lo = −∞`
/// encodes a zero lower bound and `hi = +∞` an absent upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LnInterval {
    pub lo: f64,
    pub hi: f64,
}

impl LnInterval {
    pub const UNBOUNDED: Self = Self {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn exact(ln: f64) -> Self {
        Self { lo: ln, hi: ln }
    }

    pub fn from_values(lo: f64, hi: f64) -> Self {
        Self {
            lo: lo.ln(),
            hi: hi.ln(),
        }
    }

    pub fn lo_value(&self) -> f64 {
        self.lo.exp()
    }

    pub fn hi_value(&self) -> f64 {
        self.hi.exp()
    }

    pub fn contains_ln(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn side(&self, side: super::Side) -> f64 {
        match side {
            super::Side::Lo => self.lo,
            super::Side::Hi => self.hi,
        }
    }
}

/// Outward slack for a log-space quantity assembled from terms of total
/// magnitude `mag`, with error amplification `amp`.
#[inline]
pub(crate) fn slack(mag: f64, amp: f64) -> f64 {
    4.0 * f64::EPSILON * (mag + 1.0) * amp
}

const CHANGE_TOL: f64 = 1e-10;

/// Moment intervals `[m_lo, m_hi]` on the grid `p = 0, 1/2, 1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGrid {
    entries: Vec<LnInterval>,
    /// The second moment `m₁` the grid was seeded with.
    pub seed_m1: f64,
    /// Lower endpoints carry no balance information (shear forcing).
    pub upper_only: bool,
    pub model: Option<ForcingModel>,
    pub restitution: Option<f64>,
}

impl MomentGrid {
    /// Grid holding `m₀ = 1`, `m_{1/2} ∈ [0, √m₁]` and `m₁` exactly.
    pub fn seeded(m1: f64) -> Result<Self> {
        if !(m1 > 0.0 && m1.is_finite()) {
            return Err(Error::InvalidParam(format!("seed m1 = {m1} must be positive")));
        }
        let l1 = m1.ln();
        Ok(Self {
            entries: vec![
                LnInterval::exact(0.0),
                LnInterval {
                    lo: f64::NEG_INFINITY,
                    hi: 0.5 * l1,
                },
                LnInterval::exact(l1),
            ],
            seed_m1: m1,
            upper_only: false,
            model: None,
            restitution: None,
        })
    }

    /// Grid from natural-valued intervals listed for `p = 0, 1/2, 1, …`.
    pub fn from_values(values: &[(f64, f64)]) -> Result<Self> {
        let entries = values
            .iter()
            .map(|&(lo, hi)| LnInterval::from_values(lo, hi))
            .collect();
        Self::from_ln(entries)
    }

    pub fn from_ln(entries: Vec<LnInterval>) -> Result<Self> {
        let seed_m1 = entries.get(2).map(|e| e.lo.exp()).unwrap_or(f64::NAN);
        let g = Self {
            entries,
            seed_m1,
            upper_only: false,
            model: None,
            restitution: None,
        };
        g.check_consistent()?;
        Ok(g)
    }

    fn check_consistent(&self) -> Result<()> {
        for (k, e) in self.entries.iter().enumerate() {
            if e.lo.is_nan() || e.hi.is_nan() || e.lo > e.hi {
                return Err(Error::Infeasible {
                    p: k as f64 / 2.0,
                    ln_lo: e.lo,
                    ln_hi: e.hi,
                });
            }
        }
        Ok(())
    }

    /// Grid index of `p`, if `p` lies on the half-integer grid.
    pub fn index(p: f64) -> Option<usize> {
        let k = 2.0 * p;
        (k >= 0.0 && k.fract() == 0.0 && k < usize::MAX as f64).then_some(k as usize)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn p_max(&self) -> f64 {
        (self.entries.len().max(1) - 1) as f64 / 2.0
    }

    pub fn entries(&self) -> &[LnInterval] {
        &self.entries
    }

    pub fn ln_at(&self, k: usize) -> Option<LnInterval> {
        self.entries.get(k).copied()
    }

    pub fn ln(&self, p: f64) -> Option<LnInterval> {
        Self::index(p).and_then(|k| self.ln_at(k))
    }

    /// `(m_lo, m_hi)` at `p`.
    pub fn get(&self, p: f64) -> Option<(f64, f64)> {
        self.ln(p).map(|e| (e.lo_value(), e.hi_value()))
    }

    /// `ln m` at grid index `k` on the requested side, or a missing-moment
    /// error.
    pub(crate) fn ln_side(&self, k: usize, side: super::Side) -> Result<f64> {
        self.ln_at(k)
            .map(|e| e.side(side))
            .ok_or_else(|| Error::MissingMoments(vec![k as f64 / 2.0]))
    }

    /// Lists the orders among `ks` absent from the grid.
    pub(crate) fn require(&self, ks: impl IntoIterator<Item = usize>) -> Result<()> {
        let mut missing: Vec<f64> = ks
            .into_iter()
            .filter(|&k| k >= self.entries.len())
            .map(|k| k as f64 / 2.0)
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        missing.sort_by(f64::total_cmp);
        missing.dedup();
        Err(Error::MissingMoments(missing))
    }

    pub(crate) fn extend_to(&mut self, len: usize) {
        if self.entries.len() < len {
            self.entries.resize(len, LnInterval::UNBOUNDED);
        }
    }

    pub fn truncate(&mut self, p_max: f64) {
        let n = (2.0 * p_max).floor() as usize + 1;
        self.entries.truncate(n);
    }

    /// Raises the lower endpoint at index `k`; returns whether the change is
    /// significant.
    pub(crate) fn raise_lo(&mut self, k: usize, lo: f64) -> Result<bool> {
        let e = &mut self.entries[k];
        if !(lo > e.lo) {
            return Ok(false);
        }
        let significant = e.lo == f64::NEG_INFINITY || lo - e.lo > CHANGE_TOL * (1.0 + lo.abs());
        e.lo = lo;
        if e.lo > e.hi {
            return Err(Error::Infeasible {
                p: k as f64 / 2.0,
                ln_lo: e.lo,
                ln_hi: e.hi,
            });
        }
        Ok(significant)
    }

    /// Lowers the upper endpoint at index `k`; returns whether the change is
    /// significant.
    pub(crate) fn lower_hi(&mut self, k: usize, hi: f64) -> Result<bool> {
        let e = &mut self.entries[k];
        if !(hi < e.hi) {
            return Ok(false);
        }
        let significant = e.hi == f64::INFINITY || e.hi - hi > CHANGE_TOL * (1.0 + hi.abs());
        e.hi = hi;
        if e.lo > e.hi {
            return Err(Error::Infeasible {
                p: k as f64 / 2.0,
                ln_lo: e.lo,
                ln_hi: e.hi,
            });
        }
        Ok(significant)
    }

    /// One pass of log-convexity narrowing over all index triples.
    fn closure_sweep(&mut self) -> Result<bool> {
        let n = self.entries.len();
        let mut changed = false;
        for i in 0..n {
            for l in i + 2..n {
                for j in i + 1..l {
                    let theta = (l - j) as f64 / (l - i) as f64;
                    let (ei, ej, el) = (self.entries[i], self.entries[j], self.entries[l]);
                    let amp = 1.0 / theta.min(1.0 - theta);
                    if ei.hi.is_finite() && el.hi.is_finite() {
                        let c = theta * ei.hi + (1.0 - theta) * el.hi;
                        changed |= self.lower_hi(j, c + slack(ei.hi.abs() + el.hi.abs(), 1.0))?;
                    }
                    if ej.lo.is_finite() {
                        if el.hi.is_finite() {
                            let c = (ej.lo - (1.0 - theta) * el.hi) / theta;
                            changed |= self.raise_lo(i, c - slack(ej.lo.abs() + el.hi.abs(), amp))?;
                        }
                        if ei.hi.is_finite() {
                            let c = (ej.lo - theta * ei.hi) / (1.0 - theta);
                            changed |= self.raise_lo(l, c - slack(ej.lo.abs() + ei.hi.abs(), amp))?;
                        }
                    }
                }
            }
        }
        Ok(changed)
    }

    /// Runs the log-convexity closure to a fixed point in place.
    pub fn close(&mut self) -> Result<()> {
        for _ in 0..2000 {
            if !self.closure_sweep()? {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Writes `p,m_lo,m_hi` rows preceded by `# key=value` metadata lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# seed_m1={}", self.seed_m1)?;
        writeln!(out, "# upper_only={}", self.upper_only)?;
        if let Some(e) = self.restitution {
            writeln!(out, "# e={e}")?;
        }
        if let Some(m) = &self.model {
            writeln!(out, "# model={}", serde_json::to_string(m)?)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "m_lo", "m_hi"])?;
        for (k, e) in self.entries.iter().enumerate() {
            w.serialize((k as f64 / 2.0, e.lo_value(), e.hi_value()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut seed_m1 = None;
        let mut upper_only = false;
        let mut restitution = None;
        let mut model = None;
        for line in text.lines() {
            let Some(meta) = line.strip_prefix('#') else {
                continue;
            };
            let Some((key, value)) = meta.trim().split_once('=') else {
                continue;
            };
            let bad = |what: &str| Error::Parse(format!("grid metadata {what}: {value:?}"));
            match key.trim() {
                "seed_m1" => seed_m1 = Some(value.trim().parse::<f64>().map_err(|_| bad("seed_m1"))?),
                "upper_only" => upper_only = value.trim().parse().map_err(|_| bad("upper_only"))?,
                "e" => restitution = Some(value.trim().parse::<f64>().map_err(|_| bad("e"))?),
                "model" => model = Some(serde_json::from_str(value.trim())?),
                _ => {}
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (row, rec) in rdr.deserialize::<(f64, f64, f64)>().enumerate() {
            let (p, lo, hi) = rec?;
            if Self::index(p) != Some(row) {
                return Err(Error::Parse(format!(
                    "grid row {row} has p = {p}; expected consecutive half-integers from 0"
                )));
            }
            if !(lo >= 0.0) || hi.is_nan() {
                return Err(Error::Parse(format!("invalid interval at p = {p}: [{lo}, {hi}]")));
            }
            entries.push(LnInterval::from_values(lo, hi));
        }
        let mut g = Self::from_ln(entries)?;
        if let Some(m1) = seed_m1 {
            g.seed_m1 = m1;
        }
        g.upper_only = upper_only;
        g.restitution = restitution;
        g.model = model;
        Ok(g)
    }
}

/// Log-convexity closure of a grid: for `p' < p < p''` on the grid,
/// `ln m_p ≤ θ ln m_{p'} + (1−θ) ln m_{p''}` with `θ = (p''−p)/(p''−p')`,
/// applied to every endpoint it constrains until nothing narrows.
///
/// With `p' = 0` this contains the power-mean inequalities
/// `(m_{p'}^{1/p'})^p ≤ m_p ≤ (m_{p''}^{1/p''})^p`.
pub fn jensen_closure(grid: &MomentGrid) -> Result<MomentGrid> {
    if grid.ln_at(0) != Some(LnInterval::exact(0.0)) {
        return Err(Error::InvalidParam("closure needs m_0 = 1".into()));
    }
    let mut g = grid.clone();
    g.close()?;
    Ok(g)
}
