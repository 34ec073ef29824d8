//! TOML experiment configuration. Every block is optional; each block that is
//! present selects one stage of the pipeline.

use std::path::{Path, PathBuf};

use granular_core::dsmc::RunConfig;
use granular_core::moments::ForcingModel;
use granular_core::Params;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::verify::Suite;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Restitution coefficient.
    pub e: Option<f64>,
    pub model: Option<ForcingModel>,
    pub kernel: Option<KernelBlock>,
    pub verify: Option<VerifyBlock>,
    pub dsmc: Option<DsmcBlock>,
    pub moments: Option<MomentsBlock>,
    pub compare: Option<CompareBlock>,
    pub output: Option<OutputBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub beta: Vec<f64>,
    /// `a:step:b`, inclusive.
    pub p: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub suites: Vec<Suite>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsmcBlock {
    pub n: usize,
    pub dt: f64,
    pub t_burn: f64,
    pub t_avg: f64,
    /// Initial temperature per component.
    #[serde(default = "one")]
    pub t0: f64,
    #[serde(default = "default_dsmc_p_max")]
    pub p_max: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub save_ensemble: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsBlock {
    #[serde(default = "default_moments_p_max")]
    pub p_max: f64,
    #[serde(default = "default_a_scan")]
    pub a_scan: Vec<f64>,
    /// Normalization offset; per-`a` default when absent.
    pub b: Option<f64>,
    /// Seed `m₁`; taken from the simulation when absent.
    pub m1: Option<f64>,
    /// Upper end of an `m₁` seed interval `[m1, m1_hi]`.
    pub m1_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    #[serde(default = "default_compare_p_max")]
    pub p_max: f64,
    #[serde(default = "three")]
    pub k_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

fn default_trials() -> usize {
    1000
}
fn one() -> f64 {
    1.0
}
fn three() -> f64 {
    3.0
}
fn default_dsmc_p_max() -> f64 {
    8.0
}
fn default_bins() -> usize {
    400
}
fn default_moments_p_max() -> f64 {
    20.0
}
pub(crate) fn default_a_scan() -> Vec<f64> {
    vec![1.0, 4.0 / 3.0, 2.0]
}
pub(crate) fn default_compare_p_max() -> f64 {
    6.0
}

/// Inclusive arithmetic range `a:step:b` (or a single value).
pub fn parse_range(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Config(format!("range {spec:?}: expected a:step:b with step > 0 and a <= b"));
    let parts = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<Vec<_>>>()?;
    match parts[..] {
        [x] if x.is_finite() => Ok(vec![x]),
        [a, step, b] if a.is_finite() && b.is_finite() && step > 0.0 && a <= b => {
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| a + k as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

fn field(name: &str, ok: bool, what: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name}: {what}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| CliError::Config(format!("{}: not UTF-8: {e}", path.display())))?;
        let cfg = Self::parse(text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, bytes))
    }

    /// Parses and validates; errors name the offending line or field.
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn params(&self) -> CliResult<Params> {
        let e = self.e.ok_or_else(|| CliError::Config("e: required by the dsmc and moments blocks".into()))?;
        Params::new(e).map_err(|err| CliError::Config(format!("e: {err}")))
    }

    pub fn forcing(&self) -> CliResult<ForcingModel> {
        self.model
            .ok_or_else(|| CliError::Config("model: required by the dsmc and moments blocks".into()))
    }

    pub fn run_config(&self) -> Option<RunConfig> {
        self.dsmc.as_ref().map(|d| {
            let mut rc = RunConfig::new(d.dt, d.t_burn, d.t_avg);
            rc.p_max = d.p_max;
            rc.bins = d.bins;
            rc
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        let blocks = [
            self.kernel.is_some(),
            self.verify.is_some(),
            self.dsmc.is_some(),
            self.moments.is_some(),
        ];
        field("config", blocks.iter().any(|&b| b), "no pipeline block (kernel, verify, dsmc, moments)")?;
        if let Some(k) = &self.kernel {
            field("kernel.beta", !k.beta.is_empty(), "must list at least one value")?;
            for &b in &k.beta {
                field("kernel.beta", (0.5..=1.0).contains(&b), "values must lie in [0.5, 1]")?;
            }
            let ps = parse_range(&k.p).map_err(|e| CliError::Config(format!("kernel.p: {e}")))?;
            field("kernel.p", ps.iter().all(|&p| p >= 1.0), "orders must be >= 1")?;
        }
        if let Some(v) = &self.verify {
            field("verify.suites", !v.suites.is_empty(), "must list at least one suite")?;
            field("verify.trials", v.trials > 0, "must be positive")?;
        }
        let needs_model = self.dsmc.is_some() || self.moments.is_some();
        if needs_model {
            let model = self.forcing()?;
            model.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
            self.params()?;
        }
        if let Some(d) = &self.dsmc {
            field("dsmc.n", d.n >= 2, "must be at least 2")?;
            field("dsmc.t0", d.t0 >= 0.0 && d.t0.is_finite(), "must be non-negative")?;
            let rc = self.run_config().expect("dsmc block present");
            rc.validate(self.model.as_ref())
                .map_err(|e| CliError::Config(format!("dsmc: {e}")))?;
        }
        if let Some(m) = &self.moments {
            field("moments.p_max", m.p_max >= 1.0 && m.p_max.is_finite(), "must be finite and >= 1")?;
            field("moments.a_scan", m.a_scan.iter().all(|&a| a > 0.0 && a.is_finite()), "values must be positive")?;
            if let Some(b) = m.b {
                field("moments.b", b.is_finite(), "must be finite")?;
            }
            match (m.m1, m.m1_hi) {
                (Some(lo), hi) => {
                    let hi = hi.unwrap_or(lo);
                    field("moments.m1", lo > 0.0 && lo <= hi && hi.is_finite(), "need 0 < m1 <= m1_hi")?;
                }
                (None, Some(_)) => field("moments.m1_hi", false, "given without moments.m1")?,
                (None, None) => field("moments.m1", self.dsmc.is_some(), "required without a dsmc block")?,
            }
        }
        if let Some(c) = &self.compare {
            field("compare", self.dsmc.is_some() && self.moments.is_some(), "needs both dsmc and moments blocks")?;
            field("compare.p_max", c.p_max >= 1.0, "must be >= 1")?;
            field("compare.k_sigma", c.k_sigma >= 0.0, "must be non-negative")?;
        }
        Ok(())
    }
}
