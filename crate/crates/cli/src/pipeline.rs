//! Stage execution shared by `run` and the single-stage subcommands.

use granular_core::dsmc::{
    empirical_tail_config, fit_tail_with, init_ensemble, run_to_steady, SteadyStateReport, TailFit,
    TailFitConfig,
};
use granular_core::kernel::gamma_p;
use granular_core::moments::{
    default_b, estimate_tail_order, estimate_tail_order_with, geometric_check, normalize, propagate_with,
    GeometricCheck, MomentGrid, PropagateConfig, PropagationDiagnostics, Seed, TailEstimate,
};
use granular_core::Params;
use serde::{Deserialize, Serialize};

use crate::compare::{compare, Comparison};
use crate::config::{parse_range, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Outputs;
use crate::verify::{run_suite, SuiteReport};

/// First order entering the geometric check.
const CHECK_FROM: f64 = 1.5;

pub struct Context {
    pub seed: u64,
    pub threads: usize,
}

/// One normalization of the `a`-scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanEntry {
    pub a: f64,
    pub b: f64,
    pub check: Option<GeometricCheck>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsSummary {
    pub model: granular_core::moments::ForcingModel,
    pub e: f64,
    pub seed: Seed,
    pub p_max: f64,
    pub scan: Vec<ScanEntry>,
    pub tail: Option<TailEstimate>,
    pub tail_error: Option<String>,
    pub diagnostics: PropagationDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailAnalysis {
    pub model: Option<String>,
    /// Tail order predicted for the forcing; a lower bound for shear.
    pub predicted_s: Option<f64>,
    pub histogram: Option<TailFit>,
    pub histogram_error: Option<String>,
    pub moments: Option<TailEstimate>,
    pub moments_error: Option<String>,
}

/// Outcome of a pipeline: whether every check passed, and the stage that
/// aborted it, if any.
pub struct PipelineOutcome {
    pub passed: bool,
    pub failure: Option<(String, CliError)>,
}

pub fn run_pipeline(cfg: &ExperimentConfig, ctx: &Context, out: &mut Outputs) -> PipelineOutcome {
    let mut passed = true;
    let mut report = None;
    let mut grid = None;
    macro_rules! stage {
        ($name:expr, $body:expr) => {
            match $body {
                Ok(v) => v,
                Err(e) => {
                    return PipelineOutcome {
                        passed,
                        failure: Some(($name.to_string(), e)),
                    }
                }
            }
        };
    }
    if let Some(k) = &cfg.kernel {
        stage!("kernel", kernel_stage(&k.beta, &k.p, out));
    }
    if let Some(v) = &cfg.verify {
        let reports: Vec<SuiteReport> = v.suites.iter().map(|&s| run_suite(s, v.trials, ctx.seed)).collect();
        for r in &reports {
            println!("verify {}: {} checks, {} violations", r.suite.name(), r.checks, r.violations);
        }
        passed &= reports.iter().all(|r| r.violations == 0);
        stage!("verify", out.write_json("verify.json", &reports));
    }
    if cfg.dsmc.is_some() {
        report = Some(stage!("dsmc", dsmc_stage(cfg, ctx, out)));
    }
    if let Some(m) = &cfg.moments {
        let seed = match (m.m1, &report) {
            (Some(lo), _) => Seed::interval(lo, m.m1_hi.unwrap_or(lo)),
            (None, Some(r)) => measured_seed(r),
            (None, None) => unreachable!("validated: moments.m1 or dsmc"),
        };
        grid = Some(stage!("moments", moments_stage(cfg, &seed, out)));
    }
    if let (Some(c), Some(r), Some(g)) = (&cfg.compare, &report, &grid) {
        let cmp = stage!("compare", compare(r, g, c.p_max, c.k_sigma).map_err(CliError::from));
        print_comparison(&cmp);
        passed &= cmp.pass;
        stage!("compare", out.write_json("comparison.json", &cmp));
    }
    PipelineOutcome { passed, failure: None }
}

/// `m₁ ± 3σ` of a steady-state report.
pub fn measured_seed(r: &SteadyStateReport) -> Seed {
    let (m1, s) = r.moments.get(1.0).map_or((r.m1(), 0.0), |m| (m.value, m.stderr));
    Seed::interval((m1 - 3.0 * s).max(0.5 * m1), m1 + 3.0 * s)
}

fn kernel_stage(betas: &[f64], p_spec: &str, out: &mut Outputs) -> CliResult<()> {
    let ps = parse_range(p_spec)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p", "beta", "gamma_p", "err_estimate"])?;
    for &beta in betas {
        let params = Params::from_beta(beta).map_err(|e| CliError::Config(format!("--beta: {e}")))?;
        for &p in &ps {
            let g = gamma_p(&params, p)?;
            w.serialize((p, beta, g.value, g.err_estimate))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("kernel.csv", e.into_error()))?;
    let path = out.write("kernel.csv", &bytes)?;
    println!("wrote {} ({} rows)", path.display(), betas.len() * ps.len());
    Ok(())
}

fn dsmc_stage(cfg: &ExperimentConfig, ctx: &Context, out: &mut Outputs) -> CliResult<SteadyStateReport> {
    let d = cfg.dsmc.as_ref().expect("dsmc block");
    let (model, params) = (cfg.forcing()?, cfg.params()?);
    let mut rc = cfg.run_config().expect("dsmc block");
    rc.tail.seed = ctx.seed;
    let mut ens = init_ensemble(d.n, d.t0, ctx.seed)?.with_partitions(ctx.threads);
    let report = run_to_steady(&mut ens, Some(&model), &params, &rc)?;
    let path = out.write("report.json", report.to_json()?.as_bytes())?;
    println!(
        "wrote {}: m1 = {:.6} after t = {}, {} warnings",
        path.display(),
        report.m1(),
        report.time,
        report.warnings.len()
    );
    if d.save_ensemble {
        let mut buf = Vec::new();
        ens.write_csv(&mut buf)?;
        out.write("ensemble.csv", &buf)?;
    }
    out.write_json("tail.json", &analyze(&report, &report.config.tail))?;
    Ok(report)
}

fn moments_stage(cfg: &ExperimentConfig, seed: &Seed, out: &mut Outputs) -> CliResult<MomentGrid> {
    let m = cfg.moments.as_ref().expect("moments block");
    let (model, params) = (cfg.forcing()?, cfg.params()?);
    let (grid, diagnostics) = propagate_with(&model, &params, seed, m.p_max, &PropagateConfig::default())?;
    let mut buf = Vec::new();
    grid.write_csv(&mut buf)?;
    let path = out.write("grid.csv", &buf)?;
    let scan = m
        .a_scan
        .iter()
        .map(|&a| {
            let b = m.b.unwrap_or_else(|| default_b(a));
            match normalize(&grid, a, b) {
                Ok(z) => ScanEntry {
                    a,
                    b,
                    check: Some(geometric_check(&z, CHECK_FROM)),
                    error: None,
                },
                Err(e) => ScanEntry {
                    a,
                    b,
                    check: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect::<Vec<_>>();
    let (tail, tail_error) = split(estimate_tail_order(&grid));
    println!("wrote {} (p <= {})", path.display(), grid.p_max());
    for s in &scan {
        match &s.check {
            Some(c) => println!("  a = {:.4}: geometric growth {}", s.a, if c.holds { "holds" } else { "fails" }),
            None => println!("  a = {:.4}: {}", s.a, s.error.as_deref().unwrap_or("")),
        }
    }
    let summary = MomentsSummary {
        model,
        e: params.e,
        seed: *seed,
        p_max: m.p_max,
        scan,
        tail,
        tail_error,
        diagnostics,
    };
    out.write_json("moments.json", &summary)?;
    Ok(grid)
}

fn split<T>(r: granular_core::Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Tail order from the stored histogram and from the empirical moments.
pub fn analyze(report: &SteadyStateReport, cfg: &TailFitConfig) -> TailAnalysis {
    let (histogram, histogram_error) = split(fit_tail_with(&report.histogram, cfg));
    let (moments, moments_error) =
        split(report.moments.to_grid().and_then(|g| estimate_tail_order_with(&g, &empirical_tail_config())));
    TailAnalysis {
        model: report.model.map(|m| m.name().to_string()),
        predicted_s: report.model.map(|m| 2.0 / m.predicted_a()),
        histogram,
        histogram_error,
        moments,
        moments_error,
    }
}

pub fn print_comparison(c: &Comparison) {
    for v in &c.verdicts {
        println!(
            "  p = {:>4}: {:.6e} +- {:.1e} in [{:.6e}, {:.6e}]: {}",
            v.p,
            v.value,
            v.stderr,
            v.m_lo,
            v.m_hi,
            if v.inside { "ok" } else { "VIOLATION" }
        );
    }
    for w in &c.warnings {
        println!("  warning: {w}");
    }
    println!("compare: {}", if c.pass { "pass" } else { "FAIL" });
}

