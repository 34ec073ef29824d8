//! Batch experiment runner for `granular-core`: kernel tables, property
//! suites, moment propagation, particle simulation, tail analysis and
//! cross-checks, each writing CSV/JSON artifacts and a manifest.

pub mod compare;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use granular_core::dsmc::{SteadyStateReport, TailFitConfig};
use granular_core::moments::{ForcingModel, MomentGrid};
use serde::Serialize;

use config::{DsmcBlock, ExperimentConfig, KernelBlock, MomentsBlock, VerifyBlock};
use error::{CliError, CliResult};
use manifest::{sha256_hex, versions, Manifest, Outputs, Status, MANIFEST};
use pipeline::{analyze, print_comparison, run_pipeline, Context};
use verify::Suite;

#[derive(Debug, Parser)]
#[command(name = "granular", version, about = "Inelastic hard-sphere moment and tail experiments")]
pub struct Cli {
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads and collision partitions; 1 is the deterministic
    /// sequential reference.
    #[arg(long, global = true, env = "GRANULAR_THREADS")]
    pub threads: Option<usize>,

    /// Output directory; overrides the config file.
    #[arg(long, global = true, env = "GRANULAR_OUT")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
pub enum Command {
    /// Tabulate the Povzner constant over orders and restitution.
    Kernel {
        /// Comma-separated values of beta = (1+e)/2.
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
        /// Orders as a:step:b.
        #[arg(long, default_value = "1:0.5:10")]
        p: String,
    },
    /// Randomized property suites; exits 1 on any violation.
    Verify {
        #[arg(value_enum, required = true)]
        suites: Vec<Suite>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Propagate steady moment bounds and scan normalizations.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        /// Restitution coefficient.
        #[arg(long)]
        e: f64,
        #[arg(long)]
        m1: f64,
        /// Upper end of an m1 seed interval.
        #[arg(long)]
        m1_hi: Option<f64>,
        #[arg(long, default_value_t = 20.0)]
        p_max: f64,
        /// Comma-separated normalization exponents.
        #[arg(long, value_delimiter = ',')]
        a_scan: Option<Vec<f64>>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// Particle simulation to a forced steady state.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        e: f64,
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long, default_value_t = 20.0)]
        t_burn: f64,
        #[arg(long, default_value_t = 100.0)]
        t_avg: f64,
        /// Initial temperature per component.
        #[arg(long, default_value_t = 1.0)]
        t0: f64,
        #[arg(long, default_value_t = 8.0)]
        p_max: f64,
        #[arg(long, default_value_t = 400)]
        bins: usize,
        /// Also write the final velocities.
        #[arg(long)]
        save_ensemble: bool,
    },
    /// Refit the tail of a simulation report.
    Analyze {
        report: PathBuf,
        #[arg(long)]
        lo_quantile: Option<f64>,
        #[arg(long)]
        hi_quantile: Option<f64>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Check simulated moments against a propagated grid; exits 1 on failure.
    Compare {
        report: PathBuf,
        grid: PathBuf,
        #[arg(long, default_value_t = 6.0)]
        p_max: f64,
        #[arg(long, default_value_t = 3.0)]
        k_sigma: f64,
    },
    /// Execute the pipeline described by a TOML config file.
    Run { config: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModelKind {
    PureDiffusion,
    DiffusionFriction,
    NegativeFriction,
    ShearFlow,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
}

impl ModelArgs {
    pub fn forcing(&self) -> CliResult<ForcingModel> {
        let need = |name: &str, x: Option<f64>| {
            x.ok_or_else(|| CliError::Config(format!("--{name} is required for --model {:?}", self.model)))
        };
        let (model, used) = match self.model {
            ModelKind::PureDiffusion => (ForcingModel::PureDiffusion { mu: need("mu", self.mu)? }, [true, false, false]),
            ModelKind::DiffusionFriction => (
                ForcingModel::DiffusionFriction {
                    mu: need("mu", self.mu)?,
                    lambda: need("lambda", self.lambda)?,
                },
                [true, true, false],
            ),
            ModelKind::NegativeFriction => (
                ForcingModel::NegativeFriction {
                    kappa: need("kappa", self.kappa)?,
                },
                [false, false, true],
            ),
            ModelKind::ShearFlow => (
                ForcingModel::ShearFlow {
                    kappa: need("kappa", self.kappa)?,
                },
                [false, false, true],
            ),
        };
        let given = [self.mu.is_some(), self.lambda.is_some(), self.kappa.is_some()];
        for ((name, g), u) in ["mu", "lambda", "kappa"].iter().zip(given).zip(used) {
            if g && !u {
                return Err(CliError::Config(format!("--{name} does not apply to --model {:?}", self.model)));
            }
        }
        Ok(model)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let threads = cli.threads.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    // a global pool may already exist when embedded; its size then stands
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let (cfg, config_bytes) = match &cli.command {
        Command::Run { config } => {
            let (cfg, bytes) = ExperimentConfig::load(config)?;
            (cfg, Some(bytes))
        }
        Command::Analyze { .. } | Command::Compare { .. } => return standalone(cli, threads),
        other => (single_stage(other)?, None),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut effective = cfg.clone();
    effective.seed = Some(seed);
    let effective_toml =
        toml::to_string(&effective).map_err(|e| CliError::Config(format!("serializing config: {e}")))?;
    let hash = sha256_hex(config_bytes.as_deref().unwrap_or(effective_toml.as_bytes()));

    let mut out = Outputs::create(&dir)?;
    out.write("config.toml", effective_toml.as_bytes())?;
    let outcome = run_pipeline(&cfg, &Context { seed, threads }, &mut out);
    let (failed_stage, error) = match &outcome.failure {
        Some((stage, e)) => (Some(stage.clone()), Some(e.to_string())),
        None => (None, None),
    };
    let manifest = Manifest {
        command: command_name(&cli.command).into(),
        config_sha256: hash,
        seed,
        threads,
        versions: versions(),
        artifacts: out.artifacts().to_vec(),
        status: if failed_stage.is_some() { Status::Partial } else { Status::Complete },
        passed: outcome.passed && failed_stage.is_none(),
        failed_stage,
        error,
    };
    write_manifest(out.dir(), &manifest)?;
    if let Some((stage, e)) = outcome.failure {
        return Err(match e {
            CliError::Config(m) => CliError::Config(format!("{stage}: {m}")),
            other => other,
        });
    }
    if !outcome.passed {
        return Err(CliError::Verification("see the artifacts listed in the manifest".into()));
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Kernel { .. } => "kernel",
        Command::Verify { .. } => "verify",
        Command::Moments { .. } => "moments",
        Command::Simulate { .. } => "simulate",
        Command::Analyze { .. } => "analyze",
        Command::Compare { .. } => "compare",
        Command::Run { .. } => "run",
    }
}

fn empty_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: None,
        e: None,
        model: None,
        kernel: None,
        verify: None,
        dsmc: None,
        moments: None,
        compare: None,
        output: None,
    }
}

/// The one-block config equivalent to a pipeline subcommand.
fn single_stage(c: &Command) -> CliResult<ExperimentConfig> {
    let mut cfg = empty_config();
    match c {
        Command::Kernel { beta, p } => {
            cfg.kernel = Some(KernelBlock {
                beta: beta.clone(),
                p: p.clone(),
            })
        }
        Command::Verify { suites, trials } => {
            cfg.verify = Some(VerifyBlock {
                suites: suites.clone(),
                trials: *trials,
            })
        }
        Command::Moments {
            model,
            e,
            m1,
            m1_hi,
            p_max,
            a_scan,
            b,
        } => {
            cfg.model = Some(model.forcing()?);
            cfg.e = Some(*e);
            cfg.moments = Some(MomentsBlock {
                p_max: *p_max,
                a_scan: a_scan.clone().unwrap_or_else(config::default_a_scan),
                b: *b,
                m1: Some(*m1),
                m1_hi: *m1_hi,
            });
        }
        Command::Simulate {
            model,
            e,
            n,
            dt,
            t_burn,
            t_avg,
            t0,
            p_max,
            bins,
            save_ensemble,
        } => {
            cfg.model = Some(model.forcing()?);
            cfg.e = Some(*e);
            cfg.dsmc = Some(DsmcBlock {
                n: *n,
                dt: *dt,
                t_burn: *t_burn,
                t_avg: *t_avg,
                t0: *t0,
                p_max: *p_max,
                bins: *bins,
                save_ensemble: *save_ensemble,
            });
        }
        Command::Analyze { .. } | Command::Compare { .. } | Command::Run { .. } => {
            unreachable!("not a single pipeline stage")
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_report(path: &Path) -> CliResult<SteadyStateReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(SteadyStateReport::from_json(&text)?)
}

fn read_grid(path: &Path) -> CliResult<MomentGrid> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(MomentGrid::read_csv(std::io::BufReader::new(file))?)
}

fn write_manifest(dir: &Path, m: &Manifest) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// `analyze` and `compare`, which consume artifacts instead of a config.
fn standalone(cli: &Cli, threads: usize) -> CliResult<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.unwrap_or(0);
    let invocation = serde_json::to_string(&cli.command)?;
    let mut out = Outputs::create(&dir)?;
    let mut passed = true;
    let result = match &cli.command {
        Command::Analyze {
            report,
            lo_quantile,
            hi_quantile,
            bootstrap,
        } => read_report(report).and_then(|r| {
            let mut cfg: TailFitConfig = r.config.tail;
            cfg.lo_quantile = lo_quantile.unwrap_or(cfg.lo_quantile);
            cfg.hi_quantile = hi_quantile.unwrap_or(cfg.hi_quantile);
            cfg.bootstrap = bootstrap.unwrap_or(cfg.bootstrap);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let a = analyze(&r, &cfg);
            match (&a.histogram, &a.histogram_error) {
                (Some(f), _) => println!("histogram tail: s = {:.3} (r = {:.4})", f.estimate.s, f.estimate.r_star),
                (None, Some(e)) => println!("histogram tail: {e}"),
                _ => {}
            }
            out.write_json("tail.json", &a).map(|_| ())
        }),
        Command::Compare {
            report,
            grid,
            p_max,
            k_sigma,
        } => read_report(report).and_then(|r| {
            let g = read_grid(grid)?;
            let c = compare::compare(&r, &g, *p_max, *k_sigma)?;
            print_comparison(&c);
            passed = c.pass;
            out.write_json("comparison.json", &c).map(|_| ())
        }),
        _ => unreachable!("standalone commands only"),
    };
    let manifest = Manifest {
        command: command_name(&cli.command).into(),
        config_sha256: sha256_hex(invocation.as_bytes()),
        seed,
        threads,
        versions: versions(),
        artifacts: out.artifacts().to_vec(),
        status: if result.is_ok() { Status::Complete } else { Status::Partial },
        passed: passed && result.is_ok(),
        failed_stage: result.is_err().then(|| command_name(&cli.command).to_string()),
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    write_manifest(out.dir(), &manifest)?;
    result?;
    if !passed {
        return Err(CliError::Verification("comparison found violations".into()));
    }
    Ok(())
}
