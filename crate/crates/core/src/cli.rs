//! Command-line front end.
//!
//! Every command reads its inputs from files, computes one document and
//! writes it to `--out` (or stdout). Nothing depends on wall-clock time or
//! thread scheduling, so identical configurations give byte-identical output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::certify::{
    certify, design_protocol, robustness_sweep, simulate, uniqueness_experiment, uniqueness_solver_options, Verdict,
};
use crate::design::validate_spectrum;
use crate::error::{Error, Result};
use crate::io::{self, CorrelationDoc, FactorizeDoc, ProtocolSpecDoc, ReportDoc, UniquenessDoc};
use crate::solver::{numerical_factorize, refine_factorization, SolverOptions};
use crate::tolerance::Tolerances;

/// Overrides the certification threshold when `--tol-cert` is absent.
pub const TOL_ENV: &str = "SEMISELFTEST_TOL";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CERTIFY_FAIL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "semiselftest", version, about = "Design, simulate and certify semi-self-testing protocols")]
pub struct Cli {
    /// Pass/fail threshold for `certify` (also read from SEMISELFTEST_TOL).
    #[arg(long, global = true)]
    pub tol_cert: Option<f64>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Schmidt weights, comma-separated in descending order.
    #[arg(long, allow_hyphen_values = true)]
    pub spectrum: String,
    /// Local dimension; defaults to the number of weights.
    #[arg(long)]
    pub d: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Write the protocol (ideal correlation, state, POVMs) for a spectrum.
    Design(SpectrumArgs),
    /// Simulate a protocol file under depolarizing noise.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        povm_noise: f64,
    },
    /// Check an observed correlation against the designed one.
    Certify {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        spectrum: SpectrumArgs,
    },
    /// Numerically factorize a correlation into r×r PSD matrices.
    Factorize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        solver_tol: Option<f64>,
        /// Start from this factorization instead of a random one.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Saturation and fidelity across a grid of depolarizing strengths.
    Sweep {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Factorize repeatedly from different seeds and compare canonical forms.
    Uniqueness {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Design {
        lambdas: Vec<f64>,
        d: usize,
    },
    Simulate {
        input: PathBuf,
        noise: f64,
        povm_noise: f64,
    },
    Certify {
        input: PathBuf,
        lambdas: Vec<f64>,
        d: usize,
    },
    Factorize {
        input: PathBuf,
        r: usize,
        seed: u64,
        options: SolverOptions,
        warm_start: Option<PathBuf>,
    },
    Sweep {
        lambdas: Vec<f64>,
        d: usize,
        grid: Vec<f64>,
        seed: u64,
    },
    Uniqueness {
        input: PathBuf,
        r: usize,
        trials: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub out: Option<PathBuf>,
    pub tolerances: Tolerances,
}

/// A finished command: the document to write and the exit status to report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub text: String,
    pub status: i32,
}

fn spectrum(args: &SpectrumArgs, tol: &Tolerances) -> Result<(Vec<f64>, usize)> {
    let lambdas = io::parse_spectrum(&args.spectrum)?;
    let d = args.d.unwrap_or(lambdas.len());
    validate_spectrum(&lambdas, d, tol)?;
    Ok((lambdas, d))
}

fn parse_tolerance(text: &str, source: &str) -> Result<f64> {
    match text.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(Error::InvalidParameters(format!(
            "{source} = {text:?} must be a positive number"
        ))),
    }
}

impl RunConfig {
    /// Builds a config from parsed arguments. `env_tol` is the value of
    /// `SEMISELFTEST_TOL`, if set; `--tol-cert` takes precedence over it.
    pub fn from_cli(cli: Cli, env_tol: Option<&str>) -> Result<Self> {
        let mut tolerances = Tolerances::default();
        if let Some(v) = cli.tol_cert {
            tolerances.cert = parse_tolerance(&v.to_string(), "--tol-cert")?;
        } else if let Some(v) = env_tol {
            tolerances.cert = parse_tolerance(v, TOL_ENV)?;
        }
        let command = match cli.command {
            CliCommand::Design(args) => {
                let (lambdas, d) = spectrum(&args, &tolerances)?;
                Command::Design { lambdas, d }
            }
            CliCommand::Simulate { input, noise, povm_noise } => Command::Simulate { input, noise, povm_noise },
            CliCommand::Certify { input, spectrum: args } => {
                let (lambdas, d) = spectrum(&args, &tolerances)?;
                Command::Certify { input, lambdas, d }
            }
            CliCommand::Factorize {
                input,
                r,
                seed,
                max_iters,
                solver_tol,
                warm_start,
            } => {
                if r == 0 {
                    return Err(Error::InvalidParameters("--r must be at least 1".into()));
                }
                let mut options = SolverOptions::default();
                if let Some(n) = max_iters {
                    options.max_iters = n;
                }
                if let Some(t) = solver_tol {
                    options.tol = parse_tolerance(&t.to_string(), "--solver-tol")?;
                }
                Command::Factorize {
                    input,
                    r,
                    seed,
                    options,
                    warm_start,
                }
            }
            CliCommand::Sweep { spectrum: args, grid, seed } => {
                let (lambdas, d) = spectrum(&args, &tolerances)?;
                let grid = io::parse_grid(&grid)?;
                if let Some(&p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::InvalidProbability(p));
                }
                Command::Sweep { lambdas, d, grid, seed }
            }
            CliCommand::Uniqueness { input, r, trials, seed } => {
                if r == 0 || trials == 0 {
                    return Err(Error::InvalidParameters("--r and --trials must be at least 1".into()));
                }
                Command::Uniqueness { input, r, trials, seed }
            }
        };
        Ok(Self {
            command,
            out: cli.out,
            tolerances,
        })
    }

    /// Parses a full argument list, program name included.
    pub fn from_args<I, T>(args: I, env_tol: Option<&str>) -> std::result::Result<Self, ArgsError>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let cli = Cli::try_parse_from(args).map_err(ArgsError::Usage)?;
        Self::from_cli(cli, env_tol).map_err(ArgsError::Invalid)
    }
}

#[derive(Debug)]
pub enum ArgsError {
    /// Bad syntax, or `--help`/`--version`.
    Usage(clap::Error),
    Invalid(Error),
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))
}

/// Runs a command without touching the output path.
pub fn execute(config: &RunConfig) -> Result<Output> {
    let tol = &config.tolerances;
    let ok = |text| Output { text, status: EXIT_OK };
    match &config.command {
        Command::Design { lambdas, d } => {
            let spec = design_protocol(lambdas, *d, tol)?;
            Ok(ok(io::to_json(&ProtocolSpecDoc::from(&spec))))
        }
        Command::Simulate { input, noise, povm_noise } => {
            let spec = io::parse_protocol_spec(&read(input)?, tol)?;
            let measured = simulate(&spec, *noise, *povm_noise, tol)?;
            for c in &measured.clipped {
                eprintln!("note: clipped entry ({}, {}) = {:e} to zero", c.x, c.y, c.value);
            }
            Ok(ok(io::to_json(&CorrelationDoc::from(&measured.correlation))))
        }
        Command::Certify { input, lambdas, d } => {
            let observed = io::parse_correlation(&read(input)?, tol)?;
            let report = certify(&observed, lambdas, *d, tol)?;
            Ok(Output {
                text: io::to_json(&ReportDoc::from(&report)),
                status: match report.verdict {
                    Verdict::Pass => EXIT_OK,
                    Verdict::Fail => EXIT_CERTIFY_FAIL,
                },
            })
        }
        Command::Factorize {
            input,
            r,
            seed,
            options,
            warm_start,
        } => {
            let target = io::parse_correlation(&read(input)?, tol)?;
            let run = match warm_start {
                Some(path) => {
                    let init = io::parse_factorization(&read(path)?, tol)?;
                    if init.r() != *r || init.m() != target.m() {
                        return Err(Error::DimensionMismatch(format!(
                            "warm start has {} factors of size {}, need {} of size {r}",
                            init.m(),
                            init.r(),
                            target.m()
                        )));
                    }
                    refine_factorization(&target, &init, options)
                }
                None => numerical_factorize(&target, *r, *seed, options),
            };
            Ok(ok(io::to_json(&FactorizeDoc::new(&run, *seed))))
        }
        Command::Sweep { lambdas, d, grid, seed } => {
            let rows = robustness_sweep(lambdas, *d, grid, *seed, tol)?;
            Ok(ok(io::sweep_csv(&rows)))
        }
        Command::Uniqueness { input, r, trials, seed } => {
            let target = io::parse_correlation(&read(input)?, tol)?;
            let summary = uniqueness_experiment(&target, *r, *trials, *seed, &uniqueness_solver_options(), tol)?;
            Ok(ok(io::to_json(&UniquenessDoc::new(&summary, *r))))
        }
    }
}

/// Runs a command and writes its document. Returns the process exit status.
pub fn run(config: &RunConfig) -> i32 {
    let output = match execute(config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let written = match &config.out {
        Some(path) => fs::write(path, &output.text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{}", output.text);
            Ok(())
        }
    };
    match written {
        Ok(()) => output.status,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
