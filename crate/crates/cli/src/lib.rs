//! Command-line driver for the dtnlab experiments.

pub mod config;
pub mod experiments;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use dtnlab::semigroup::Verdict;

use config::{ConfigError, ExperimentConfig};
use experiments::{Outcome, RunError, EXPERIMENTS};

pub const BUNDLED_CONFIG: &str = include_str!("../configs/square.json");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dtnlab", version, about = "Spectral experiments for partial Dirichlet-to-Neumann operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON); defaults to the bundled unit-square setup.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for CSV reports.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for randomized trials.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Number of eigenpairs.
    #[arg(long, global = true, value_name = "N")]
    k: Option<usize>,
    /// Refinement levels for the gauge study.
    #[arg(long, global = true, value_name = "N")]
    refinements: Option<usize>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check the configuration and certify the coefficients.
    Validate,
    /// Dirichlet, mixed and Steklov eigenvalue tables.
    Spectrum,
    /// Robin eigenvalues as functions of μ.
    Curves,
    /// Steklov/Robin duality residuals.
    Duality,
    /// Robin eigenvalues as μ → −∞.
    Limit,
    /// Order properties of the boundary semigroup.
    Semigroup,
    /// Invariance under a boundary-fixing change of variables.
    Gauge,
    /// Every experiment above.
    All,
}

impl Command {
    fn experiments(self) -> &'static [&'static str] {
        match self {
            Command::Validate => &EXPERIMENTS[0..1],
            Command::Spectrum => &EXPERIMENTS[1..2],
            Command::Curves => &EXPERIMENTS[2..3],
            Command::Duality => &EXPERIMENTS[3..4],
            Command::Limit => &EXPERIMENTS[4..5],
            Command::Semigroup => &EXPERIMENTS[5..6],
            Command::Gauge => &EXPERIMENTS[6..7],
            Command::All => &EXPERIMENTS,
        }
    }
}

fn threads_from_env() -> Result<usize, String> {
    match std::env::var("DTNLAB_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("DTNLAB_THREADS must be a nonnegative integer, got {v:?}")),
    }
}

/// Configuration with command-line overrides applied. The output
/// directory is taken out so that it does not enter the config hash.
fn resolve(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_json(BUNDLED_CONFIG)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.k {
        cfg.k = k;
        cfg.gauge.k = k;
    }
    if let Some(r) = cli.refinements {
        cfg.gauge.refinements = r;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.take().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dtnlab-out"));
    cfg.check()?;
    Ok((cfg, out))
}

fn write_outcome(dir: &Path, cfg: &ExperimentConfig, outcome: &Outcome) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{}.csv", outcome.experiment)))?);
    writeln!(f, "# dtnlab {VERSION} config {} seed {}", cfg.hash(), cfg.seed)?;
    writeln!(f, "# resolved {}", cfg.canonical_json())?;
    f.write_all(outcome.csv.as_bytes())?;
    f.flush()
}

fn prepare_out(dir: &Path, cfg: &ExperimentConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let pretty = serde_json::to_string_pretty(cfg).expect("configuration serializes");
    std::fs::write(dir.join("config.resolved.json"), pretty + "\n")
}

/// Runs the command line `args` (program name first) and returns the exit
/// code: 0 when every check passes or warns, 1 on any failure, 2 on usage
/// or configuration errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = match threads_from_env() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    // A second build in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let (cfg, out) = match resolve(&cli) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    if let Err(err) = prepare_out(&out, &cfg) {
        eprintln!("error: cannot write to {}: {err}", out.display());
        return EXIT_USAGE;
    }
    let quiet = cli.quiet;
    let mut failed = false;
    for &name in cli.command.experiments() {
        match experiments::run(name, &cfg) {
            Ok(outcome) => {
                if let Err(err) = write_outcome(&out, &cfg, &outcome) {
                    eprintln!("error: cannot write {name}.csv: {err}");
                    return EXIT_FAIL;
                }
                for c in &outcome.checks {
                    let loud = c.verdict == Some(Verdict::Fail);
                    if !quiet || loud {
                        println!("{:<4}  {name}: {} ({})", c.label(), c.name, c.detail);
                    }
                }
                failed |= outcome.failed();
            }
            Err(RunError::Config(err)) => {
                eprintln!("error: {err}");
                return EXIT_USAGE;
            }
            Err(err) => {
                println!("FAIL  {name}: {err}");
                failed = true;
            }
        }
    }
    if failed {
        EXIT_FAIL
    } else {
        EXIT_OK
    }
}
