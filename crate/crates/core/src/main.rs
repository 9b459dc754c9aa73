use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pielm::error::{Error, Result};
use pielm::runner::{self, Case, RunConfig};

#[derive(Parser)]
#[command(name = "pielm", version, about = "Meshfree curriculum-learning PIELM solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CaseArgs {
    /// poisson_disk, burgers_standing, burgers_traveling, cavity or stenosis
    #[arg(long)]
    case: Case,
    /// TOML configuration; built-in defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key.path=value` overrides, applied after the file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case and write its artifacts
    Run {
        #[command(flatten)]
        args: CaseArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute the oracle data a case compares against
    Oracle {
        #[command(flatten)]
        args: CaseArgs,
        /// Cache directory; overrides `oracle_cache`
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Re-render the metrics of a finished run from its artifacts
    Report { dir: PathBuf },
}

fn resolve(args: &CaseArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::new(args.case, 0),
    };
    if args.config.is_none() {
        cfg.seed = None;
    }
    if cfg.case != args.case {
        return Err(Error::Config(format!("--case {} does not match `case = \"{}\"` in the config file", args.case, cfg.case)));
    }
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    let cfg = cfg.with_overrides(&args.set)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { args, out } => {
            let cfg = resolve(&args)?;
            let metrics = runner::run_case(&cfg, &out)?;
            print!("{}", metrics.render());
            println!("artifacts in {}", out.display());
        }
        Command::Oracle { args, cache, out } => {
            let mut cfg = resolve(&args)?;
            if cache.is_some() {
                cfg.oracle_cache = cache;
            }
            println!("{}", runner::precompute_oracles(&cfg, &out)?);
        }
        Command::Report { dir } => print!("{}", runner::report(&dir)?),
    }
    Ok(())
}

/// OpenBLAS picks its kernels from the detected CPU, and some of those
/// return wrong LAPACK results. Re-launch with a known-good core unless the
/// caller chose one.
#[cfg(all(unix, target_arch = "x86_64"))]
fn pin_blas_core() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return;
    }
    if let Ok(exe) = std::env::current_exe() {
        let err = std::process::Command::new(exe)
            .args(std::env::args_os().skip(1))
            .env("OPENBLAS_CORETYPE", "Haswell")
            .exec();
        eprintln!("warning: could not re-launch with a pinned BLAS core: {err}");
    }
}

#[cfg(not(all(unix, target_arch = "x86_64")))]
fn pin_blas_core() {}

fn main() -> ExitCode {
    pin_blas_core();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { runner::EXIT_CONFIG } else { runner::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::from(runner::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}
