//! Command-line runner for the elephant random walk experiments.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;
pub mod plot;
pub mod validate;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, Experiment, ExperimentConfig, Overrides};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "erwlab", version, about = "Elephant random walk experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate walkers and record checkpointed counts.
    Simulate(RunArgs),
    /// Exhaustive path-law checks for short walks.
    Oracle(RunArgs),
    /// Martingale and good-event diagnostics over SRW windows.
    Contiguity(RunArgs),
    /// Second moments, window returns and the triadic scan.
    Recurrence(RunArgs),
    /// MSD exponents and count stability.
    Scaling(RunArgs),
    /// Heat kernel bound, Green function and L1 deficits.
    Kernels(RunArgs),
    /// Check a config file and print the effective parameters.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Only this experiment; defaults to every section in the file.
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
    },
    /// Write tidy plot data from a finished run.
    Plot {
        #[arg(long)]
        manifest: PathBuf,
        /// msd, return-scaling, triadic or ks.
        #[arg(long)]
        kind: String,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    /// Exit with status 3 if any check fails.
    #[arg(long)]
    pub check: bool,
}

impl RunArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            alpha: self.alpha,
            n: self.n,
        }
    }

    pub fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        ExperimentConfig::resolve(experiment, &file, &self.overrides())
    }
}

fn run_experiment<W: Write>(experiment: Experiment, args: &RunArgs, out: &mut W) -> Result<()> {
    let cfg = args.resolve(experiment)?;
    let manifest = manifest::run(&cfg)?;
    writeln!(
        out,
        "{experiment}: {} -> {}",
        manifest.config_hash,
        cfg.output_dir.display()
    )?;
    for c in &manifest.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "  {verdict} {}: {}", c.name, c.detail)?;
    }
    let failed = manifest.failed_checks();
    if args.check && !failed.is_empty() {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(())
}

fn validate_file<W: Write>(path: &Path, only: Option<Experiment>, out: &mut W) -> Result<()> {
    let file = ConfigFile::load(path)?;
    let experiments = match only {
        Some(e) => vec![e],
        None => file.sections(),
    };
    if experiments.is_empty() {
        return Err(CliError::Config(format!(
            "{} has no experiment sections",
            path.display()
        )));
    }
    for e in experiments {
        let cfg = ExperimentConfig::resolve(e, &file, &Overrides::default())?;
        writeln!(out, "[{e}]")?;
        write!(
            out,
            "{}",
            validate::render(&validate::parameter_table(&cfg)?)
        )?;
    }
    Ok(())
}

pub fn execute<W: Write>(cli: &Cli, out: &mut W) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => run_experiment(Experiment::Simulate, a, out),
        Command::Oracle(a) => run_experiment(Experiment::Oracle, a, out),
        Command::Contiguity(a) => run_experiment(Experiment::Contiguity, a, out),
        Command::Recurrence(a) => run_experiment(Experiment::Recurrence, a, out),
        Command::Scaling(a) => run_experiment(Experiment::Scaling, a, out),
        Command::Kernels(a) => run_experiment(Experiment::Kernels, a, out),
        Command::Validate { config, experiment } => validate_file(config, *experiment, out),
        Command::Plot { manifest, kind } => {
            let path = plot::emit_plot_data(manifest, kind.parse()?)?;
            writeln!(out, "{}", path.display())?;
            Ok(())
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("erwlab: {e}");
            e.exit_code()
        }
    }
}
