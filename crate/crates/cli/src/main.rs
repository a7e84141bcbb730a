//! `glp`: synthesize cohorts, pretrain the six progress models, run the
//! frozen-transfer study, and verify weight files.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use glp::config::{CertainChoice, RunConfig};
use glp::pipeline::Method;
use glp::InterpMethod;

use crate::commands::Run;
use crate::error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "glp", version, about = "Two-stage laboratory progress pretraining and frozen transfer")]
struct Cli {
    /// JSON run config; keys not listed below are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for training, 0 = all cores (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Gap-filling method: linear, pchip or barycentric.
    #[arg(long, global = true, value_parser = parse::<InterpMethod>)]
    interp: Option<InterpMethod>,
    /// Training method: ssl, supervised, hybrid or two-stage.
    #[arg(long, global = true, value_parser = parse::<Method>)]
    method: Option<Method>,
    /// Certainty mask 0..5, or "sweep" to cross-validate every value.
    #[arg(long, global = true, value_parser = parse::<CertainChoice>)]
    certain: Option<CertainChoice>,
    #[command(subcommand)]
    command: Command,
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the pretext and episodic cohort CSVs.
    Synth,
    /// Cross-validate, train the six final models and write their weights.
    Pretrain,
    /// Run the downstream study on the saved weights.
    Transfer,
    /// synth, pretrain and transfer in sequence.
    All,
    /// Check weight files (a file, a directory, or an output directory).
    Verify {
        #[arg(value_name = "PATH")]
        path: PathBuf,
    },
}

impl Cli {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) if !path.is_file() => return Err(glp::GlpError::MissingArtifact(path.clone()).into()),
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if let Some(jobs) = self.jobs {
            config.jobs = jobs;
        }
        if let Some(interp) = self.interp {
            config.train.interp = interp;
        }
        if let Some(method) = self.method {
            config.train.method = method;
        }
        if let Some(certain) = self.certain {
            config.certain = certain;
        }
        config.validate()?;
        Ok(config)
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    if let Command::Verify { path } = &cli.command {
        let entries = commands::verify(path)?;
        let failed = entries.iter().filter(|e| !e.ok).count();
        println!("{}", serde_json::to_string_pretty(&entries).map_err(glp::GlpError::from)?);
        return if failed == 0 { Ok(()) } else { Err(CliError::Verification(failed, entries.len())) };
    }
    let config = cli.resolve()?;
    glp::par::with_jobs(config.jobs, || {
        let mut run = Run::new(&config);
        let result = match cli.command {
            Command::Synth => run.synth(),
            Command::Pretrain => run.pretrain(),
            Command::Transfer => run.transfer(),
            Command::All => run.synth().and_then(|()| run.pretrain()).and_then(|()| run.transfer()),
            Command::Verify { .. } => unreachable!("handled above"),
        };
        result.and_then(|()| run.finish())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GLP_LOG", "info")).init();
    let defaults = serde_json::to_string_pretty(&RunConfig::default()).expect("default config serializes");
    let matches = Cli::command()
        .after_long_help(format!(
            "Default config (every key optional):\n{defaults}\n\nExit codes: {} config, {} missing artifact, {} data/schema, {} weight file, {} training, {} io.\nGLP_LOG sets the log level (default info).",
            exit::CONFIG,
            exit::MISSING_ARTIFACT,
            exit::DATA,
            exit::WEIGHT_FILE,
            exit::TRAINING,
            exit::IO
        ))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
