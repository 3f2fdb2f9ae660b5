// SPDX-License-Identifier: Apache-2.0

//! `ile`: synthetic data generation, iterative self-labelling runs, and
//! run reports.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use ile::datasets::TableFormat;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("[{module}] {source}", module = .source.module())]
    Core {
        #[from]
        source: ile::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core {
                source: ile::Error::Config(_),
            } => 1,
            CliError::Core { source } if source.is_data_error() => 2,
            CliError::Core { .. } => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ile",
    version,
    about = "Iterative self-labelling with learned admission thresholds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labelled dataset.
    Synth {
        /// blobs, moons, rings or digits_grid
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Blob center radius.
        #[arg(long, default_value_t = 4.0)]
        spread: f64,
        /// Blob feature dimension.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// csv or binary; defaults from the file extension.
        #[arg(long, value_parser = parse_format)]
        format: Option<TableFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the self-labelling loop described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scoring threads. Results do not depend on this.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Validate config and data, write nothing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Summarize a finished run and write plot data.
    Report {
        /// Run output directory.
        dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<TableFormat, String> {
    match s {
        "csv" => Ok(TableFormat::Csv),
        "binary" | "bin" => Ok(TableFormat::Binary),
        other => Err(format!("unknown format `{other}`")),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            kind,
            classes,
            per_class,
            noise,
            seed,
            spread,
            dim,
            format,
            out,
        } => commands::synth(&commands::SynthArgs {
            kind,
            classes,
            per_class,
            noise,
            seed,
            spread,
            dim,
            format,
            out,
        }),
        Command::Run {
            config,
            seed,
            out,
            workers,
            dry_run,
        } => commands::run(&commands::RunArgs {
            config,
            seed,
            out,
            workers,
            dry_run,
        }),
        Command::Report { dir, out } => {
            let dir = dir
                .or(out)
                .ok_or_else(|| CliError::Usage("report needs a run directory".into()))?;
            commands::report(&dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ILE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
