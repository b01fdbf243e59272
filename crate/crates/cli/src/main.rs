mod config;
mod run;

use std::io::Write;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use cascade_lab::{Error, Phase, Runner};
use clap::Parser;
use serde_json::json;

use crate::config::{Cli, Format, RunConfig};

const EXIT_VIOLATION: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn write_output(cfg: &RunConfig, body: &str, threads: usize) -> cascade_lab::Result<()> {
    let Some(path) = &cfg.output else {
        std::io::stdout().write_all(body.as_bytes())?;
        return Ok(());
    };
    std::fs::write(path, body)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "timestamp_unix": stamp,
        "host": std::env::var("HOSTNAME").unwrap_or_else(|_| "unknown".into()),
        "threads": threads,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut meta_path = path.as_os_str().to_owned();
    meta_path.push(".meta.json");
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

fn execute(cfg: &RunConfig) -> cascade_lab::Result<bool> {
    let runner = match cfg.threads {
        Some(n) => Runner::with_threads(n)?,
        None => Runner::default(),
    };
    if cfg.experiment.expects_boundary() && cfg.params.phase() != Phase::BoundaryI_II {
        eprintln!(
            "warning: {} is stated for gamma + beta = 1 with 1/2 < gamma < 1; running at ({}, {}) anyway",
            cfg.experiment.name(),
            cfg.gamma,
            cfg.beta
        );
    }
    if let Some(path) = &cfg.export_process {
        run::export_process(cfg, path)?;
    }
    let outcome = run::run(cfg, &runner)?;
    let body = match cfg.format {
        Format::Json => outcome.report.to_json()?,
        Format::Csv => outcome.report.to_csv(),
    };
    write_output(cfg, &body, runner.threads())?;
    Ok(outcome.violation)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    match execute(&cfg) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: an exact identity was violated");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) => {
            match &e {
                Error::Capacity { .. } => eprintln!("error: {e}; use --mode stream for deep trees"),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(EXIT_ERROR)
        }
    }
}
