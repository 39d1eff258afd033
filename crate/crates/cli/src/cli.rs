//! Argument parsing and dispatch. Exit codes: 0 when every verdict passes,
//! 2 when an estimator verdict fails, 1 on errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use hqc_core::fields::FieldSpec;
use hqc_core::MapSpec;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::regress::{regenerate, regress};
use crate::render::{render, Format};
use crate::run::run;

#[derive(Debug, Parser)]
#[command(name = "hqc", version, about = "Heisenberg group numerics: distortion, BMO and metric experiments")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare frozen baseline values with fresh runs.
    Regress {
        #[arg(long, default_value = "baselines")]
        dir: PathBuf,
        /// Recompute and rewrite the frozen values instead of comparing.
        #[arg(long)]
        regenerate: bool,
    },
    /// Catalog maps and their parameters.
    ListMaps,
    /// Catalog scalar functions and their parameters.
    ListFunctions,
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| CliError::Io {
                path: "stdout".into(),
                message: e.to_string(),
            })
        }
    }
}

fn catalog(entries: &[(&str, &str)], format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => {
            let v: Vec<serde_json::Value> = entries
                .iter()
                .map(|(id, d)| serde_json::json!({ "id": id, "description": d }))
                .collect();
            let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Serialize(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Table => {
            let w = entries.iter().map(|e| e.0.len()).max().unwrap_or(0);
            Ok(entries.iter().map(|(id, d)| format!("{id:<w$}  {d}\n")).collect())
        }
    }
}

fn in_pool<T: Send>(threads: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(work()),
        Some(0) => Err(CliError::Threads("--threads must be positive".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Threads(e.to_string()))?;
            Ok(pool.install(work))
        }
    }
}

pub fn execute(args: &Args) -> Result<ExitCode, CliError> {
    let out = args.out.as_deref();
    match &args.command {
        Command::ListMaps => {
            emit(out, &catalog(MapSpec::catalog_ids(), args.format)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ListFunctions => {
            emit(out, &catalog(FieldSpec::catalog_ids(), args.format)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, seed } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            let start = Instant::now();
            let report = in_pool(args.threads, || run(&cfg))??;
            // Timing goes to stderr so the report stays reproducible.
            eprintln!("elapsed {:.3} s", start.elapsed().as_secs_f64());
            emit(out, &render(&report, args.format)?)?;
            Ok(if report.verdict.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Regress { dir, regenerate: regen } => {
            if *regen {
                let files = in_pool(args.threads, || regenerate(dir))??;
                let text: String = files.iter().map(|f| format!("regenerated {}\n", f.display())).collect();
                emit(out, &text)?;
                return Ok(ExitCode::SUCCESS);
            }
            let rep = in_pool(args.threads, || regress(dir))??;
            let text = match args.format {
                Format::Table => rep.to_text(),
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&rep).map_err(|e| CliError::Serialize(e.to_string()))?;
                    s.push('\n');
                    s
                }
            };
            emit(out, &text)?;
            Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}
