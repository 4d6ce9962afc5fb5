use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gapcraft::analysis::{erlang_b, estimator_bias};
use gapcraft::scenario::{evaluate, ScenarioFile};
use gapcraft::sim::{
    export_rate_series_csv, export_report, export_trace_csv, run_batch, run_once, BatchReport,
};
use gapcraft::traffic::{generate_stream, stream_to_file, StreamSpec};
use gapcraft::Error;

#[derive(Parser)]
#[command(
    name = "gapcraft",
    version,
    about = "Queue-free admission control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Report JSON path; stdout when neither this nor the file names one.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the report, trace and rate series.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Trace CSV of replication 0.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Windowed rate CSV of replication 0.
        #[arg(long)]
        rates: Option<PathBuf>,
    },
    /// Evaluate the scenario's requirements block.
    Check {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Erlang-B blocking probability for W servers at offered load a.
    Erlang { servers: u32, load: f64 },
    /// Estimator bias for timer T at Poisson rate alpha.
    Bias { timer: f64, alpha: f64 },
    /// Generate an offer stream CSV from a stream spec JSON.
    GenStream {
        spec: PathBuf,
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Validation(Error),
    Runtime(Error),
}

fn validation(e: Error) -> Failure {
    Failure::Validation(e)
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::Io { .. } | Error::Json(_) | Error::Scenario(_) => Failure::Validation(e),
        other => Failure::Runtime(other),
    }
}

/// Formats to 12 significant digits without trailing zeros.
fn significant(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn load(path: &PathBuf, overrides: &Overrides) -> Result<ScenarioFile, Failure> {
    let mut file = ScenarioFile::load(path).map_err(validation)?;
    if let Some(seed) = overrides.seed {
        file.stream.seed = seed;
    }
    if let Some(n) = overrides.replications {
        file.replications = n;
    }
    if overrides.report.is_some() {
        file.outputs.report = overrides.report.clone();
    }
    file.to_scenario()
        .and_then(|s| s.validate())
        .map_err(validation)?;
    Ok(file)
}

fn emit_report(report: &BatchReport, path: &Option<PathBuf>) -> Result<(), Failure> {
    match path {
        Some(p) => export_report(report, p).map_err(runtime),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(report).map_err(|e| runtime(e.into()))?
            );
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Simulate {
            scenario,
            overrides,
            trace,
            rates,
        } => {
            let mut file = load(&scenario, &overrides)?;
            if trace.is_some() {
                file.outputs.trace = trace;
            }
            if rates.is_some() {
                file.outputs.rates = rates;
            }
            let mut sc = file.to_scenario().map_err(validation)?;
            let report = run_batch(&sc).map_err(runtime)?;
            if file.outputs.trace.is_some() || file.outputs.rates.is_some() {
                sc.trace = file.outputs.trace.is_some();
                let first = run_once(&sc, 0).map_err(runtime)?;
                if let Some(p) = &file.outputs.trace {
                    export_trace_csv(&first, p).map_err(runtime)?;
                }
                if let Some(p) = &file.outputs.rates {
                    export_rate_series_csv(&first, p).map_err(runtime)?;
                }
            }
            emit_report(&report, &file.outputs.report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            scenario,
            overrides,
        } => {
            let file = load(&scenario, &overrides)?;
            let reqs = match &file.requirements {
                Some(r) if !r.is_empty() => r.clone(),
                _ => {
                    return Err(validation(Error::Scenario(
                        "scenario has no requirements block".into(),
                    )))
                }
            };
            let report =
                evaluate(&file.to_scenario().map_err(validation)?, &reqs).map_err(runtime)?;
            for v in &report.requirements {
                eprintln!(
                    "{:?} {}{}: {}",
                    v.requirement,
                    v.strategy.as_deref().unwrap_or("-"),
                    if v.empirical { " (empirical)" } else { "" },
                    if v.pass { "pass" } else { "FAIL" }
                );
            }
            emit_report(&report, &file.outputs.report)?;
            Ok(if report.requirements.iter().all(|v| v.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Erlang { servers, load } => {
            println!(
                "{}",
                significant(erlang_b(servers, load).map_err(validation)?)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bias { timer, alpha } => {
            println!(
                "{}",
                significant(estimator_bias(timer, alpha).map_err(validation)?)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::GenStream { spec, output, seed } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| {
                validation(Error::Io {
                    path: spec.clone(),
                    source: e,
                })
            })?;
            let mut spec: StreamSpec =
                serde_json::from_str(&text).map_err(|e| validation(e.into()))?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            spec.validate().map_err(validation)?;
            let offers = generate_stream(&spec).map_err(runtime)?;
            stream_to_file(&offers, &output).map_err(runtime)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
