use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use vsnsim::harness::{
    emit_results, load_scenario, run_experiment, run_experiment_parallel,
    run_experiment_with_events, Format, MetricRecord, MetricRecordKey,
};
use vsnsim::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Sensor network virtualization and consensus estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replication of a scenario and write the records.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        /// Overrides the scenario's seed base.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Log every gossip contact to stderr as JSON lines (runs sequentially).
        #[arg(long)]
        verbose_events: bool,
    },
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Io(_) | Error::Csv(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

/// Names the file an I/O error is about.
fn at(path: &std::path::Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario).map_err(at(&scenario))?;
            println!(
                "{}: valid, {} grid points x {} replications",
                s.id,
                s.grid().len(),
                s.replications
            );
        }
        Command::Run {
            scenario,
            out,
            format,
            seed,
            parallel,
            verbose_events,
        } => {
            let mut s = load_scenario(&scenario).map_err(at(&scenario))?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let records: Vec<MetricRecord> = if verbose_events {
                let stderr = std::io::stderr();
                let mut log = stderr.lock();
                let mut sink = |key: &MetricRecordKey, phase, e: &vsnsim::gossip::GossipEvent| {
                    let line = json!({ "run": key, "phase": phase, "event": e });
                    let _ = writeln!(log, "{line}");
                };
                run_experiment_with_events(&s, &mut sink)?
            } else if parallel > 1 {
                run_experiment_parallel(&s, parallel)?
            } else {
                run_experiment(&s)?
            };
            let format = match format {
                OutputFormat::Csv => Format::Csv,
                OutputFormat::Json => Format::Json,
            };
            emit_results(&records, format, &out).map_err(at(&out))?;
            let accepted = records.iter().filter(|r| r.accepted).count();
            let failed: Vec<&MetricRecord> = records.iter().filter(|r| r.error.is_some()).collect();
            for r in &failed {
                eprintln!(
                    "replication {} (P={}, {}) failed: {}",
                    r.replication,
                    r.sensors,
                    r.topology,
                    r.error.as_deref().unwrap_or_default()
                );
            }
            eprintln!(
                "{} records, {} accepted, {} failed -> {}",
                records.len(),
                accepted,
                failed.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
