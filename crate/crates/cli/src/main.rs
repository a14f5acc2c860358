//! `bsentinel` command-line tool.
//!
//! Exit codes: 0 on success, 1 on a runtime error, 2 on a configuration or
//! usage error. Set `BSENTINEL_LOG` (for example `debug`) for diagnostics on
//! standard error.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bsentinel::config::ScenarioConfig;
use bsentinel::digest::avalanche_study;
use bsentinel::events::EventLog;
use bsentinel::exec::ExecMode;
use bsentinel::metrics::{emit, replication_table, MetricsReport, ReportContext, ReportFormat};
use bsentinel::simnet::Simulation;
use bsentinel::trace::{load_trace, replay, write_trace, ReplayConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bsentinel", version, about = "Byzantine fault detection simulator and trace analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Report format.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario; writes eventlog.ndjson and a report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Crash-only baseline: ignore digests and delays, detect timeouts only.
        #[arg(long)]
        no_checksum: bool,
        /// Also write the run as trace.csv.
        #[arg(long)]
        export_trace: bool,
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Replay a trace CSV through the detector; writes eventlog.ndjson and a report.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Supervisor and replay settings; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        no_checksum: bool,
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Hex-divergence study of single-bit flips.
    Avalanche {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Replicas needed to tolerate k faults.
    Replicas {
        #[arg(short, allow_negative_numbers = true)]
        k: i64,
    },
    /// Rebuild a report from a saved event log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// The config the log was produced with.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

enum Failure {
    /// Configuration or usage problem.
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))
}

fn mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    }
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_outputs(output: &Output, log: &EventLog, report: &MetricsReport) -> Result<(), Failure> {
    let log_path = output.out.join("eventlog.ndjson");
    let file = fs::File::create(&log_path).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", log_path.display())))?;
    log.write_ndjson(io::BufWriter::new(file)).map_err(Failure::runtime)?;
    let report_path = output.out.join(format!("report.{}", output.format.extension()));
    emit(report, output.format, &report_path).map_err(Failure::runtime)?;
    log::info!("wrote {} and {}", log_path.display(), report_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, seed, no_checksum, export_trace, sequential, output } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
            }
            if no_checksum {
                cfg.supervisor.checksum = false;
            }
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let mut sim = Simulation::new(cfg, mode(sequential)).map_err(Failure::runtime)?;
            sim.run_to_horizon();
            let run = sim.finish();
            prepare_out(&output.out)?;
            write_outputs(&output, &run.log, &run.report)?;
            if export_trace {
                let path = output.out.join("trace.csv");
                let file = fs::File::create(&path).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
                write_trace(io::BufWriter::new(file), &run.export_trace()).map_err(Failure::runtime)?;
            }
            let r = &run.report;
            println!(
                "{} challenges, {} shutdowns, challenge reduction {:.1}%",
                r.challenges,
                r.shutdowns.values().sum::<u64>(),
                100.0 * r.overhead.reduction
            );
            Ok(())
        }
        Command::Replay { trace, config, no_checksum, sequential, output } => {
            let mut cfg = match config {
                Some(path) => ReplayConfig::from_scenario(&load_config(&path)?).map_err(|e| Failure::Usage(e.to_string()))?,
                None => ReplayConfig::default(),
            };
            if no_checksum {
                cfg.policy.checksum = false;
            }
            let loaded = load_trace(&trace).map_err(Failure::runtime)?;
            let out = replay(&loaded, &cfg, mode(sequential)).map_err(Failure::runtime)?;
            prepare_out(&output.out)?;
            write_outputs(&output, &out.log, &out.report)?;
            let d = &out.report.delay.overall;
            println!(
                "{} records, {} classified, high/extreme incidence {:.2}%, {} nodes excluded",
                loaded.records.len(),
                d.classified,
                100.0 * d.incidence,
                out.excluded.len()
            );
            Ok(())
        }
        Command::Avalanche { trials, seed, json } => {
            if trials == 0 {
                return Err(Failure::Usage("--trials must be at least 1".into()));
            }
            let s = avalanche_study(trials as usize, seed, None, ExecMode::Parallel).map_err(Failure::runtime)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&serde_json::to_value(&s).map_err(Failure::runtime)?).map_err(Failure::runtime)?);
            } else {
                println!("trials {}  seed {}", s.trials, s.seed);
                println!("mean   {:.4}", s.mean);
                println!("min    {:.4}", s.min);
                println!("max    {:.4}", s.max);
            }
            Ok(())
        }
        Command::Replicas { k } => {
            let k = u64::try_from(k).map_err(|_| Failure::Usage(format!("k must be non-negative, got {k}")))?;
            let row = replication_table(k).pop().expect("table has k + 1 rows");
            let mut out = io::stdout().lock();
            writeln!(out, "k = {k}").and_then(|_| {
                writeln!(out, "crash                   {}", row.crash)?;
                writeln!(out, "byzantine (classic)     {}", row.byzantine_classic)?;
                writeln!(out, "byzantine with checksum {}", row.byzantine_with_checksum)
            })
            .map_err(Failure::runtime)
        }
        Command::Report { log, config, output } => {
            let cfg = load_config(&config)?;
            let file = fs::File::open(&log).map_err(|e| Failure::Runtime(format!("cannot open {}: {e}", log.display())))?;
            let events = EventLog::read_ndjson(BufReader::new(file)).map_err(Failure::runtime)?;
            let ctx = ReportContext {
                source: "simulate".into(),
                initial_nodes: cfg.scenario.nodes,
                horizon: Some(cfg.scenario.horizon),
                interval: cfg.supervisor.interval,
                expected: Some(cfg.message().map_err(|e| Failure::Usage(e.to_string()))?.digest()),
                max_k: cfg.report.max_k,
            };
            let report = MetricsReport::from_log(&events, &ctx);
            prepare_out(&output.out)?;
            let path = output.out.join(format!("report.{}", output.format.extension()));
            emit(&report, output.format, &path).map_err(Failure::runtime)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BSENTINEL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version also land here, with a success exit code.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
