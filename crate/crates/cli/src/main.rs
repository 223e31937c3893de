//! `ergoaog` command-line tool.
//!
//! Exit status: 0 success, 1 invalid input, 2 usage error, 3 I/O error.

mod config;

use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use ergoaog::bench::{emit_table, run_scaling, run_shrinking, BenchOptions, TableFormat};
use ergoaog::calibration::{calibrate_all, Estimator, TrialRecord};
use ergoaog::graph::{generate_linear_assembly, validate, Aog, ProgressState};
use ergoaog::joint::{Joint, JointMap};
use ergoaog::planner::{optimal_plan, PlanDocument};
use ergoaog::scenario::Scenario;
use ergoaog::session::{Session, SessionConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{parse_wear, ConfigArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invalid(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Invalid(m) | CliError::Io(m) => m,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when absent.
fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("outputs always serialize") + "\n"
}

fn load_graph(path: &Path) -> Result<Aog, CliError> {
    Aog::from_json(&read_text(path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// `a..b`, `a..=b`, `a-b` or a single number; both ends inclusive.
fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    let pair = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'));
    match pair {
        Some((a, b)) => Ok(num(a)?..=num(b)?),
        None => {
            let n = num(s)?;
            Ok(n..=n)
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ergoaog",
    version,
    about = "Ergonomic human-robot role allocation over AND/OR graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Mean,
    Median,
    Trimmed,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Write the linear-assembly graph with the given size.
    Generate {
        #[arg(long)]
        pieces: usize,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Check a graph file; exits 1 on any violation.
    Validate { graph: PathBuf },
    /// Fit action models from trial records (JSON lines).
    Calibrate {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, value_enum, default_value = "mean")]
        estimator: EstimatorArg,
        /// Fraction dropped from each end by the trimmed estimator.
        #[arg(long, default_value_t = 0.1)]
        trim: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Offline allocation: one plan from the initial wear, or from the
    /// graph's own costs when no calibration is given.
    Plan {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// `shoulder,elbow,wrist,trunk,neck`.
        #[arg(long, value_parser = parse_wear)]
        initial_wear: Option<JointMap<f64>>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Drive a session from a scenario or re-execute an event log.
    Replay {
        #[arg(long, conflicts_with = "log", required_unless_present = "log")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write the session's event log here.
        #[arg(long)]
        export_log: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Time the planner on linear assemblies.
    Bench {
        #[arg(long, default_value = "2..15", value_parser = parse_range)]
        pieces: RangeInclusive<usize>,
        #[arg(long, default_value = "2", value_parser = parse_range)]
        workers: RangeInclusive<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Time replanning along one execution instead; uses the largest
        /// piece and worker counts given.
        #[arg(long)]
        shrinking: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Serve the session protocol over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: std::net::SocketAddr,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate {
            pieces,
            workers,
            out,
        } => {
            let graph = generate_linear_assembly(pieces, workers)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            write_output(out.as_deref(), &(graph.to_json() + "\n"))
        }
        Command::Validate { graph } => {
            let g = load_graph(&graph)?;
            let report = validate(&g);
            if report.is_valid() {
                println!(
                    "{}: valid ({} nodes, {} hyper-arcs)",
                    graph.display(),
                    g.nodes().len(),
                    g.arcs().len()
                );
                Ok(())
            } else {
                Err(CliError::Invalid(format!("{}:\n{report}", graph.display())))
            }
        }
        Command::Calibrate {
            trials,
            estimator,
            trim,
            out,
            config,
        } => {
            let config = config.resolve(SessionConfig::default())?;
            let text = read_text(&trials)?;
            let mut records = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() || line.trim_start().starts_with('#') {
                    continue;
                }
                let record: TrialRecord = serde_json::from_str(line).map_err(|e| {
                    CliError::Invalid(format!("{}: record {}: {e}", trials.display(), i + 1))
                })?;
                records.push(record);
            }
            let estimator = match estimator {
                EstimatorArg::Mean => Estimator::Mean,
                EstimatorArg::Median => Estimator::Median,
                EstimatorArg::Trimmed => Estimator::TrimmedMean { fraction: trim },
            };
            let capacity = config
                .cost
                .capacity()
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            let file = calibrate_all(&records, capacity, estimator)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", trials.display())))?;
            write_output(out.as_deref(), &pretty(&file))
        }
        Command::Plan {
            graph,
            calibration,
            initial_wear,
            out,
            config,
        } => {
            let g = load_graph(&graph)?;
            let plan = match calibration {
                Some(path) => {
                    let calibration: ergoaog::calibration::CalibrationFile = read_json(&path)?;
                    let models = calibration
                        .models()
                        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
                    let config = config.resolve(SessionConfig::default())?;
                    let wear = initial_wear.unwrap_or(JointMap::splat(0.0));
                    let session = Session::start(Arc::new(g), models, config, wear)
                        .map_err(|e| CliError::Invalid(e.to_string()))?;
                    session
                        .offline_allocation()
                        .map_err(|e| CliError::Invalid(e.to_string()))?
                }
                None => {
                    let plan = optimal_plan(&g, &ProgressState::initial(&g))
                        .map_err(|e| CliError::Invalid(format!("{}: {e}", graph.display())))?;
                    plan.to_document(&g)
                }
            };
            write_output(out.as_deref(), &pretty(&plan))
        }
        Command::Replay {
            scenario,
            log,
            export_log,
            config,
        } => {
            let session = match (scenario, log) {
                (Some(path), _) => {
                    let mut scenario = Scenario::from_json(&read_text(&path)?)
                        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
                    scenario.config = config.resolve(scenario.config)?;
                    let report = scenario
                        .run()
                        .map_err(|e| CliError::Invalid(e.to_string()))?;
                    print_online(&report);
                    print_offline(&report.offline);
                    println!("online:  {}", report.online_letters());
                    println!("offline: {}", report.offline_letters());
                    report.session
                }
                (None, Some(path)) => {
                    let session = Session::replay(&read_text(&path)?)
                        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
                    for h in session.view().history {
                        println!("{:>8.2}  {:<8} {}", h.t, h.action, h.worker);
                    }
                    session
                }
                (None, None) => {
                    return Err(CliError::Usage("replay needs --scenario or --log".into()))
                }
            };
            println!("digest:  {}", session.digest());
            if let Some(path) = export_log {
                write_output(Some(&path), &session.export_log())?;
            }
            Ok(())
        }
        Command::Bench {
            pieces,
            workers,
            reps,
            seed,
            format,
            shrinking,
            out,
        } => {
            let options = BenchOptions {
                repetitions: reps,
                seed,
                ..BenchOptions::default()
            };
            let format = match format {
                FormatArg::Csv => TableFormat::Csv,
                FormatArg::Jsonl => TableFormat::JsonLines,
            };
            let usage = |e: ergoaog::bench::BenchError| CliError::Usage(e.to_string());
            let mut buffer = Vec::new();
            if shrinking {
                let rows = run_shrinking(*pieces.end(), *workers.end(), &options).map_err(usage)?;
                emit_table(&rows, format, seed, &mut buffer).map_err(usage)?;
            } else {
                let rows = run_scaling(pieces, workers, &options).map_err(usage)?;
                emit_table(&rows, format, seed, &mut buffer).map_err(usage)?;
            }
            write_output(
                out.as_deref(),
                &String::from_utf8(buffer).expect("tables are UTF-8"),
            )
        }
        Command::Serve { bind } => {
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            eprintln!("listening on http://{bind}");
            runtime
                .block_on(ergoaog_service::serve(bind))
                .map_err(|e| CliError::Io(format!("{bind}: {e}")))
        }
    }
}

fn print_online(report: &ergoaog::scenario::ReplayReport) {
    println!("step  action  worker  c_H     c_R     wear after (shoulder elbow wrist trunk neck)");
    for (i, row) in report.online.iter().enumerate() {
        let wear: Vec<String> = Joint::ALL
            .iter()
            .map(|j| format!("{:.4}", row.wear_after[*j]))
            .collect();
        println!(
            "{:<5} {:<7} {:<7} {:<7} {:<7} {}",
            i + 1,
            row.action,
            row.worker,
            row.human_cost,
            row.robot_cost,
            wear.join(" ")
        );
    }
}

fn print_offline(plan: &PlanDocument) {
    let steps: Vec<String> = plan
        .steps
        .iter()
        .map(|s| format!("{}:{}", s.action, s.worker))
        .collect();
    println!(
        "offline plan (total {}): {}",
        plan.total_cost,
        steps.join(" ")
    );
}
