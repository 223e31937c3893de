//! Planner timing on the linear-assembly family.
//!
//! [`run_scaling`] times a full search for each `(pieces, workers)` size with
//! fresh random integer costs per repetition. [`run_shrinking`] follows one
//! plan to the end and times each replan as the reduced graph shrinks.
//! Short searches are repeated in a batch until the batch lasts long enough
//! to time reliably; the reported figure is the per-search mean of a batch.

use std::io::Write;
use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::graph::{
    generate_linear_assembly, linear_arc_count, linear_node_count, Aog, GraphError, ProgressState,
};
use crate::planner::{next_action, replan, PlanError};

pub const PIECE_LIMITS: RangeInclusive<usize> = 1..=20;
pub const WORKER_LIMITS: RangeInclusive<usize> = 1..=40;
pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{what} range {lo}..={hi} leaves the supported {min}..={max}")]
    OutOfRange {
        what: &'static str,
        lo: usize,
        hi: usize,
        min: usize,
        max: usize,
    },
    #[error("at least {MIN_REPETITIONS} repetitions are needed, got {0}")]
    TooFewRepetitions(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("cannot write table: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write table: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub repetitions: usize,
    pub seed: u64,
    /// A timed batch is grown until it lasts at least this long.
    pub min_batch: Duration,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            repetitions: 5,
            seed: 0,
            min_batch: Duration::from_millis(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub pieces: usize,
    pub workers: usize,
    pub nodes: usize,
    pub arcs: usize,
    pub t_median_us: f64,
    pub t_p10_us: f64,
    pub t_p90_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkingRow {
    pub step: usize,
    /// Nodes of the reduced graph searched at this step.
    pub nodes: usize,
    pub t_median_us: f64,
    pub t_p10_us: f64,
    pub t_p90_us: f64,
}

fn check_range(
    what: &'static str,
    range: &RangeInclusive<usize>,
    limits: &RangeInclusive<usize>,
) -> Result<(), BenchError> {
    if range.is_empty() || !limits.contains(range.start()) || !limits.contains(range.end()) {
        return Err(BenchError::OutOfRange {
            what,
            lo: *range.start(),
            hi: *range.end(),
            min: *limits.start(),
            max: *limits.end(),
        });
    }
    Ok(())
}

fn check_options(options: &BenchOptions) -> Result<(), BenchError> {
    if options.repetitions < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions(options.repetitions));
    }
    Ok(())
}

/// Uniform integer costs in `[1, 100]`.
pub fn random_costs(rng: &mut StdRng, n: usize) -> Vec<Option<f64>> {
    (0..n)
        .map(|_| Some(rng.gen_range(1..=100) as f64))
        .collect()
}

/// Mean microseconds per call of `f`, batching calls until the batch lasts
/// `min_batch`.
fn time_per_call<T>(min_batch: Duration, mut f: impl FnMut() -> T) -> f64 {
    let mut iterations: u32 = 1;
    loop {
        let start = Instant::now();
        for _ in 0..iterations {
            std::hint::black_box(f());
        }
        let elapsed = start.elapsed();
        if elapsed >= min_batch || iterations >= 1 << 24 {
            return elapsed.as_secs_f64() * 1e6 / f64::from(iterations);
        }
        iterations = iterations.saturating_mul(2);
    }
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(mut times: Vec<f64>) -> (f64, f64, f64) {
    times.sort_by(f64::total_cmp);
    (
        percentile(&times, 0.5),
        percentile(&times, 0.1),
        percentile(&times, 0.9),
    )
}

/// One row per `(pieces, workers)`, pieces varying slowest.
pub fn run_scaling(
    pieces: RangeInclusive<usize>,
    workers: RangeInclusive<usize>,
    options: &BenchOptions,
) -> Result<Vec<ScalingRow>, BenchError> {
    check_range("pieces", &pieces, &PIECE_LIMITS)?;
    check_range("workers", &workers, &WORKER_LIMITS)?;
    check_options(options)?;
    let mut rng = StdRng::seed_from_u64(options.seed);
    let mut rows = Vec::new();
    for n in pieces {
        for w in workers.clone() {
            let graph = generate_linear_assembly(n, w)?;
            let state = ProgressState::initial(&graph);
            let mut times = Vec::with_capacity(options.repetitions);
            for _ in 0..options.repetitions {
                let costs = random_costs(&mut rng, graph.arcs().len());
                replan(&graph, &state, &costs)?;
                times.push(time_per_call(options.min_batch, || {
                    replan(&graph, &state, &costs)
                }));
            }
            let (t_median_us, t_p10_us, t_p90_us) = summarize(times);
            rows.push(ScalingRow {
                pieces: n,
                workers: w,
                nodes: graph.nodes().len(),
                arcs: graph.arcs().len(),
                t_median_us,
                t_p10_us,
                t_p90_us,
            });
        }
    }
    Ok(rows)
}

/// Times each replan while executing one optimal plan to completion.
/// Row `k` is the search made before the `k`-th merge.
pub fn run_shrinking(
    pieces: usize,
    workers: usize,
    options: &BenchOptions,
) -> Result<Vec<ShrinkingRow>, BenchError> {
    check_range("pieces", &(pieces..=pieces), &PIECE_LIMITS)?;
    check_range("workers", &(workers..=workers), &WORKER_LIMITS)?;
    check_options(options)?;
    let graph = generate_linear_assembly(pieces, workers)?;
    let mut rng = StdRng::seed_from_u64(options.seed);
    let mut per_step: Vec<Vec<f64>> = Vec::new();
    let mut nodes: Vec<usize> = Vec::new();
    for _ in 0..options.repetitions {
        let costs = random_costs(&mut rng, graph.arcs().len());
        let mut state = ProgressState::initial(&graph);
        let mut step = 0;
        while !state.is_complete(&graph) {
            let plan = replan(&graph, &state, &costs)?;
            let t = time_per_call(options.min_batch, || replan(&graph, &state, &costs));
            if per_step.len() <= step {
                per_step.push(Vec::new());
                nodes.push(crate::planner::reduced_nodes(&graph, &state).len());
            }
            per_step[step].push(t);
            let next = next_action(&graph, &plan, &state)?;
            state = state
                .apply_arc(&graph, next.arc, 0.0)
                .expect("planned arcs are enabled");
            step += 1;
        }
    }
    Ok(per_step
        .into_iter()
        .zip(nodes)
        .enumerate()
        .map(|(i, (times, nodes))| {
            let (t_median_us, t_p10_us, t_p90_us) = summarize(times);
            ShrinkingRow {
                step: i + 1,
                nodes,
                t_median_us,
                t_p10_us,
                t_p90_us,
            }
        })
        .collect())
}

/// Checks a scaling table's structural columns against the closed forms.
pub fn structural_mismatches(rows: &[ScalingRow]) -> Vec<&ScalingRow> {
    rows.iter()
        .filter(|r| {
            r.nodes != linear_node_count(r.pieces)
                || r.arcs != linear_arc_count(r.pieces, r.workers)
        })
        .collect()
}

/// Fraction of adjacent pairs whose second value is at least the first.
pub fn ordered_fraction(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let ordered = values.windows(2).filter(|w| w[1] >= w[0]).count();
    ordered as f64 / (values.len() - 1) as f64
}

/// Least-squares fit `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (my - slope * mx, slope, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Csv,
    JsonLines,
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "jsonl" | "json-lines" => Ok(TableFormat::JsonLines),
            other => Err(format!(
                "unknown table format `{other}`, expected csv or jsonl"
            )),
        }
    }
}

/// Writes `rows` with the seed recorded up front: a `# seed=N` comment for
/// CSV, a `{"seed": N}` header record for JSON lines.
pub fn emit_table<T: Serialize>(
    rows: &[T],
    format: TableFormat,
    seed: u64,
    mut out: impl Write,
) -> Result<(), BenchError> {
    match format {
        TableFormat::Csv => {
            writeln!(out, "# seed={seed}")?;
            let mut writer = csv::Writer::from_writer(&mut out);
            for row in rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
        }
        TableFormat::JsonLines => {
            writeln!(out, "{}", serde_json::json!({ "seed": seed }))?;
            for row in rows {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(row).expect("rows always serialize")
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Graph used for a scaling row, exposed for callers that want to inspect it.
pub fn scaling_graph(pieces: usize, workers: usize) -> Result<Aog, BenchError> {
    check_range("pieces", &(pieces..=pieces), &PIECE_LIMITS)?;
    check_range("workers", &(workers..=workers), &WORKER_LIMITS)?;
    Ok(generate_linear_assembly(pieces, workers)?)
}
