//! Benchmark harness: run extractor configurations over a corpus and report
//! normalized optimality gaps.
//!
//! The gap of a final cost F against the heuristic cost H and the best-known
//! solution cost BKS is `alpha = (F - BKS) / (H - BKS)`: zero means the
//! best-known cost was reached, one means no improvement over the
//! heuristic, and values above one are worse than the heuristic.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;

use crate::cost::Cost;
use crate::egraph::EGraph;
use crate::exact::{solve_exact, SolveOptions};
use crate::greedy::{extract_greedy, CostKind};
use crate::parallel::{default_batch_size, extract_parallel};
use crate::prune::{prune, Theta};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MethodSpec {
    Greedy,
    Parallel {
        workers: usize,
        batch_size: Option<usize>,
    },
    Exact,
    Hybrid {
        theta: Theta,
    },
}

impl MethodSpec {
    /// Parse one entry of a methods list: `greedy`, `parallel[:W[:B]]`,
    /// `exact`, or `hybrid[:THETA]`.
    pub fn parse(s: &str) -> Result<MethodSpec, String> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        match (head, rest.as_slice()) {
            ("greedy", []) => Ok(MethodSpec::Greedy),
            ("parallel", []) => Ok(MethodSpec::Parallel {
                workers: default_workers(),
                batch_size: None,
            }),
            ("parallel", [w]) => Ok(MethodSpec::Parallel {
                workers: parse_positive(w)?,
                batch_size: None,
            }),
            ("parallel", [w, b]) => Ok(MethodSpec::Parallel {
                workers: parse_positive(w)?,
                batch_size: Some(parse_positive(b)?),
            }),
            ("exact", []) => Ok(MethodSpec::Exact),
            ("hybrid", []) => Ok(MethodSpec::Hybrid {
                theta: Theta::new(5, 4).expect("5/4 is a valid threshold"),
            }),
            ("hybrid", [t]) => Ok(MethodSpec::Hybrid {
                theta: t.parse().map_err(|e| format!("{e}"))?,
            }),
            _ => Err(format!("cannot parse method spec `{s}`")),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<MethodSpec>, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(MethodSpec::parse)
            .collect()
    }

    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::Greedy => "greedy",
            MethodSpec::Parallel { .. } => "parallel",
            MethodSpec::Exact => "exact",
            MethodSpec::Hybrid { .. } => "hybrid",
        }
    }

    fn theta(&self) -> Option<Theta> {
        match self {
            MethodSpec::Hybrid { theta } => Some(*theta),
            _ => None,
        }
    }

    fn workers(&self) -> Option<usize> {
        match self {
            MethodSpec::Greedy => Some(1),
            MethodSpec::Parallel { workers, .. } => Some(*workers),
            _ => None,
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

/// Best-known solution costs, keyed by benchmark name.
#[derive(Clone, Debug, Default)]
pub struct BksTable {
    entries: FxHashMap<String, u64>,
}

impl BksTable {
    pub fn from_json(input: &str) -> Result<BksTable, serde_json::Error> {
        let entries: FxHashMap<String, u64> = serde_json::from_str(input)?;
        Ok(BksTable { entries })
    }

    pub fn insert(&mut self, name: &str, cost: u64) {
        self.entries.insert(name.to_owned(), cost);
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.entries.get(name).copied()
    }
}

/// Exact normalized gap as a reduced fraction. `None` when undefined
/// (H equals BKS but the final cost does not reach it).
pub fn compute_alpha(final_cost: u64, heuristic: u64, bks: u64) -> Option<(i64, u64)> {
    if heuristic > bks {
        let num = final_cost as i128 - bks as i128;
        let den = (heuristic - bks) as i128;
        let g = gcd_i128(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
        Some(((num / g) as i64, (den / g) as u64))
    } else if final_cost == bks {
        Some((0, 1))
    } else {
        None
    }
}

fn gcd_i128(a: u128, b: u128) -> u128 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// One (benchmark, method) outcome.
#[derive(Clone, Debug)]
pub struct GapRecord {
    pub benchmark: String,
    pub method: String,
    pub theta: Option<Theta>,
    pub workers: Option<usize>,
    pub wall_time: Duration,
    pub final_cost: Cost,
    pub heuristic_cost: u64,
    pub bks: Option<u64>,
    pub bks_provisional: bool,
    /// Exact reduced fraction (numerator, denominator).
    pub alpha: Option<(i64, u64)>,
    pub status: String,
}

impl GapRecord {
    pub fn alpha_f64(&self) -> Option<f64> {
        self.alpha.map(|(n, d)| n as f64 / d as f64)
    }
}

/// One incumbent event from the built-in exact solver.
#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub benchmark: String,
    pub method: String,
    pub theta: Option<Theta>,
    pub elapsed: Duration,
    pub cost: u64,
}

pub struct SuiteOptions {
    pub time_limit: Duration,
    /// Record incumbent curves for the built-in exact solver.
    pub curves: bool,
    /// Run distinct benchmarks on distinct workers. Methods of one
    /// benchmark still run one after another; wall times of different
    /// benchmarks then overlap, so the default stays sequential to keep
    /// timings honest.
    pub parallel: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            time_limit: Duration::from_secs(60),
            curves: false,
            parallel: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("cannot load corpus file {path}: {source}")]
    Load {
        path: PathBuf,
        source: crate::egraph::LoadError,
    },
    #[error("cannot read corpus file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{method} failed on {benchmark}: {message}")]
    MethodFailed {
        method: String,
        benchmark: String,
        message: String,
    },
}

pub struct SuiteOutput {
    pub records: Vec<GapRecord>,
    pub curves: Vec<CurvePoint>,
}

type BenchmarkOutcome = Result<(Vec<GapRecord>, Vec<CurvePoint>), SuiteError>;

/// Run every method over every corpus file. Benchmarks load with
/// non-aggressive redundancy elimination applied, and the reference
/// heuristic cost H is the sequential greedy DAG cost on the deduplicated
/// instance. Records come back sorted by (benchmark, method, theta,
/// workers); re-running with the same inputs reproduces them exactly up to
/// the wall-time fields.
pub fn run_suite(
    corpus: &[PathBuf],
    methods: &[MethodSpec],
    bks: &BksTable,
    options: &SuiteOptions,
) -> Result<SuiteOutput, SuiteError> {
    let mut files: Vec<PathBuf> = corpus.to_vec();
    files.sort();

    let per_benchmark: Vec<BenchmarkOutcome> = if options.parallel {
        use rayon::prelude::*;
        files
            .par_iter()
            .map(|path| run_benchmark(path, methods, bks, options))
            .collect()
    } else {
        files
            .iter()
            .map(|path| run_benchmark(path, methods, bks, options))
            .collect()
    };

    let mut records = Vec::new();
    let mut curves = Vec::new();
    for outcome in per_benchmark {
        let (r, c) = outcome?;
        records.extend(r);
        curves.extend(c);
    }

    records.sort_by(|a, b| {
        (&a.benchmark, &a.method, format_theta(&a.theta), a.workers).cmp(&(
            &b.benchmark,
            &b.method,
            format_theta(&b.theta),
            b.workers,
        ))
    });
    Ok(SuiteOutput { records, curves })
}

fn run_benchmark(
    path: &Path,
    methods: &[MethodSpec],
    bks: &BksTable,
    options: &SuiteOptions,
) -> BenchmarkOutcome {
    let mut records = Vec::new();
    let mut curves = Vec::new();
    {
        let name = benchmark_name(path);
        let text = std::fs::read_to_string(path).map_err(|e| SuiteError::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        let egraph = EGraph::load_str(&text, None).map_err(|e| SuiteError::Load {
            path: path.to_path_buf(),
            source: e,
        })?;
        let (egraph, _removed) = egraph.deduplicate(false);

        let fail = |m: &MethodSpec, msg: String| SuiteError::MethodFailed {
            method: m.label().to_owned(),
            benchmark: name.clone(),
            message: msg,
        };

        // Reference heuristic cost, computed once per benchmark.
        let (greedy_ref, _) = extract_greedy(&egraph, CostKind::Dag)
            .map_err(|e| fail(&MethodSpec::Greedy, e.to_string()))?;
        let heuristic_cost = greedy_ref.dag_cost.unwrap_finite();

        let mut bench_records = Vec::new();
        for method in methods {
            let started = Instant::now();
            let (final_cost, status) = match method {
                MethodSpec::Greedy => {
                    let (result, _) = extract_greedy(&egraph, CostKind::Dag)
                        .map_err(|e| fail(method, e.to_string()))?;
                    (result.dag_cost, "heuristic".to_owned())
                }
                MethodSpec::Parallel {
                    workers,
                    batch_size,
                } => {
                    let batch = batch_size.unwrap_or(default_batch_size(*workers));
                    let (result, _) = extract_parallel(&egraph, CostKind::Dag, *workers, batch)
                        .map_err(|e| fail(method, e.to_string()))?;
                    (result.dag_cost, "heuristic".to_owned())
                }
                MethodSpec::Exact => {
                    let solve_opts = SolveOptions {
                        time_limit: options.time_limit,
                        node_limit: None,
                    };
                    let mut sink = curve_sink(options.curves, &mut curves, &name, method);
                    let report = solve_exact(
                        &egraph,
                        None,
                        None,
                        &solve_opts,
                        sink.as_mut().map(|s| s as _),
                    )
                    .map_err(|e| fail(method, e.to_string()))?;
                    (
                        report.result.map_or(Cost::Infinite, |r| r.dag_cost),
                        report.status.as_str().to_owned(),
                    )
                }
                MethodSpec::Hybrid { theta } => {
                    let (warm, costs) = extract_greedy(&egraph, CostKind::Dag)
                        .map_err(|e| fail(method, e.to_string()))?;
                    let mask = prune(&egraph, &costs, *theta);
                    let solve_opts = SolveOptions {
                        time_limit: options.time_limit,
                        node_limit: None,
                    };
                    let mut sink = curve_sink(options.curves, &mut curves, &name, method);
                    let report = solve_exact(
                        &egraph,
                        Some(&mask),
                        Some(&warm),
                        &solve_opts,
                        sink.as_mut().map(|s| s as _),
                    )
                    .map_err(|e| fail(method, e.to_string()))?;
                    (
                        report.result.map_or(Cost::Infinite, |r| r.dag_cost),
                        report.status.as_str().to_owned(),
                    )
                }
            };
            bench_records.push(GapRecord {
                benchmark: name.clone(),
                method: method.label().to_owned(),
                theta: method.theta(),
                workers: method.workers(),
                wall_time: started.elapsed(),
                final_cost,
                heuristic_cost,
                bks: None,
                bks_provisional: false,
                alpha: None,
                status,
            });
        }

        // BKS: table entry, or the best cost observed in this run (flagged).
        let (bks_value, provisional) = match bks.get(&name) {
            Some(v) => (Some(v), false),
            None => {
                let observed = bench_records
                    .iter()
                    .filter_map(|r| r.final_cost.finite())
                    .chain(std::iter::once(heuristic_cost))
                    .min();
                (observed, true)
            }
        };
        for mut record in bench_records {
            record.bks = bks_value;
            record.bks_provisional = provisional && bks_value.is_some();
            record.alpha = match (record.final_cost.finite(), bks_value) {
                (Some(f), Some(b)) => compute_alpha(f, record.heuristic_cost, b),
                _ => None,
            };
            records.push(record);
        }
    }
    Ok((records, curves))
}

fn curve_sink<'a>(
    enabled: bool,
    curves: &'a mut Vec<CurvePoint>,
    benchmark: &'a str,
    method: &'a MethodSpec,
) -> Option<impl FnMut(Duration, u64) + 'a> {
    if !enabled {
        return None;
    }
    let benchmark = benchmark.to_owned();
    let label = method.label().to_owned();
    let theta = method.theta();
    Some(move |elapsed: Duration, cost: u64| {
        curves.push(CurvePoint {
            benchmark: benchmark.clone(),
            method: label.clone(),
            theta,
            elapsed,
            cost,
        });
    })
}

pub fn benchmark_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

fn format_theta(theta: &Option<Theta>) -> String {
    theta.map(|t| t.to_string()).unwrap_or_default()
}

pub const CSV_HEADER: &str = "benchmark,method,theta,workers,wall_time_s,cost,H,BKS,alpha,status";

/// Deterministic CSV emission (modulo the wall-time column).
pub fn write_csv(records: &[GapRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{},{},{},{},{}",
            r.benchmark,
            r.method,
            format_theta(&r.theta),
            r.workers.map(|w| w.to_string()).unwrap_or_default(),
            r.wall_time.as_secs_f64(),
            r.final_cost,
            r.heuristic_cost,
            r.bks.map(|b| b.to_string()).unwrap_or_default(),
            r.alpha_f64().map(|a| a.to_string()).unwrap_or_default(),
            if r.bks_provisional {
                format!("{};provisional-bks", r.status)
            } else {
                r.status.clone()
            },
        );
    }
    out
}

pub const CURVES_CSV_HEADER: &str = "benchmark,method,theta,t_s,cost";

pub fn write_curves_csv(curves: &[CurvePoint]) -> String {
    let mut out = String::new();
    out.push_str(CURVES_CSV_HEADER);
    out.push('\n');
    for c in curves {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{}",
            c.benchmark,
            c.method,
            format_theta(&c.theta),
            c.elapsed.as_secs_f64(),
            c.cost,
        );
    }
    out
}
