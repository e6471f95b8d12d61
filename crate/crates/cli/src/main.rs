use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use egx_core::bench::{
    compute_alpha, run_suite, write_csv, write_curves_csv, BksTable, MethodSpec, SuiteOptions,
};
use egx_core::{
    build_ilp, default_batch_size, extract_greedy, extract_parallel, prune, solve_exact, CostKind,
    EGraph, ExtractionResult, SolveOptions, Theta,
};

#[derive(Parser)]
#[command(name = "egx", about = "DAG-cost e-graph extraction", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a minimum-cost term DAG from a serialized e-graph
    Extract(ExtractArgs),
    /// Run extractor configurations over a corpus and report gaps
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Greedy,
    Parallel,
    Exact,
    Hybrid,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CostArg {
    Dag,
    Tree,
    Depth,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DedupArg {
    On,
    Off,
    Aggressive,
}

#[derive(Args)]
struct ExtractArgs {
    /// Input e-graph JSON
    #[arg(long)]
    input: PathBuf,
    /// Extraction pipeline
    #[arg(long, value_enum, default_value = "greedy")]
    mode: Mode,
    /// Cost model for the heuristic
    #[arg(long, value_enum, default_value = "dag")]
    cost: CostArg,
    /// Pruning threshold for hybrid mode (e.g. 1.25, 5/4, inf)
    #[arg(long)]
    theta: Option<String>,
    /// Worker threads for parallel mode (default: EGX_THREADS or all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Batch size for parallel mode (default: 4 x workers)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Solver time limit in seconds (exact/hybrid)
    #[arg(long)]
    timeout: Option<f64>,
    /// Redundancy elimination before extraction
    #[arg(long, value_enum, default_value = "on")]
    dedup: DedupArg,
    /// Write the extraction JSON here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the ILP model in LP format (exact/hybrid)
    #[arg(long)]
    emit_lp: Option<PathBuf>,
    /// Write the warm-start file (hybrid)
    #[arg(long)]
    emit_warmstart: Option<PathBuf>,
    /// Print instance and run statistics to stderr
    #[arg(long)]
    stats: bool,
    /// Best-known cost for this instance; enables the alpha stat
    #[arg(long)]
    bks: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of e-graph JSON files
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated method list, e.g. greedy,hybrid:1.25,exact
    #[arg(long)]
    methods: String,
    /// JSON map of benchmark name to best-known cost
    #[arg(long)]
    bks: Option<PathBuf>,
    /// Per-solve time limit in seconds
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Write the CSV report here instead of stdout
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also record built-in solver incumbent curves to this CSV
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Run distinct benchmarks on distinct workers (overlapping wall times)
    #[arg(long)]
    parallel: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders its own usage text; route it to stderr and keep
            // exit code 1 for usage errors
            let _ = write!(std::io::stderr(), "{err}");
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.command {
        Command::Extract(args) => cmd_extract(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

struct Usage(String);

fn usage<T>(msg: impl Into<String>) -> Result<T, Usage> {
    Err(Usage(msg.into()))
}

fn cmd_extract(args: ExtractArgs) -> Result<ExitCode, String> {
    validate_extract_flags(&args)
        .map_err(|Usage(msg)| format!("{msg}\nrun `egx extract --help` for usage"))?;

    let kind = match args.cost {
        CostArg::Dag => CostKind::Dag,
        CostArg::Tree => CostKind::Tree,
        CostArg::Depth => CostKind::Depth,
    };
    let theta: Theta = match &args.theta {
        Some(t) => t.parse().map_err(|e| format!("--theta: {e}"))?,
        None => Theta::new(5, 4).expect("default threshold"),
    };
    let timeout = args.timeout.unwrap_or(60.0);
    if !timeout.is_finite() || timeout <= 0.0 {
        return Err("--timeout must be a positive number of seconds".into());
    }
    let solve_opts = SolveOptions {
        time_limit: Duration::from_secs_f64(timeout),
        node_limit: None,
    };

    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| format!("cannot read {}: {e}", args.input.display()))?;
    let loaded = EGraph::load_str(&text, None).map_err(|e| e.to_string())?;
    let (egraph, removed) = match args.dedup {
        DedupArg::Off => (loaded, Vec::new()),
        DedupArg::On => loaded.deduplicate(false),
        DedupArg::Aggressive => loaded.deduplicate(true),
    };

    let workers = args
        .workers
        .or_else(|| {
            std::env::var("EGX_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1);
    let batch_size = args
        .batch_size
        .unwrap_or_else(|| default_batch_size(workers));

    let mut stats: Vec<(&str, String)> = vec![
        ("nodes", egraph.num_nodes().to_string()),
        ("classes", egraph.num_classes().to_string()),
        ("roots", egraph.roots().len().to_string()),
        ("dedup_removed", removed.len().to_string()),
    ];

    let infeasible = |msg: String, stats: &[(&str, String)], args: &ExtractArgs| {
        if args.stats {
            for (k, v) in stats {
                eprintln!("{k}={v}");
            }
        }
        eprintln!("infeasible: {msg}");
        Ok(ExitCode::from(2))
    };

    let (result, status): (ExtractionResult, String) = match args.mode {
        Mode::Greedy => match extract_greedy(&egraph, kind) {
            Ok((result, _)) => (result, "heuristic".into()),
            Err(e) => return infeasible(e.to_string(), &stats, &args),
        },
        Mode::Parallel => match extract_parallel(&egraph, kind, workers, batch_size) {
            Ok((result, _)) => (result, "heuristic".into()),
            Err(e) => return infeasible(e.to_string(), &stats, &args),
        },
        Mode::Exact => {
            if let Some(path) = &args.emit_lp {
                let model = build_ilp(&egraph, None, None).map_err(|e| e.to_string())?;
                write_file(path, &model.lp_string())?;
            }
            let report =
                solve_exact(&egraph, None, None, &solve_opts, None).map_err(|e| e.to_string())?;
            stats.push(("solver_nodes", report.nodes_expanded.to_string()));
            match report.result {
                Some(result) => (result, report.status.as_str().into()),
                None => {
                    return infeasible(format!("status {}", report.status.as_str()), &stats, &args)
                }
            }
        }
        Mode::Hybrid => {
            let (warm, costs) = match extract_greedy(&egraph, CostKind::Dag) {
                Ok(v) => v,
                Err(e) => return infeasible(e.to_string(), &stats, &args),
            };
            let mask = prune(&egraph, &costs, theta);
            stats.push(("H", warm.dag_cost.to_string()));
            stats.push(("theta", theta.to_string()));
            stats.push(("pruned", mask.num_pruned().to_string()));
            stats.push((
                "prune_ratio",
                format!(
                    "{:.4}",
                    mask.num_pruned() as f64 / egraph.num_nodes().max(1) as f64
                ),
            ));
            if args.emit_lp.is_some() || args.emit_warmstart.is_some() {
                let model =
                    build_ilp(&egraph, Some(&mask), Some(&warm)).map_err(|e| e.to_string())?;
                if let Some(path) = &args.emit_lp {
                    write_file(path, &model.lp_string())?;
                }
                if let Some(path) = &args.emit_warmstart {
                    let mut buf = Vec::new();
                    model
                        .write_warm_start(&mut buf)
                        .map_err(|e| e.to_string())?;
                    write_file(path, &String::from_utf8(buf).expect("ascii output"))?;
                }
            }
            let report = solve_exact(&egraph, Some(&mask), Some(&warm), &solve_opts, None)
                .map_err(|e| e.to_string())?;
            stats.push(("solver_nodes", report.nodes_expanded.to_string()));
            match report.result {
                Some(result) => (result, report.status.as_str().into()),
                None => {
                    return infeasible(format!("status {}", report.status.as_str()), &stats, &args)
                }
            }
        }
    };

    if args.stats {
        stats.push(("final_cost", result.dag_cost.to_string()));
        stats.push(("status", status.clone()));
        if let Some(bks) = args.bks {
            let h: u64 = stats
                .iter()
                .find(|(k, _)| *k == "H")
                .and_then(|(_, v)| v.parse().ok())
                .unwrap_or_else(|| result.dag_cost.unwrap_finite());
            let alpha = compute_alpha(result.dag_cost.unwrap_finite(), h, bks)
                .map(|(n, d)| (n as f64 / d as f64).to_string());
            stats.push(("alpha", alpha.unwrap_or_else(|| "undefined".into())));
        }
        for (k, v) in &stats {
            eprintln!("{k}={v}");
        }
    }

    let json = result.to_json(&egraph);
    match &args.output {
        Some(path) => write_file(path, &format!("{json}\n"))?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn validate_extract_flags(args: &ExtractArgs) -> Result<(), Usage> {
    let mode = args.mode;
    if args.theta.is_some() && mode != Mode::Hybrid {
        return usage("--theta only applies to --mode hybrid");
    }
    if (args.workers.is_some() || args.batch_size.is_some()) && mode != Mode::Parallel {
        return usage("--workers/--batch-size only apply to --mode parallel");
    }
    if args.timeout.is_some() && !matches!(mode, Mode::Exact | Mode::Hybrid) {
        return usage("--timeout only applies to --mode exact|hybrid");
    }
    if args.emit_lp.is_some() && !matches!(mode, Mode::Exact | Mode::Hybrid) {
        return usage("--emit-lp only applies to --mode exact|hybrid");
    }
    if args.emit_warmstart.is_some() && mode != Mode::Hybrid {
        return usage(
            "--emit-warmstart only applies to --mode hybrid (exact mode has no warm start)",
        );
    }
    if args.bks.is_some() && !args.stats {
        return usage("--bks requires --stats");
    }
    if matches!(mode, Mode::Exact | Mode::Hybrid) && args.cost != CostArg::Dag {
        return usage("--mode exact|hybrid solve the DAG objective; use --cost dag");
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, String> {
    let methods = MethodSpec::parse_list(&args.methods)
        .map_err(|e| format!("{e}\nrun `egx bench --help` for usage"))?;
    if methods.is_empty() {
        return Err("no methods given".into());
    }
    if !args.timeout.is_finite() || args.timeout <= 0.0 {
        return Err("--timeout must be a positive number of seconds".into());
    }

    let bks = match &args.bks {
        None => BksTable::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            BksTable::from_json(&text).map_err(|e| format!("bad BKS file: {e}"))?
        }
    };

    let mut corpus = Vec::new();
    let entries = std::fs::read_dir(&args.corpus)
        .map_err(|e| format!("cannot read corpus dir {}: {e}", args.corpus.display()))?;
    for entry in entries {
        let entry = entry.map_err(|e| e.to_string())?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "json") {
            corpus.push(path);
        }
    }

    let options = SuiteOptions {
        time_limit: Duration::from_secs_f64(args.timeout),
        curves: args.curves.is_some(),
        parallel: args.parallel,
    };
    let output = run_suite(&corpus, &methods, &bks, &options).map_err(|e| e.to_string())?;

    let csv = write_csv(&output.records);
    match &args.report {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.curves {
        write_file(path, &write_curves_csv(&output.curves))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}
