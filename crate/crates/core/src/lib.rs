//! DAG-cost e-graph extraction.
//!
//! The pipeline combines a parallelized greedy fixpoint heuristic, adaptive
//! threshold pruning of the candidate space, and exact solving over the
//! pruned problem with the greedy solution as warm start. Interop with
//! external exact solvers goes through LP-format model files and plain
//! name/value solution files; a built-in branch-and-bound solver and an
//! exhaustive enumeration oracle cover desk-scale instances, and a benchmark
//! harness reports normalized optimality gaps over a corpus.

pub mod bench;
pub mod cost;
pub mod egraph;
pub mod exact;
pub mod greedy;
pub mod ilp;
pub mod parallel;
pub mod prune;
pub mod synth;

pub use cost::{Cost, INFINITY};
pub use egraph::{
    evaluate_dag_cost, validate_extraction, Choices, ClassId, CostScaling, EGraph, ENode,
    ExtractionResult, NodeId, ValidityReport,
};
pub use exact::{enumerate_oracle, solve_exact, OracleOutcome, SolveOptions, SolveStatus};
pub use greedy::{calculate_cost_set, extract_greedy, ClassCosts, CostKind, CostSet};
pub use ilp::{build_ilp, IlpModel};
pub use parallel::{default_batch_size, extract_parallel, BatchBuffer};
pub use prune::{prune, PruneMask, Theta};
