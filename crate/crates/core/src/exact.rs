//! Built-in exact solving of the (pruned) extraction problem, plus the
//! exhaustive enumeration oracle used to check it.
//!
//! The solver branches over per-class node choices, extending partial
//! assignments root-down. A choice that closes a cycle among committed
//! classes is discarded immediately, which mirrors the ILP's level
//! constraints without carrying level variables. The lower bound of a
//! partial assignment is the cost of its committed nodes plus, for every
//! demanded-but-undecided class, the cheapest retained node cost; sharing
//! between undecided classes is deliberately ignored, so the bound never
//! overestimates.

use std::time::{Duration, Instant};

use crate::cost::Cost;
use crate::egraph::{evaluate_dag_cost, Choices, ClassId, EGraph, ExtractionResult, NodeId};
use crate::prune::PruneMask;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SolveStatus {
    /// Search space exhausted with an incumbent: proven optimal.
    Optimal,
    /// Stopped by a limit with an incumbent in hand.
    Feasible,
    /// Search space exhausted without any valid extraction.
    Infeasible,
    /// Stopped by a limit before any incumbent was found.
    Limit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Limit => "limit",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub time_limit: Duration,
    pub node_limit: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: Duration::from_secs(60),
            node_limit: None,
        }
    }
}

#[derive(Debug)]
pub struct SolveReport {
    pub result: Option<ExtractionResult>,
    pub status: SolveStatus,
    pub nodes_expanded: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("time limit must be positive")]
    ZeroTimeLimit,
    #[error("warm-start extraction is not valid")]
    WarmInvalid,
}

/// Callback invoked whenever the incumbent improves: elapsed time and the
/// new cost.
pub type IncumbentSink<'a> = &'a mut dyn FnMut(Duration, u64);

struct Search<'e, 'cb> {
    egraph: &'e EGraph,
    /// Candidates per class, sorted by (cost, id); empty for dead classes.
    retained: Vec<Vec<NodeId>>,
    min_cost: Vec<u64>,
    chosen: Vec<Option<NodeId>>,
    demand: Vec<u32>,
    pending: Vec<ClassId>,
    committed_cost: u64,
    pending_bound: u64,
    incumbent: Option<(u64, Vec<Option<NodeId>>)>,
    incumbent_from_search: bool,
    started: Instant,
    deadline: Instant,
    node_limit: Option<u64>,
    nodes_expanded: u64,
    stopped: bool,
    on_incumbent: Option<IncumbentSink<'cb>>,
    visit_scratch: Vec<bool>,
}

impl Search<'_, '_> {
    fn record_incumbent(&mut self, cost: u64, choices: Vec<Option<NodeId>>, from_search: bool) {
        let elapsed = self.started.elapsed();
        self.incumbent = Some((cost, choices));
        self.incumbent_from_search = self.incumbent_from_search || from_search;
        if let Some(sink) = self.on_incumbent.as_mut() {
            sink(elapsed, cost);
        }
    }

    /// Would selecting a node with child `from` for `target` close a cycle
    /// through committed choices?
    fn reaches(&mut self, from: ClassId, target: ClassId) -> bool {
        if from == target {
            return true;
        }
        self.visit_scratch.fill(false);
        let mut stack = vec![from];
        self.visit_scratch[from.index()] = true;
        while let Some(class) = stack.pop() {
            let Some(node) = self.chosen[class.index()] else {
                continue;
            };
            for child in self.egraph.node(node).unique_children() {
                if child == target {
                    return true;
                }
                if !self.visit_scratch[child.index()] {
                    self.visit_scratch[child.index()] = true;
                    stack.push(child);
                }
            }
        }
        false
    }

    fn dfs(&mut self) {
        if self.stopped {
            return;
        }
        self.nodes_expanded += 1;
        if Instant::now() >= self.deadline
            || self.node_limit.is_some_and(|l| self.nodes_expanded > l)
        {
            self.stopped = true;
            return;
        }

        let Some(class) = self.pending.pop() else {
            // Every demanded class is decided: a complete valid extraction.
            let cost = self.committed_cost;
            debug_assert!(self.incumbent.as_ref().is_none_or(|(c, _)| cost < *c));
            self.record_incumbent(cost, self.chosen.clone(), true);
            return;
        };
        self.pending_bound -= self.min_cost[class.index()];

        let candidates = std::mem::take(&mut self.retained[class.index()]);
        for &node in &candidates {
            let enode = self.egraph.node(node);
            let children = enode.unique_children();
            if children
                .iter()
                .any(|&k| self.retained_is_dead(k) || self.reaches(k, class))
            {
                continue;
            }

            // commit
            self.chosen[class.index()] = Some(node);
            self.committed_cost += enode.cost;
            let mut pushed = 0;
            for &child in &children {
                self.demand[child.index()] += 1;
                if self.demand[child.index()] == 1 && self.chosen[child.index()].is_none() {
                    self.pending.push(child);
                    self.pending_bound += self.min_cost[child.index()];
                    pushed += 1;
                }
            }

            let bound = self.committed_cost + self.pending_bound;
            let beats = match &self.incumbent {
                None => true,
                Some((best, _)) => bound < *best,
            };
            if beats {
                self.dfs();
            }

            // undo
            for &child in children.iter().rev() {
                self.demand[child.index()] -= 1;
                if self.demand[child.index()] == 0 && self.chosen[child.index()].is_none() {
                    let popped = self.pending.pop();
                    debug_assert_eq!(popped, Some(child));
                    self.pending_bound -= self.min_cost[child.index()];
                    pushed -= 1;
                }
            }
            debug_assert_eq!(pushed, 0);
            self.committed_cost -= enode.cost;
            self.chosen[class.index()] = None;

            if self.stopped {
                break;
            }
        }
        self.retained[class.index()] = candidates;

        self.pending_bound += self.min_cost[class.index()];
        self.pending.push(class);
    }

    fn retained_is_dead(&self, class: ClassId) -> bool {
        self.retained[class.index()].is_empty() && self.chosen[class.index()].is_none()
    }
}

/// Branch-and-bound over per-class choices. The incumbent is initialized
/// from `warm` when given (its cost is the initial upper bound), so the
/// final cost never exceeds the warm start's. `status` is `Optimal` only
/// when the search space was exhausted.
pub fn solve_exact(
    egraph: &EGraph,
    mask: Option<&PruneMask>,
    warm: Option<&ExtractionResult>,
    options: &SolveOptions,
    on_incumbent: Option<IncumbentSink<'_>>,
) -> Result<SolveReport, SolveError> {
    if options.time_limit.is_zero() {
        return Err(SolveError::ZeroTimeLimit);
    }

    let mut retained: Vec<Vec<NodeId>> = Vec::with_capacity(egraph.num_classes());
    for class in egraph.class_ids() {
        let mut cands: Vec<NodeId> = egraph
            .members(class)
            .iter()
            .filter(|&&n| !egraph.node(n).self_cyclic)
            .filter(|&&n| mask.is_none_or(|m| !m.is_pruned(n)))
            .copied()
            .collect();
        cands.sort_by_key(|&n| (egraph.node(n).cost, n));
        retained.push(cands);
    }
    let min_cost: Vec<u64> = retained
        .iter()
        .map(|c| c.first().map(|&n| egraph.node(n).cost).unwrap_or(0))
        .collect();

    let started = Instant::now();
    let mut search = Search {
        egraph,
        retained,
        min_cost,
        chosen: vec![None; egraph.num_classes()],
        demand: vec![0; egraph.num_classes()],
        pending: Vec::new(),
        committed_cost: 0,
        pending_bound: 0,
        incumbent: None,
        incumbent_from_search: false,
        started,
        deadline: started + options.time_limit,
        node_limit: options.node_limit,
        nodes_expanded: 0,
        stopped: false,
        on_incumbent,
        visit_scratch: vec![false; egraph.num_classes()],
    };

    if let Some(warm) = warm {
        if !warm.valid {
            return Err(SolveError::WarmInvalid);
        }
        let mut chosen = vec![None; egraph.num_classes()];
        for (&class, &node) in &warm.choices {
            chosen[class.index()] = Some(node);
        }
        search.record_incumbent(warm.dag_cost.unwrap_finite(), chosen, false);
    }

    // Demand the roots, largest id first so the smallest pops first.
    let mut roots: Vec<ClassId> = egraph.roots().to_vec();
    roots.sort();
    for &root in roots.iter().rev() {
        if search.demand[root.index()] == 0 {
            search.demand[root.index()] = 1;
            search.pending.push(root);
            search.pending_bound += search.min_cost[root.index()];
        }
    }
    let any_dead_root = roots.iter().any(|&r| search.retained[r.index()].is_empty());
    if !any_dead_root {
        search.dfs();
    }

    let status = match (&search.incumbent, search.stopped) {
        (Some(_), false) => SolveStatus::Optimal,
        (Some(_), true) => SolveStatus::Feasible,
        (None, false) => SolveStatus::Infeasible,
        (None, true) => SolveStatus::Limit,
    };

    let result = search.incumbent.map(|(_, chosen)| {
        let choices: Choices = chosen
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.map(|n| (ClassId(i as u32), n)))
            .collect();
        ExtractionResult::from_choices(egraph, choices)
    });

    Ok(SolveReport {
        result,
        status,
        nodes_expanded: search.nodes_expanded,
    })
}

pub const DEFAULT_ORACLE_CAP: u64 = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("assignment space {size} exceeds the oracle cap {cap}")]
    CapExceeded { size: u128, cap: u64 },
}

#[derive(Debug)]
pub enum OracleOutcome {
    Optimal(ExtractionResult),
    Infeasible,
}

/// Exhaustively enumerate one-node-per-class assignments, filter for
/// validity, and return the minimum-DAG-cost extraction. The first minimal
/// assignment in ascending choice-vector order wins, which makes the
/// tie-break the lexicographically smallest dense choice vector.
pub fn enumerate_oracle(egraph: &EGraph, cap: Option<u64>) -> Result<OracleOutcome, OracleError> {
    let cap = cap.unwrap_or(DEFAULT_ORACLE_CAP);
    let mut size: u128 = 1;
    for class in egraph.class_ids() {
        size = size.saturating_mul(egraph.members(class).len() as u128);
        if size > cap as u128 {
            return Err(OracleError::CapExceeded { size, cap });
        }
    }

    let num_classes = egraph.num_classes();
    let mut indexes = vec![0usize; num_classes];
    let mut best: Option<(Cost, Choices)> = None;
    loop {
        let choices: Choices = indexes
            .iter()
            .enumerate()
            .map(|(c, &i)| (ClassId(c as u32), egraph.members(ClassId(c as u32))[i]))
            .collect();
        if let Ok(cost) = evaluate_dag_cost(egraph, &choices) {
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, choices));
            }
        }

        // odometer: last class varies fastest, so earlier assignments are
        // lexicographically smaller
        let mut pos = num_classes;
        loop {
            if pos == 0 {
                return Ok(match best {
                    Some((_, choices)) => {
                        OracleOutcome::Optimal(ExtractionResult::from_choices(egraph, choices))
                    }
                    None => OracleOutcome::Infeasible,
                });
            }
            pos -= 1;
            indexes[pos] += 1;
            if indexes[pos] < egraph.members(ClassId(pos as u32)).len() {
                break;
            }
            indexes[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::{extract_greedy, CostKind};
    use crate::prune::{prune, Theta};
    use crate::synth::{generate, SynthConfig};

    fn motivating() -> EGraph {
        EGraph::load_str(include_str!("../tests/fixtures/motivating.json"), None).unwrap()
    }

    fn quick() -> SolveOptions {
        SolveOptions {
            time_limit: Duration::from_secs(30),
            node_limit: None,
        }
    }

    #[test]
    fn motivating_hybrid_reaches_the_optimum() {
        let g = motivating();
        let (warm, costs) = extract_greedy(&g, CostKind::Dag).unwrap();
        assert_eq!(warm.dag_cost, Cost::Finite(17));
        let mask = prune(&g, &costs, Theta::new(5, 4).unwrap());
        let report = solve_exact(&g, Some(&mask), Some(&warm), &quick(), None).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        let best = report.result.unwrap();
        assert_eq!(best.dag_cost, Cost::Finite(16));
        let c2 = g.class_id("c2").unwrap();
        assert_eq!(best.choices.get(&c2), Some(&g.node_id("E3").unwrap()));
    }

    #[test]
    fn singleton_classes_give_the_unique_extraction() {
        let g = EGraph::load_str(
            r#"{"nodes": {
                "n0": {"op": "l", "children": [], "eclass": "c0", "cost": 2},
                "n1": {"op": "f", "children": ["n0"], "eclass": "c1", "cost": 3}},
                "root_eclasses": ["c1"]}"#,
            None,
        )
        .unwrap();
        let report = solve_exact(&g, None, None, &quick(), None).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert_eq!(report.result.unwrap().dag_cost, Cost::Finite(5));
    }

    #[test]
    fn warm_start_is_the_initial_incumbent() {
        let g = motivating();
        let (warm, _) = extract_greedy(&g, CostKind::Dag).unwrap();
        let mut events = Vec::new();
        let mut sink = |_: Duration, cost: u64| events.push(cost);
        let report = solve_exact(&g, None, Some(&warm), &quick(), Some(&mut sink)).unwrap();
        assert_eq!(events.first(), Some(&17));
        assert_eq!(*events.last().unwrap(), 16);
        // costs only improve
        assert!(events.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(report.result.unwrap().dag_cost, Cost::Finite(16));
    }

    #[test]
    fn zero_time_limit_is_an_error() {
        let g = motivating();
        let options = SolveOptions {
            time_limit: Duration::ZERO,
            node_limit: None,
        };
        assert!(matches!(
            solve_exact(&g, None, None, &options, None),
            Err(SolveError::ZeroTimeLimit)
        ));
    }

    #[test]
    fn node_limit_stops_early_with_the_incumbent() {
        // greedy is suboptimal here, so the bound cannot close the search
        // at the root and the limit genuinely interrupts it
        let g = motivating();
        let (warm, _) = extract_greedy(&g, CostKind::Dag).unwrap();
        let options = SolveOptions {
            time_limit: Duration::from_secs(30),
            node_limit: Some(1),
        };
        let report = solve_exact(&g, None, Some(&warm), &options, None).unwrap();
        assert_eq!(report.status, SolveStatus::Feasible);
        assert_eq!(report.result.unwrap().dag_cost, warm.dag_cost);
        // without any incumbent the same stop reports a bare limit
        let report = solve_exact(&g, None, None, &options, None).unwrap();
        assert_eq!(report.status, SolveStatus::Limit);
        assert!(report.result.is_none());
    }

    #[test]
    fn infeasible_instance_is_reported() {
        let g = EGraph::load_str(
            r#"{"nodes": {
                "n0": {"op": "f", "children": ["n0"], "eclass": "c0", "cost": 1}},
                "root_eclasses": ["c0"]}"#,
            None,
        )
        .unwrap();
        let report = solve_exact(&g, None, None, &quick(), None).unwrap();
        assert_eq!(report.status, SolveStatus::Infeasible);
        assert!(matches!(
            enumerate_oracle(&g, None).unwrap(),
            OracleOutcome::Infeasible
        ));
    }

    #[test]
    fn oracle_finds_the_motivating_optimum() {
        let g = motivating();
        match enumerate_oracle(&g, None).unwrap() {
            OracleOutcome::Optimal(best) => assert_eq!(best.dag_cost, Cost::Finite(16)),
            OracleOutcome::Infeasible => panic!("feasible instance"),
        }
    }

    #[test]
    fn oracle_on_unit_chain() {
        let mut nodes = String::new();
        nodes.push_str(r#""n0": {"op": "l", "children": [], "eclass": "c0", "cost": 1}"#);
        for i in 1..7 {
            nodes.push_str(&format!(
                r#", "n{i}": {{"op": "f", "children": ["n{}"], "eclass": "c{i}", "cost": 1}}"#,
                i - 1
            ));
        }
        let text = format!(r#"{{"nodes": {{{nodes}}}, "root_eclasses": ["c6"]}}"#);
        let g = EGraph::load_str(&text, None).unwrap();
        match enumerate_oracle(&g, None).unwrap() {
            OracleOutcome::Optimal(best) => assert_eq!(best.dag_cost, Cost::Finite(7)),
            OracleOutcome::Infeasible => panic!("feasible instance"),
        }
    }

    #[test]
    fn oracle_cap_is_enforced() {
        let g = generate(&SynthConfig::medium(11));
        assert!(matches!(
            enumerate_oracle(&g, Some(2)),
            Err(OracleError::CapExceeded { .. })
        ));
    }
}
