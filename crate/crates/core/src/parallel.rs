//! Batched parallel greedy extraction.
//!
//! Each iteration pops a batch off the worklist, evaluates every popped node
//! concurrently against the class costs frozen at the batch boundary, then
//! applies the staged candidates single-threaded in batch order. A candidate
//! whose child classes improved under it during the same batch is recomputed
//! at commit time, so the committed sequence is exactly the sequential one:
//! per-class best totals (and chosen nodes) match [`extract_greedy`]
//! for every worker count and batch size.

use crate::cost::Cost;
use crate::egraph::{ClassId, EGraph, ExtractionResult, NodeId};
use crate::greedy::{
    extract_greedy, finish, run_fixpoint, ClassCosts, CostKind, CostSet, ExtractError,
};

/// Staged candidates produced by one batch, before the merge phase applies
/// them to the shared class costs.
#[derive(Debug, Default)]
pub struct BatchBuffer {
    inserted: Vec<CostSet>,
}

impl BatchBuffer {
    pub fn push(&mut self, cost_set: CostSet) {
        self.inserted.push(cost_set);
    }

    pub fn len(&self) -> usize {
        self.inserted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inserted.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CostSet> {
        self.inserted.iter()
    }

    /// Collapse to at most one entry per e-class: the minimum total among
    /// that class's candidates in the batch, ties to the smallest node id.
    pub fn dedup_per_class(&mut self, egraph: &EGraph) {
        let mut best: rustc_hash::FxHashMap<ClassId, usize> = rustc_hash::FxHashMap::default();
        for (i, cs) in self.inserted.iter().enumerate() {
            let class = egraph.node(cs.for_node).class;
            match best.get_mut(&class) {
                None => {
                    best.insert(class, i);
                }
                Some(slot) => {
                    let cur = &self.inserted[*slot];
                    if (cs.total, cs.for_node) < (cur.total, cur.for_node) {
                        *slot = i;
                    }
                }
            }
        }
        let mut keep: Vec<usize> = best.into_values().collect();
        keep.sort_unstable();
        let mut out = Vec::with_capacity(keep.len());
        for (i, cs) in std::mem::take(&mut self.inserted).into_iter().enumerate() {
            if keep.binary_search(&i).is_ok() {
                out.push(cs);
            }
        }
        self.inserted = out;
    }

    /// Minimum staged total for a class, if any candidate targets it.
    pub fn class_min(&self, egraph: &EGraph, class: ClassId) -> Option<(NodeId, Cost)> {
        self.inserted
            .iter()
            .filter(|cs| egraph.node(cs.for_node).class == class)
            .map(|cs| (cs.total, cs.for_node))
            .min()
            .map(|(total, node)| (node, total))
    }
}

/// Default batch size: four nodes per worker amortizes the merge phase
/// without starving it.
pub fn default_batch_size(workers: usize) -> usize {
    4 * workers.max(1)
}

/// Parallel greedy extraction over `workers` threads, popping up to
/// `batch_size` nodes per iteration. Converges to the same per-class best
/// totals as the sequential algorithm; with one worker and unit batches it
/// is trace-equivalent to [`extract_greedy`].
pub fn extract_parallel(
    egraph: &EGraph,
    kind: CostKind,
    workers: usize,
    batch_size: usize,
) -> Result<(ExtractionResult, ClassCosts), ExtractError> {
    assert!(workers >= 1, "worker count must be at least 1");
    assert!(batch_size >= 1, "batch size must be at least 1");
    if workers == 1 && batch_size == 1 {
        return extract_greedy(egraph, kind);
    }
    let costs = if workers == 1 {
        run_fixpoint(egraph, kind, None, batch_size)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool construction failed");
        run_fixpoint(egraph, kind, Some(&pool), batch_size)?
    };
    let result = finish(egraph, &costs)?;
    Ok((result, costs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculate_cost_set;
    use crate::egraph::EGraph;
    use crate::synth::{generate, SynthConfig};

    fn motivating() -> EGraph {
        EGraph::load_str(include_str!("../tests/fixtures/motivating.json"), None).unwrap()
    }

    #[test]
    fn motivating_parallel_matches_sequential_for_any_worker_count() {
        let g = motivating();
        let (seq_result, seq_costs) = extract_greedy(&g, CostKind::Dag).unwrap();
        assert_eq!(seq_result.dag_cost, crate::Cost::Finite(17));
        for workers in [1, 2, 8] {
            let (result, costs) =
                extract_parallel(&g, CostKind::Dag, workers, default_batch_size(workers)).unwrap();
            assert_eq!(result.dag_cost, crate::Cost::Finite(17));
            for c in g.class_ids() {
                assert_eq!(costs.best_total(c), seq_costs.best_total(c));
            }
        }
    }

    #[test]
    fn unit_batch_single_worker_is_trace_equivalent() {
        let g = motivating();
        let (seq_result, seq_costs) = extract_greedy(&g, CostKind::Dag).unwrap();
        let (par_result, par_costs) = extract_parallel(&g, CostKind::Dag, 1, 1).unwrap();
        assert_eq!(par_result, seq_result);
        for c in g.class_ids() {
            assert_eq!(par_costs.best_total(c), seq_costs.best_total(c));
            assert_eq!(par_costs.chosen(c), seq_costs.chosen(c));
        }
        for (n, _) in g.nodes() {
            assert_eq!(par_costs.node_best(n), seq_costs.node_best(n));
        }
    }

    #[test]
    fn batched_runs_commit_the_sequential_state() {
        // larger batches must not change totals, choices, or node costs
        for seed in 0..25 {
            let g = generate(&SynthConfig::medium(seed));
            let (seq_result, seq_costs) = extract_greedy(&g, CostKind::Dag).unwrap();
            for (workers, batch) in [(1, 4), (1, 64), (2, 8), (4, 16), (8, 32)] {
                let (result, costs) = extract_parallel(&g, CostKind::Dag, workers, batch).unwrap();
                assert_eq!(result, seq_result, "seed {seed} w{workers} b{batch}");
                for c in g.class_ids() {
                    assert_eq!(costs.best_total(c), seq_costs.best_total(c));
                    assert_eq!(costs.chosen(c), seq_costs.chosen(c));
                }
                for (n, _) in g.nodes() {
                    assert_eq!(costs.node_best(n), seq_costs.node_best(n));
                }
            }
        }
    }

    #[test]
    fn parallel_tree_and_depth_match_sequential() {
        for seed in 0..10 {
            let g = generate(&SynthConfig::medium(seed));
            for kind in [CostKind::Tree, CostKind::Depth] {
                let (_, seq) = extract_greedy(&g, kind).unwrap();
                let (_, par) = extract_parallel(&g, kind, 4, 16).unwrap();
                for c in g.class_ids() {
                    assert_eq!(par.best_total(c), seq.best_total(c));
                }
            }
        }
    }

    #[test]
    fn batch_buffer_dedup_keeps_per_class_minimum() {
        let g = motivating();
        let (_, costs) = extract_greedy(&g, CostKind::Dag).unwrap();
        let mut buffer = BatchBuffer::default();
        // stage both candidates of the or-class and both of the not-b class
        for name in ["E2", "E3", "E9", "E10"] {
            let node = g.node_id(name).unwrap();
            buffer.push(calculate_cost_set(&g, node, &costs).unwrap());
        }
        assert_eq!(buffer.len(), 4);
        buffer.dedup_per_class(&g);
        assert_eq!(buffer.len(), 2);
        let c2 = g.class_id("c2").unwrap();
        let c6 = g.class_id("c6").unwrap();
        assert_eq!(
            buffer.class_min(&g, c2).map(|(n, _)| n),
            Some(g.node_id("E2").unwrap())
        );
        assert_eq!(
            buffer.class_min(&g, c6).map(|(n, _)| n),
            Some(g.node_id("E9").unwrap())
        );
    }

    #[test]
    fn batch_buffer_tie_breaks_to_smallest_id() {
        let g = EGraph::load_str(
            r#"{"nodes": {
                "m0": {"op": "f", "children": [], "eclass": "c0", "cost": 7},
                "m1": {"op": "g", "children": [], "eclass": "c0", "cost": 7}},
                "root_eclasses": ["c0"]}"#,
            None,
        )
        .unwrap();
        let (_, costs) = extract_greedy(&g, CostKind::Dag).unwrap();
        let mut buffer = BatchBuffer::default();
        for name in ["m1", "m0"] {
            let node = g.node_id(name).unwrap();
            buffer.push(calculate_cost_set(&g, node, &costs).unwrap());
        }
        buffer.dedup_per_class(&g);
        assert_eq!(buffer.len(), 1);
        let kept = buffer.iter().next().unwrap();
        assert_eq!(kept.for_node, g.node_id("m0").unwrap());
    }
}
