//! Shared helpers for the integration suites: fixtures and independent
//! reference oracles. Everything here enumerates or recurses directly over
//! the e-graph and never calls into the extractor machinery it checks.

#![allow(dead_code)]

use egx_core::*;

pub fn motivating() -> EGraph {
    EGraph::load_str(include_str!("../fixtures/motivating.json"), None).unwrap()
}

/// All valid one-node-per-class assignments, by brute force.
pub fn all_valid_extractions(egraph: &EGraph) -> Vec<Choices> {
    let mut indexes = vec![0usize; egraph.num_classes()];
    let mut out = Vec::new();
    loop {
        let choices: Choices = indexes
            .iter()
            .enumerate()
            .map(|(c, &i)| {
                let class = ClassId(c as u32);
                (class, egraph.members(class)[i])
            })
            .collect();
        if validate_extraction(egraph, &choices).is_valid() {
            out.push(choices);
        }
        let mut pos = egraph.num_classes();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            let class = ClassId(pos as u32);
            indexes[pos] += 1;
            if indexes[pos] < egraph.members(class).len() {
                break;
            }
            indexes[pos] = 0;
        }
    }
}

/// Assignment-space size of the brute-force enumeration.
pub fn assignment_space(egraph: &EGraph) -> u128 {
    egraph
        .class_ids()
        .map(|c| egraph.members(c).len() as u128)
        .product()
}

/// Tree cost of a valid selection: the root terms expanded with every
/// shared subterm re-counted. Recursive definition, independent of the
/// extractor's dynamic programming.
pub fn tree_cost_of_selection(egraph: &EGraph, choices: &Choices) -> u128 {
    fn term_cost(egraph: &EGraph, choices: &Choices, class: ClassId) -> u128 {
        let node = egraph.node(choices[&class]);
        let mut cost = node.cost as u128;
        for &child in &node.children {
            cost += term_cost(egraph, choices, child);
        }
        cost
    }
    egraph
        .roots()
        .iter()
        .map(|&r| term_cost(egraph, choices, r))
        .sum()
}

/// Minimum DAG cost over all valid extractions, by brute force.
pub fn brute_force_dag_optimum(egraph: &EGraph) -> Option<u64> {
    all_valid_extractions(egraph)
        .iter()
        .map(|choices| evaluate_dag_cost(egraph, choices).unwrap().unwrap_finite())
        .min()
}

/// Minimum tree cost over all valid extractions, by brute force.
pub fn brute_force_tree_optimum(egraph: &EGraph) -> Option<u128> {
    all_valid_extractions(egraph)
        .iter()
        .map(|choices| tree_cost_of_selection(egraph, choices))
        .min()
}
