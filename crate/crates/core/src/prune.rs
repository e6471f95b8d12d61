//! Adaptive search-space reduction: per class, keep only the nodes whose
//! heuristic total stays within a threshold factor of the class minimum.

use std::fmt;
use std::str::FromStr;

use crate::cost::Cost;
use crate::egraph::{ClassId, EGraph, NodeId};
use crate::greedy::ClassCosts;

/// The pruning threshold: a rational at least 1, or unbounded (no pruning).
///
/// Comparisons are exact: a node with best total `b` survives against class
/// minimum `m` iff `b * q <= m * p` for theta `p/q`, so equal rationals
/// prune identically and the boundary case is never subject to rounding.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Theta {
    Ratio { p: u64, q: u64 },
    Unbounded,
}

#[derive(Debug, thiserror::Error)]
pub enum ThetaError {
    #[error("cannot parse `{0}` as a threshold (expected e.g. 1.25, 5/4, or inf)")]
    Unparseable(String),
    #[error("threshold must be at least 1, got {0}")]
    BelowOne(String),
    #[error("threshold denominator must be nonzero")]
    ZeroDenominator,
}

impl Theta {
    pub fn new(p: u64, q: u64) -> Result<Theta, ThetaError> {
        if q == 0 {
            return Err(ThetaError::ZeroDenominator);
        }
        if p < q {
            return Err(ThetaError::BelowOne(format!("{p}/{q}")));
        }
        let g = gcd(p, q);
        Ok(Theta::Ratio { p: p / g, q: q / g })
    }

    /// True when a node of total `value` is retained against `class_min`.
    pub fn admits(self, value: Cost, class_min: Cost) -> bool {
        let (Cost::Finite(v), Cost::Finite(m)) = (value, class_min) else {
            return false;
        };
        match self {
            Theta::Unbounded => true,
            Theta::Ratio { p, q } => (v as u128) * (q as u128) <= (m as u128) * (p as u128),
        }
    }
}

impl FromStr for Theta {
    type Err = ThetaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "inf" || s == "infinity" {
            return Ok(Theta::Unbounded);
        }
        if let Some((p, q)) = s.split_once('/') {
            let p: u64 = p
                .trim()
                .parse()
                .map_err(|_| ThetaError::Unparseable(s.into()))?;
            let q: u64 = q
                .trim()
                .parse()
                .map_err(|_| ThetaError::Unparseable(s.into()))?;
            return Theta::new(p, q);
        }
        if let Ok(v) = s.parse::<u64>() {
            return Theta::new(v, 1);
        }
        // decimal form: scale by a power of ten
        if let Some((int, frac)) = s.split_once('.') {
            if !frac.is_empty() && frac.len() <= 18 && frac.chars().all(|c| c.is_ascii_digit()) {
                let int: u64 = if int.is_empty() {
                    0
                } else {
                    int.parse().map_err(|_| ThetaError::Unparseable(s.into()))?
                };
                let q = 10u64.pow(frac.len() as u32);
                let frac: u64 = frac
                    .parse()
                    .map_err(|_| ThetaError::Unparseable(s.into()))?;
                let p = int
                    .checked_mul(q)
                    .and_then(|v| v.checked_add(frac))
                    .ok_or_else(|| ThetaError::Unparseable(s.into()))?;
                return Theta::new(p, q);
            }
        }
        Err(ThetaError::Unparseable(s.into()))
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta::Ratio { p, q } => {
                if *q == 1 {
                    write!(f, "{p}")
                } else {
                    write!(f, "{p}/{q}")
                }
            }
            Theta::Unbounded => write!(f, "inf"),
        }
    }
}

/// The pruned node set together with the threshold that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneMask {
    pub theta: Theta,
    pruned: Vec<bool>,
    /// Per class, the retained members in ascending id order; empty for dead
    /// classes (no finite-cost member at all).
    retained: Vec<Vec<NodeId>>,
    dead_classes: Vec<ClassId>,
}

#[derive(Debug, thiserror::Error)]
pub enum PruneError {
    #[error(transparent)]
    Theta(#[from] ThetaError),
}

impl PruneMask {
    pub fn is_pruned(&self, node: NodeId) -> bool {
        self.pruned[node.index()]
    }

    pub fn retained(&self, class: ClassId) -> &[NodeId] {
        &self.retained[class.index()]
    }

    pub fn is_dead(&self, class: ClassId) -> bool {
        self.retained[class.index()].is_empty()
    }

    /// Classes with no finite-cost member; they can never appear in a
    /// feasible extraction and the ILP omits their variables.
    pub fn dead_classes(&self) -> &[ClassId] {
        &self.dead_classes
    }

    pub fn pruned_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.pruned
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(i, _)| NodeId(i as u32))
    }

    pub fn num_pruned(&self) -> usize {
        self.pruned.iter().filter(|&&p| p).count()
    }

    /// Audit form: `{"theta": "p/q", "pruned": [...], "dead_classes": [...]}`.
    pub fn to_json(&self, egraph: &EGraph) -> String {
        let pruned: Vec<&str> = self.pruned_nodes().map(|n| egraph.node_name(n)).collect();
        let dead: Vec<&str> = self
            .dead_classes
            .iter()
            .map(|&c| egraph.class_name(c))
            .collect();
        let out = serde_json::json!({
            "theta": self.theta.to_string(),
            "pruned": pruned,
            "dead_classes": dead,
        });
        serde_json::to_string(&out).expect("mask serialization cannot fail")
    }
}

/// Compute the pruned set from heuristic node costs: per class, keep exactly
/// the members whose best total is within `theta` times the class minimum.
/// Every node that never produced a finite selection is pruned, and classes
/// whose members are all infinite are recorded as dead.
pub fn prune(egraph: &EGraph, costs: &ClassCosts, theta: Theta) -> PruneMask {
    let mut pruned = vec![false; egraph.num_nodes()];
    let mut retained = Vec::with_capacity(egraph.num_classes());
    let mut dead_classes = Vec::new();

    for class in egraph.class_ids() {
        let members = egraph.members(class);
        let class_min = members
            .iter()
            .map(|&n| costs.node_best(n))
            .min()
            .unwrap_or(Cost::Infinite);
        let mut kept = Vec::new();
        for &node in members {
            if theta.admits(costs.node_best(node), class_min) {
                kept.push(node);
            } else {
                pruned[node.index()] = true;
            }
        }
        if kept.is_empty() {
            dead_classes.push(class);
        }
        retained.push(kept);
    }

    PruneMask {
        theta,
        pruned,
        retained,
        dead_classes,
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}


#[cfg(test)]
mod more_tests {
    use super::*;
    use crate::egraph::EGraph;
    use crate::greedy::{extract_greedy, CostKind};

    #[test]
    fn theta_one_keeps_every_tied_minimum() {
        let g = EGraph::load_str(
            r#"{"nodes": {
                "m0": {"op": "f", "children": [], "eclass": "c0", "cost": 7},
                "m1": {"op": "g", "children": [], "eclass": "c0", "cost": 7},
                "m2": {"op": "h", "children": [], "eclass": "c0", "cost": 8}},
                "root_eclasses": ["c0"]}"#,
            None,
        )
        .unwrap();
        let (_, costs) = extract_greedy(&g, CostKind::Dag).unwrap();
        let mask = prune(&g, &costs, Theta::new(1, 1).unwrap());
        assert!(!mask.is_pruned(g.node_id("m0").unwrap()));
        assert!(!mask.is_pruned(g.node_id("m1").unwrap()));
        assert!(mask.is_pruned(g.node_id("m2").unwrap()));
        assert_eq!(mask.retained(g.class_id("c0").unwrap()).len(), 2);
    }

    #[test]
    fn mask_serializes_for_audit() {
        let g = EGraph::load_str(include_str!("../tests/fixtures/motivating.json"), None).unwrap();
        let (_, costs) = extract_greedy(&g, CostKind::Dag).unwrap();
        let mask = prune(&g, &costs, Theta::new(5, 4).unwrap());
        let json = mask.to_json(&g);
        assert_eq!(
            json,
            r#"{"dead_classes":[],"pruned":["E10","E5"],"theta":"5/4"}"#
        );
    }
}
