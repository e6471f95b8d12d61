//! The e-graph instance: loading, validation, derived indexes, redundancy
//! elimination, and evaluation of extraction choices.
//!
//! The interchange format is the serialized e-graph convention used by
//! extraction tooling: a JSON object with `"nodes"` (map from node id to
//! `{op, children, eclass, cost}`) and `"root_eclasses"`. Children in the
//! file reference *node* ids and are resolved to the referenced node's
//! e-class on load, so published corpora load unmodified.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::cost::Cost;

/// Dense index of an e-node, assigned at load in lexicographic order of the
/// original string ids.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u32);

/// Dense index of an e-class, assigned at load like [`NodeId`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ClassId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One e-node: an operator applied to child e-classes, with an exact
/// non-negative integer cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ENode {
    pub op: String,
    /// Ordered child e-classes, as resolved at load.
    pub children: Vec<ClassId>,
    pub class: ClassId,
    pub cost: u64,
    /// True when `children` contains the node's own class. Such a node can
    /// never appear in a one-node-per-class extraction, so the greedy
    /// extractor keeps it at infinity and the ILP fixes its variable to 0.
    pub self_cyclic: bool,
}

impl ENode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Child classes with duplicates removed, in first-occurrence order.
    pub fn unique_children(&self) -> Vec<ClassId> {
        let mut seen = Vec::new();
        for &c in &self.children {
            if !seen.contains(&c) {
                seen.push(c);
            }
        }
        seen
    }
}

/// Optional rational-to-integer cost scaling applied at load: every cost is
/// multiplied by `denominator` and rounded to the nearest integer. A cost
/// whose scaled value is further than `tolerance` from an integer is
/// rejected.
#[derive(Clone, Copy, Debug)]
pub struct CostScaling {
    pub denominator: u64,
    pub tolerance: f64,
}

impl CostScaling {
    pub fn new(denominator: u64) -> Self {
        CostScaling {
            denominator,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("node {node}: child {child} does not name a node in the file")]
    DanglingChild { node: String, child: String },
    #[error("root e-class {0} has no member nodes")]
    DanglingRoot(String),
    #[error("node {node}: negative cost {cost}")]
    NegativeCost { node: String, cost: f64 },
    #[error("node {node}: cost {cost} is not an integer and no scaling was configured")]
    NonIntegerCost { node: String, cost: f64 },
    #[error("node {node}: cost {cost} is not finite")]
    NonFiniteCost { node: String, cost: f64 },
    #[error("node {node}: scaled cost {scaled} is not within tolerance of an integer")]
    ScaledCostNotIntegral { node: String, scaled: f64 },
    #[error("node {node}: cost does not fit in u64 after scaling")]
    CostOutOfRange { node: String },
    #[error("the file declares no root e-classes")]
    EmptyRoots,
    #[error("sum of all node costs exceeds u64; instance cannot be evaluated exactly")]
    TotalCostOverflow,
}

#[derive(Deserialize)]
struct RawNode {
    op: String,
    #[serde(default)]
    children: Vec<String>,
    eclass: String,
    cost: serde_json::Number,
}

#[derive(Deserialize)]
struct RawEGraph {
    nodes: BTreeMap<String, RawNode>,
    root_eclasses: Vec<String>,
}

/// An immutable e-graph instance with derived indexes.
///
/// Node and class ids are dense and contiguous; the original string ids are
/// kept for interchange. `parents` is the exact inverse of the children
/// relation. The structure is never mutated after load, so it is safe to
/// read from any number of concurrent workers.
#[derive(Clone, Debug, PartialEq)]
pub struct EGraph {
    nodes: Vec<ENode>,
    /// Members of each class, sorted by dense node id.
    classes: Vec<Vec<NodeId>>,
    /// Root classes, sorted and deduplicated.
    roots: Vec<ClassId>,
    /// For each class, the nodes having it among their children, sorted.
    parents: Vec<Vec<NodeId>>,
    node_names: Vec<String>,
    class_names: Vec<String>,
    node_by_name: FxHashMap<String, NodeId>,
    class_by_name: FxHashMap<String, ClassId>,
}

impl EGraph {
    pub fn load<R: Read>(mut reader: R, scaling: Option<CostScaling>) -> Result<EGraph, LoadError> {
        let mut buf = String::new();
        reader.read_to_string(&mut buf)?;
        Self::load_str(&buf, scaling)
    }

    pub fn load_str(input: &str, scaling: Option<CostScaling>) -> Result<EGraph, LoadError> {
        let raw: RawEGraph = serde_json::from_str(input)?;
        Self::from_raw(raw, scaling)
    }

    fn from_raw(raw: RawEGraph, scaling: Option<CostScaling>) -> Result<EGraph, LoadError> {
        if raw.root_eclasses.is_empty() {
            return Err(LoadError::EmptyRoots);
        }

        // BTreeMap iteration gives lexicographic node order, which fixes the
        // dense numbering independently of file layout.
        let node_names: Vec<String> = raw.nodes.keys().cloned().collect();
        let mut node_by_name = FxHashMap::default();
        for (i, name) in node_names.iter().enumerate() {
            node_by_name.insert(name.clone(), NodeId(i as u32));
        }

        let mut class_names: Vec<String> = raw
            .nodes
            .values()
            .map(|n| n.eclass.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        class_names.sort();
        let mut class_by_name = FxHashMap::default();
        for (i, name) in class_names.iter().enumerate() {
            class_by_name.insert(name.clone(), ClassId(i as u32));
        }

        let mut nodes = Vec::with_capacity(node_names.len());
        let mut total_cost: u128 = 0;
        for name in &node_names {
            let rn = &raw.nodes[name];
            let cost = parse_cost(name, &rn.cost, scaling)?;
            total_cost += cost as u128;
            let class = class_by_name[&rn.eclass];
            let mut children = Vec::with_capacity(rn.children.len());
            for child in &rn.children {
                let child_node =
                    node_by_name
                        .get(child)
                        .ok_or_else(|| LoadError::DanglingChild {
                            node: name.clone(),
                            child: child.clone(),
                        })?;
                let child_class = &raw.nodes[&node_names[child_node.index()]].eclass;
                children.push(class_by_name[child_class]);
            }
            let self_cyclic = children.contains(&class);
            nodes.push(ENode {
                op: rn.op.clone(),
                children,
                class,
                cost,
                self_cyclic,
            });
        }
        if total_cost > u64::MAX as u128 {
            return Err(LoadError::TotalCostOverflow);
        }

        let mut roots = Vec::new();
        for r in &raw.root_eclasses {
            let class = class_by_name
                .get(r)
                .ok_or_else(|| LoadError::DanglingRoot(r.clone()))?;
            roots.push(*class);
        }
        roots.sort();
        roots.dedup();

        Ok(Self::assemble(
            nodes,
            roots,
            node_names,
            class_names,
            node_by_name,
            class_by_name,
        ))
    }

    fn assemble(
        nodes: Vec<ENode>,
        roots: Vec<ClassId>,
        node_names: Vec<String>,
        class_names: Vec<String>,
        node_by_name: FxHashMap<String, NodeId>,
        class_by_name: FxHashMap<String, ClassId>,
    ) -> EGraph {
        let num_classes = class_names.len();
        let mut classes = vec![Vec::new(); num_classes];
        let mut parents = vec![Vec::new(); num_classes];
        for (i, node) in nodes.iter().enumerate() {
            classes[node.class.index()].push(NodeId(i as u32));
            for c in node.unique_children() {
                parents[c.index()].push(NodeId(i as u32));
            }
        }
        for p in &mut parents {
            p.sort();
            p.dedup();
        }
        EGraph {
            nodes,
            classes,
            roots,
            parents,
            node_names,
            class_names,
            node_by_name,
            class_by_name,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn node(&self, id: NodeId) -> &ENode {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &ENode)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn members(&self, class: ClassId) -> &[NodeId] {
        &self.classes[class.index()]
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> {
        (0..self.classes.len() as u32).map(ClassId)
    }

    pub fn roots(&self) -> &[ClassId] {
        &self.roots
    }

    pub fn parents(&self, class: ClassId) -> &[NodeId] {
        &self.parents[class.index()]
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.node_names[id.index()]
    }

    pub fn class_name(&self, id: ClassId) -> &str {
        &self.class_names[id.index()]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_by_name.get(name).copied()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_by_name.get(name).copied()
    }

    /// Replace the root set; used by tests and the monotonicity checks.
    pub fn with_roots(&self, roots: Vec<ClassId>) -> EGraph {
        let mut g = self.clone();
        let mut roots = roots;
        roots.sort();
        roots.dedup();
        assert!(!roots.is_empty(), "root set must be nonempty");
        g.roots = roots;
        g
    }

    /// Serialize back to the interchange format. Children are emitted as the
    /// smallest-id member of the child class, so load -> store -> load
    /// round-trips to an identical e-graph.
    pub fn store<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        let json = self.store_string();
        writer.write_all(json.as_bytes())
    }

    pub fn store_string(&self) -> String {
        #[derive(Serialize)]
        struct OutNode<'a> {
            op: &'a str,
            children: Vec<&'a str>,
            eclass: &'a str,
            cost: u64,
        }
        let mut nodes = BTreeMap::new();
        for (id, node) in self.nodes() {
            let children = node
                .children
                .iter()
                .map(|&c| self.node_name(self.classes[c.index()][0]))
                .collect();
            nodes.insert(
                self.node_name(id),
                OutNode {
                    op: &node.op,
                    children,
                    eclass: self.class_name(node.class),
                    cost: node.cost,
                },
            );
        }
        let out = serde_json::json!({
            "nodes": nodes,
            "root_eclasses": self.roots.iter().map(|&r| self.class_name(r)).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&out).expect("e-graph serialization cannot fail")
    }

    /// Redundancy elimination: within each e-class, among nodes sharing a
    /// dedup key, keep only one of minimum cost (ties to the smallest id).
    /// The key is `(op, child-class set)` normally and the child-class set
    /// alone when `aggressive`. Returns the reduced e-graph and the names of
    /// the removed nodes.
    pub fn deduplicate(&self, aggressive: bool) -> (EGraph, Vec<String>) {
        let mut keep = vec![true; self.nodes.len()];
        for members in &self.classes {
            let mut best: FxHashMap<(Option<&str>, Vec<ClassId>), NodeId> = FxHashMap::default();
            for &id in members {
                let node = self.node(id);
                let mut child_set = node.children.clone();
                child_set.sort();
                child_set.dedup();
                let key = (
                    if aggressive {
                        None
                    } else {
                        Some(node.op.as_str())
                    },
                    child_set,
                );
                match best.get_mut(&key) {
                    None => {
                        best.insert(key, id);
                    }
                    Some(cur) => {
                        let cur_node = self.node(*cur);
                        // min cost, then smallest dense id
                        if (node.cost, id) < (cur_node.cost, *cur) {
                            keep[cur.index()] = false;
                            *cur = id;
                        } else {
                            keep[id.index()] = false;
                        }
                    }
                }
            }
        }

        let mut removed = Vec::new();
        let mut kept_nodes = Vec::new();
        let mut kept_names = Vec::new();
        let mut old_to_new = vec![NodeId(u32::MAX); self.nodes.len()];
        for (id, node) in self.nodes() {
            if keep[id.index()] {
                old_to_new[id.index()] = NodeId(kept_nodes.len() as u32);
                kept_nodes.push(node.clone());
                kept_names.push(self.node_name(id).to_owned());
            } else {
                removed.push(self.node_name(id).to_owned());
            }
        }

        let mut node_by_name = FxHashMap::default();
        for (i, name) in kept_names.iter().enumerate() {
            node_by_name.insert(name.clone(), NodeId(i as u32));
        }
        let g = Self::assemble(
            kept_nodes,
            self.roots.clone(),
            kept_names,
            self.class_names.clone(),
            node_by_name,
            self.class_by_name.clone(),
        );
        (g, removed)
    }
}

fn parse_cost(
    name: &str,
    raw: &serde_json::Number,
    scaling: Option<CostScaling>,
) -> Result<u64, LoadError> {
    if let Some(v) = raw.as_u64() {
        return match scaling {
            None => Ok(v),
            Some(s) => v
                .checked_mul(s.denominator)
                .ok_or_else(|| LoadError::CostOutOfRange { node: name.into() }),
        };
    }
    if let Some(v) = raw.as_i64() {
        // as_u64 failed, so v is negative
        return Err(LoadError::NegativeCost {
            node: name.into(),
            cost: v as f64,
        });
    }
    let v = raw.as_f64().unwrap_or(f64::NAN);
    if !v.is_finite() {
        return Err(LoadError::NonFiniteCost {
            node: name.into(),
            cost: v,
        });
    }
    if v < 0.0 {
        return Err(LoadError::NegativeCost {
            node: name.into(),
            cost: v,
        });
    }
    let Some(s) = scaling else {
        return Err(LoadError::NonIntegerCost {
            node: name.into(),
            cost: v,
        });
    };
    let scaled = v * s.denominator as f64;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > s.tolerance {
        return Err(LoadError::ScaledCostNotIntegral {
            node: name.into(),
            scaled,
        });
    }
    if rounded < 0.0 || rounded > u64::MAX as f64 {
        return Err(LoadError::CostOutOfRange { node: name.into() });
    }
    Ok(rounded as u64)
}

/// Extraction choices: one node per class. Keyed by dense class id; the
/// BTreeMap keeps iteration and serialization deterministic.
pub type Choices = BTreeMap<ClassId, NodeId>;

/// Outcome of checking extraction choices against the e-graph.
///
/// Invalidity is data, not an error: the report lists everything wrong.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    /// Root classes without a choice.
    pub missing_roots: Vec<ClassId>,
    /// (chosen node, child class) pairs where the child class has no choice.
    pub missing_children: Vec<(NodeId, ClassId)>,
    /// A class cycle in the chosen-term graph reachable from the roots.
    pub cycle: Option<Vec<ClassId>>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.missing_roots.is_empty() && self.missing_children.is_empty() && self.cycle.is_none()
    }
}

/// Check that `choices` form a usable extraction: every root is chosen,
/// every child class of a chosen node is chosen, and the chosen-term graph
/// restricted to classes reachable from the roots is acyclic.
pub fn validate_extraction(egraph: &EGraph, choices: &Choices) -> ValidityReport {
    let mut report = ValidityReport::default();
    for &r in egraph.roots() {
        if !choices.contains_key(&r) {
            report.missing_roots.push(r);
        }
    }

    // Walk the chosen-term graph from the roots; 0 = unseen, 1 = on the
    // current path, 2 = done.
    let mut state = vec![0u8; egraph.num_classes()];
    let mut path = Vec::new();
    for &root in egraph.roots() {
        if !choices.contains_key(&root) || state[root.index()] == 2 {
            continue;
        }
        // Iterative DFS with an explicit frame (class, next child index).
        let mut stack = vec![(root, 0usize)];
        state[root.index()] = 1;
        path.push(root);
        while let Some(&mut (class, ref mut next)) = stack.last_mut() {
            let node = choices[&class];
            let children = egraph.node(node).unique_children();
            if *next >= children.len() {
                stack.pop();
                path.pop();
                state[class.index()] = 2;
                continue;
            }
            let child = children[*next];
            *next += 1;
            match choices.get(&child) {
                None => report.missing_children.push((node, child)),
                Some(_) => match state[child.index()] {
                    0 => {
                        state[child.index()] = 1;
                        path.push(child);
                        stack.push((child, 0));
                    }
                    1 if report.cycle.is_none() => {
                        let start = path.iter().position(|&c| c == child).unwrap();
                        report.cycle = Some(path[start..].to_vec());
                    }
                    _ => {}
                },
            }
        }
    }
    report
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("choices are not a valid extraction")]
    InvalidChoices(ValidityReport),
}

/// Classes reachable from the roots by following chosen nodes' children,
/// in ascending dense order. Requires every reached class to have a choice.
pub fn reachable_classes(egraph: &EGraph, choices: &Choices) -> Vec<ClassId> {
    let mut seen = vec![false; egraph.num_classes()];
    let mut stack: Vec<ClassId> = egraph.roots().to_vec();
    for &r in egraph.roots() {
        seen[r.index()] = true;
    }
    while let Some(class) = stack.pop() {
        if let Some(&node) = choices.get(&class) {
            for child in egraph.node(node).unique_children() {
                if !seen[child.index()] {
                    seen[child.index()] = true;
                    stack.push(child);
                }
            }
        }
    }
    (0..egraph.num_classes() as u32)
        .map(ClassId)
        .filter(|c| seen[c.index()])
        .collect()
}

/// Sum of `cost` over the unique chosen nodes reachable from all roots.
/// Shared subterms are counted once, across roots too.
pub fn evaluate_dag_cost(egraph: &EGraph, choices: &Choices) -> Result<Cost, EvalError> {
    let report = validate_extraction(egraph, choices);
    if !report.is_valid() {
        return Err(EvalError::InvalidChoices(report));
    }
    let mut total = Cost::ZERO;
    for class in reachable_classes(egraph, choices) {
        total = total.add_in_range(Cost::Finite(egraph.node(choices[&class]).cost));
    }
    Ok(total)
}

/// A finished extraction: one node per reachable class, its validity, and
/// its evaluated DAG cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractionResult {
    pub choices: Choices,
    pub dag_cost: Cost,
    pub valid: bool,
}

impl ExtractionResult {
    /// Build a result from raw choices, restricting to reachable classes and
    /// evaluating validity and cost.
    pub fn from_choices(egraph: &EGraph, choices: Choices) -> ExtractionResult {
        let report = validate_extraction(egraph, &choices);
        if !report.is_valid() {
            return ExtractionResult {
                choices,
                dag_cost: Cost::Infinite,
                valid: false,
            };
        }
        let reachable: FxHashSet<ClassId> =
            reachable_classes(egraph, &choices).into_iter().collect();
        let choices: Choices = choices
            .into_iter()
            .filter(|(c, _)| reachable.contains(c))
            .collect();
        let dag_cost = evaluate_dag_cost(egraph, &choices).expect("restricted choices stay valid");
        ExtractionResult {
            choices,
            dag_cost,
            valid: true,
        }
    }

    /// The output interchange form:
    /// `{"choices": {class: node, ...}, "dag_cost": int, "valid": bool}`.
    pub fn to_json(&self, egraph: &EGraph) -> String {
        let choices: BTreeMap<&str, &str> = self
            .choices
            .iter()
            .map(|(c, n)| (egraph.class_name(*c), egraph.node_name(*n)))
            .collect();
        let out = serde_json::json!({
            "choices": choices,
            "dag_cost": self.dag_cost.finite(),
            "valid": self.valid,
        });
        serde_json::to_string(&out).expect("result serialization cannot fail")
    }
}
