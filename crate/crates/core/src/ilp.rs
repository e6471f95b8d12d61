//! The exact-extraction integer linear program over an optionally pruned
//! e-graph, its LP-format emission, warm-start emission, and solution
//! parsing.
//!
//! Per live class j, the selection variables of its members sum to the
//! class activation (row family `eq5b`); a selected node activates its child
//! classes (`eq5c`); roots are forced active (`eq5d`); level variables with
//! a big-M opposite switch forbid selection cycles (`eq5e`, with
//! M = |classes| + 1); each selection variable pairs with its opposite
//! (`eq5f`); and pruned or self-cyclic nodes are fixed to zero (`eq5g`).
//! Level variables are continuous in [0, |classes|].

use std::io::{BufRead, BufReader, Read, Write};

use rustc_hash::{FxHashMap, FxHashSet};

use crate::egraph::{
    validate_extraction, Choices, ClassId, EGraph, ExtractionResult, NodeId, ValidityReport,
};
use crate::prune::PruneMask;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum VarId {
    /// Binary: node i is selected.
    S(NodeId),
    /// Binary: class j is active.
    A(ClassId),
    /// Binary: opposite of S in the cycle rows.
    O(NodeId),
    /// Continuous level of class j.
    L(ClassId),
}

impl VarId {
    pub fn name(self) -> String {
        match self {
            VarId::S(n) => format!("s_{}", n.0),
            VarId::A(c) => format!("a_{}", c.0),
            VarId::O(n) => format!("o_{}", n.0),
            VarId::L(c) => format!("l_{}", c.0),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }

    fn holds(self, lhs: i128, rhs: i128) -> bool {
        match self {
            Cmp::Le => lhs <= rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Eq => lhs == rhs,
        }
    }
}

/// Which constraint family a row belongs to; the label doubles as the row
/// name in the emitted file.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RowTag {
    ClassSelection(ClassId),
    ChildActivation(NodeId, ClassId),
    RootActive(ClassId),
    CycleLevel(NodeId, ClassId),
    Opposite(NodeId),
    Fixed(NodeId),
}

impl RowTag {
    pub fn label(self) -> String {
        match self {
            RowTag::ClassSelection(c) => format!("eq5b_{}", c.0),
            RowTag::ChildActivation(n, c) => format!("eq5c_{}_{}", n.0, c.0),
            RowTag::RootActive(c) => format!("eq5d_{}", c.0),
            RowTag::CycleLevel(n, c) => format!("eq5e_{}_{}", n.0, c.0),
            RowTag::Opposite(n) => format!("eq5f_{}", n.0),
            RowTag::Fixed(n) => format!("eq5g_{}", n.0),
        }
    }
}

/// One linear row: `terms cmp rhs`.
#[derive(Clone, Debug)]
pub struct Row {
    pub tag: RowTag,
    pub terms: Vec<(VarId, i64)>,
    pub cmp: Cmp,
    pub rhs: i64,
}

/// A complete variable assignment for checking rows; missing variables
/// read as zero.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    values: FxHashMap<VarId, i64>,
}

impl Assignment {
    pub fn set(&mut self, var: VarId, value: i64) {
        self.values.insert(var, value);
    }

    pub fn get(&self, var: VarId) -> i64 {
        self.values.get(&var).copied().unwrap_or(0)
    }

    /// Assignment induced by a valid extraction: selected nodes and their
    /// classes on, opposites complemented, levels set to the topological
    /// depth of each chosen class (leaves at zero).
    pub fn from_extraction(model: &IlpModel, egraph: &EGraph, choices: &Choices) -> Assignment {
        let mut a = Assignment::default();
        for &node in model.selectable() {
            let class = egraph.node(node).class;
            let on = choices.get(&class) == Some(&node);
            a.set(VarId::S(node), on as i64);
            a.set(VarId::O(node), 1 - on as i64);
        }
        for &class in model.live_classes() {
            a.set(VarId::A(class), choices.contains_key(&class) as i64);
        }
        let mut depth: FxHashMap<ClassId, i64> = FxHashMap::default();
        for &class in choices.keys() {
            class_depth(egraph, choices, class, &mut depth);
        }
        for &class in model.live_classes() {
            a.set(VarId::L(class), depth.get(&class).copied().unwrap_or(0));
        }
        a
    }
}

/// Topological depth of a chosen class: leaves at zero, parents above their
/// children. Back-edges are skipped so a cyclic selection still gets finite
/// levels; no finite levels can satisfy every cycle row of such a
/// selection, so the violation surfaces in `check_assignment`.
fn class_depth(
    egraph: &EGraph,
    choices: &Choices,
    class: ClassId,
    memo: &mut FxHashMap<ClassId, i64>,
) -> i64 {
    const IN_PROGRESS: i64 = -1;
    if let Some(&d) = memo.get(&class) {
        return d.max(0);
    }
    memo.insert(class, IN_PROGRESS);
    let node = choices[&class];
    let mut d = 0;
    for child in egraph.node(node).unique_children() {
        if choices.contains_key(&child) && memo.get(&child) != Some(&IN_PROGRESS) {
            d = d.max(1 + class_depth(egraph, choices, child, memo));
        }
    }
    memo.insert(class, d);
    d
}

#[derive(Debug, thiserror::Error)]
pub enum IlpError {
    #[error("root class {0} has no selectable node under the mask")]
    DeadRoot(String),
    #[error("warm-start extraction is not valid")]
    WarmInvalid,
    #[error("warm-start selection {0} is excluded by the prune mask")]
    WarmViolatesMask(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SolutionError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected `<variable> <value>`")]
    BadLine(usize),
    #[error("line {line}: unknown variable `{name}`")]
    UnknownVariable { line: usize, name: String },
    #[error("class {0}: more than one selection variable set")]
    DuplicateSelection(String),
    #[error("class {0}: active but no selection variable set")]
    ActiveWithoutSelection(String),
    #[error("node {0}: selected but its class is inactive")]
    SelectedInInactive(String),
    #[error("node {0}: selected but fixed to zero by the model")]
    SelectedFixed(String),
    #[error("solution does not decode to a valid extraction: {0:?}")]
    NotExtractable(ValidityReport),
}

#[derive(Debug, thiserror::Error)]
#[error("model carries no warm start")]
pub struct NoWarmStart;

/// The built model. Variables exist only for non-pruned nodes of live
/// classes, except that pruned nodes of surviving classes keep a selection
/// variable fixed to zero by its `eq5g` row, which makes the emitted file
/// self-documenting. Fully dead classes are dropped.
pub struct IlpModel {
    big_m: u64,
    level_bound: u64,
    live_classes: Vec<ClassId>,
    selectable: Vec<NodeId>,
    fixed: Vec<NodeId>,
    objective: Vec<(NodeId, u64)>,
    rows: Vec<Row>,
    warm: Vec<(VarId, u8)>,
    num_nodes: usize,
    node_kind: Vec<NodeVarKind>,
    class_live: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum NodeVarKind {
    Selectable,
    Fixed,
    Absent,
}

impl IlpModel {
    pub fn big_m(&self) -> u64 {
        self.big_m
    }

    pub fn live_classes(&self) -> &[ClassId] {
        &self.live_classes
    }

    pub fn selectable(&self) -> &[NodeId] {
        &self.selectable
    }

    /// Nodes whose selection variable exists but is fixed to zero.
    pub fn fixed_nodes(&self) -> &[NodeId] {
        &self.fixed
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn has_warm_start(&self) -> bool {
        !self.warm.is_empty()
    }

    pub fn warm_start(&self) -> &[(VarId, u8)] {
        &self.warm
    }

    pub fn objective_value(&self, assignment: &Assignment) -> u64 {
        self.objective
            .iter()
            .map(|&(n, c)| c * assignment.get(VarId::S(n)) as u64)
            .sum()
    }

    /// First violated row, if any.
    pub fn check_assignment(&self, assignment: &Assignment) -> Result<(), RowTag> {
        for row in &self.rows {
            let lhs: i128 = row
                .terms
                .iter()
                .map(|&(v, c)| c as i128 * assignment.get(v) as i128)
                .sum();
            if !row.cmp.holds(lhs, row.rhs as i128) {
                return Err(row.tag);
            }
        }
        Ok(())
    }
}

/// Build the model for the (optionally pruned) e-graph, with an optional
/// warm start taken from a heuristic extraction.
pub fn build_ilp(
    egraph: &EGraph,
    mask: Option<&PruneMask>,
    warm: Option<&ExtractionResult>,
) -> Result<IlpModel, IlpError> {
    let num_classes = egraph.num_classes();
    let big_m = num_classes as u64 + 1;

    let mut class_live = vec![true; num_classes];
    if let Some(mask) = mask {
        for &c in mask.dead_classes() {
            class_live[c.index()] = false;
        }
    }
    for &root in egraph.roots() {
        if !class_live[root.index()] {
            return Err(IlpError::DeadRoot(egraph.class_name(root).to_owned()));
        }
    }

    let mut node_kind = vec![NodeVarKind::Absent; egraph.num_nodes()];
    let mut selectable = Vec::new();
    let mut fixed = Vec::new();
    for (id, node) in egraph.nodes() {
        if !class_live[node.class.index()] {
            continue;
        }
        let pruned = mask.is_some_and(|m| m.is_pruned(id));
        if pruned || node.self_cyclic {
            node_kind[id.index()] = NodeVarKind::Fixed;
            fixed.push(id);
        } else {
            node_kind[id.index()] = NodeVarKind::Selectable;
            selectable.push(id);
        }
    }

    let live_classes: Vec<ClassId> = egraph
        .class_ids()
        .filter(|c| class_live[c.index()])
        .collect();

    let objective: Vec<(NodeId, u64)> = selectable
        .iter()
        .map(|&n| (n, egraph.node(n).cost))
        .collect();

    let mut rows = Vec::new();
    for &class in &live_classes {
        let mut terms: Vec<(VarId, i64)> = egraph
            .members(class)
            .iter()
            .filter(|n| node_kind[n.index()] == NodeVarKind::Selectable)
            .map(|&n| (VarId::S(n), 1))
            .collect();
        terms.push((VarId::A(class), -1));
        rows.push(Row {
            tag: RowTag::ClassSelection(class),
            terms,
            cmp: Cmp::Eq,
            rhs: 0,
        });
    }
    for &node in &selectable {
        for child in egraph.node(node).unique_children() {
            rows.push(Row {
                tag: RowTag::ChildActivation(node, child),
                terms: vec![(VarId::S(node), 1), (VarId::A(child), -1)],
                cmp: Cmp::Le,
                rhs: 0,
            });
        }
    }
    for &root in egraph.roots() {
        rows.push(Row {
            tag: RowTag::RootActive(root),
            terms: vec![(VarId::A(root), 1)],
            cmp: Cmp::Eq,
            rhs: 1,
        });
    }
    for &node in &selectable {
        let class = egraph.node(node).class;
        for child in egraph.node(node).unique_children() {
            if child == class {
                continue;
            }
            rows.push(Row {
                tag: RowTag::CycleLevel(node, child),
                terms: vec![
                    (VarId::L(class), 1),
                    (VarId::L(child), -1),
                    (VarId::O(node), big_m as i64),
                ],
                cmp: Cmp::Ge,
                rhs: 1,
            });
        }
    }
    for &node in &selectable {
        rows.push(Row {
            tag: RowTag::Opposite(node),
            terms: vec![(VarId::S(node), 1), (VarId::O(node), 1)],
            cmp: Cmp::Eq,
            rhs: 1,
        });
    }
    for &node in &fixed {
        rows.push(Row {
            tag: RowTag::Fixed(node),
            terms: vec![(VarId::S(node), 1)],
            cmp: Cmp::Eq,
            rhs: 0,
        });
    }

    let mut warm_entries = Vec::new();
    if let Some(warm) = warm {
        if !warm.valid {
            return Err(IlpError::WarmInvalid);
        }
        let chosen: FxHashSet<NodeId> = warm.choices.values().copied().collect();
        for &node in &chosen {
            if node_kind[node.index()] != NodeVarKind::Selectable {
                return Err(IlpError::WarmViolatesMask(
                    egraph.node_name(node).to_owned(),
                ));
            }
        }
        for &node in &selectable {
            let on = chosen.contains(&node) as u8;
            warm_entries.push((VarId::S(node), on));
        }
        for &class in &live_classes {
            warm_entries.push((VarId::A(class), warm.choices.contains_key(&class) as u8));
        }
        for &node in &selectable {
            let on = chosen.contains(&node) as u8;
            warm_entries.push((VarId::O(node), 1 - on));
        }
    }

    Ok(IlpModel {
        big_m,
        level_bound: num_classes as u64,
        live_classes,
        selectable,
        fixed,
        objective,
        rows,
        warm: warm_entries,
        num_nodes: egraph.num_nodes(),
        node_kind,
        class_live,
    })
}

fn push_term(out: &mut String, first: bool, coeff: i64, name: &str) {
    if first {
        if coeff < 0 {
            out.push_str("- ");
        }
    } else if coeff < 0 {
        out.push_str(" - ");
    } else {
        out.push_str(" + ");
    }
    let mag = coeff.unsigned_abs();
    if mag != 1 {
        out.push_str(&mag.to_string());
        out.push(' ');
    }
    out.push_str(name);
}

impl IlpModel {
    /// Write the model in the common CPLEX-LP text subset. Emission is
    /// deterministic: same model, same bytes.
    pub fn write_lp<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        sink.write_all(self.lp_string().as_bytes())
    }

    pub fn lp_string(&self) -> String {
        let mut out = String::new();
        out.push_str("Minimize\n obj:");
        if self.objective.is_empty() {
            out.push_str(" 0 a_x_unused");
        }
        for (i, &(node, cost)) in self.objective.iter().enumerate() {
            if i % 8 == 0 && i > 0 {
                out.push_str("\n  ");
            } else {
                out.push(' ');
            }
            if i > 0 {
                out.push_str("+ ");
            }
            out.push_str(&cost.to_string());
            out.push(' ');
            out.push_str(&VarId::S(node).name());
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            out.push(' ');
            out.push_str(&row.tag.label());
            out.push_str(": ");
            let mut body = String::new();
            for (i, &(var, coeff)) in row.terms.iter().enumerate() {
                push_term(&mut body, i == 0, coeff, &var.name());
            }
            out.push_str(&body);
            out.push(' ');
            out.push_str(row.cmp.symbol());
            out.push(' ');
            out.push_str(&row.rhs.to_string());
            out.push('\n');
        }
        out.push_str("Bounds\n");
        for &class in &self.live_classes {
            out.push_str(&format!(
                " 0 <= {} <= {}\n",
                VarId::L(class).name(),
                self.level_bound
            ));
        }
        out.push_str("Binaries\n");
        let mut names: Vec<String> = Vec::new();
        for &n in &self.selectable {
            names.push(VarId::S(n).name());
        }
        for &n in &self.fixed {
            names.push(VarId::S(n).name());
        }
        for &c in &self.live_classes {
            names.push(VarId::A(c).name());
        }
        for &n in &self.selectable {
            names.push(VarId::O(n).name());
        }
        for chunk in names.chunks(16) {
            out.push(' ');
            out.push_str(&chunk.join(" "));
            out.push('\n');
        }
        out.push_str("End\n");
        out
    }

    /// Write the warm start as one `<variable> <0|1>` line per assigned
    /// selection, activation, and opposite variable.
    pub fn write_warm_start<W: Write>(&self, mut sink: W) -> Result<(), WarmStartWriteError> {
        if self.warm.is_empty() {
            return Err(WarmStartWriteError::NoWarmStart(NoWarmStart));
        }
        let mut out = String::new();
        for (var, value) in &self.warm {
            out.push_str(&var.name());
            out.push(' ');
            out.push_str(&value.to_string());
            out.push('\n');
        }
        sink.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Parse a solver solution given as `<variable> <value>` lines (blank
    /// lines and `#` comments are skipped), decode the active classes'
    /// selections, and validate and cost the resulting extraction.
    pub fn parse_solution<R: Read>(
        &self,
        egraph: &EGraph,
        source: R,
    ) -> Result<ExtractionResult, SolutionError> {
        let reader = BufReader::new(source);
        let mut s_on: FxHashMap<NodeId, bool> = FxHashMap::default();
        let mut a_on: FxHashMap<ClassId, bool> = FxHashMap::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(SolutionError::BadLine(lineno + 1));
            };
            let value: f64 = value
                .parse()
                .map_err(|_| SolutionError::BadLine(lineno + 1))?;
            let on = value > 0.5;
            match self.lookup(name) {
                Some(VarId::S(n)) => {
                    s_on.insert(n, on);
                }
                Some(VarId::A(c)) => {
                    a_on.insert(c, on);
                }
                Some(VarId::O(_)) | Some(VarId::L(_)) => {}
                None => {
                    return Err(SolutionError::UnknownVariable {
                        line: lineno + 1,
                        name: name.to_owned(),
                    })
                }
            }
        }

        let mut choices = Choices::new();
        for &class in &self.live_classes {
            let selected: Vec<NodeId> = egraph
                .members(class)
                .iter()
                .filter(|n| s_on.get(n).copied().unwrap_or(false))
                .copied()
                .collect();
            let active = a_on.get(&class).copied().unwrap_or(false);
            match (active, selected.as_slice()) {
                (_, sel) if sel.len() > 1 => {
                    return Err(SolutionError::DuplicateSelection(
                        egraph.class_name(class).to_owned(),
                    ));
                }
                (true, []) => {
                    return Err(SolutionError::ActiveWithoutSelection(
                        egraph.class_name(class).to_owned(),
                    ));
                }
                (false, [node]) => {
                    return Err(SolutionError::SelectedInInactive(
                        egraph.node_name(*node).to_owned(),
                    ));
                }
                (true, [node]) => {
                    if self.node_kind[node.index()] == NodeVarKind::Fixed {
                        return Err(SolutionError::SelectedFixed(
                            egraph.node_name(*node).to_owned(),
                        ));
                    }
                    choices.insert(class, *node);
                }
                _ => {}
            }
        }

        let report = validate_extraction(egraph, &choices);
        if !report.is_valid() {
            return Err(SolutionError::NotExtractable(report));
        }
        Ok(ExtractionResult::from_choices(egraph, choices))
    }

    fn lookup(&self, name: &str) -> Option<VarId> {
        let (prefix, idx) = name.split_once('_')?;
        let idx: u32 = idx.parse().ok()?;
        match prefix {
            "s" => {
                let id = NodeId(idx);
                ((idx as usize) < self.num_nodes
                    && self.node_kind[id.index()] != NodeVarKind::Absent)
                    .then_some(VarId::S(id))
            }
            "o" => {
                let id = NodeId(idx);
                ((idx as usize) < self.num_nodes
                    && self.node_kind[id.index()] == NodeVarKind::Selectable)
                    .then_some(VarId::O(id))
            }
            "a" | "l" => {
                let id = ClassId(idx);
                ((idx as usize) < self.class_live.len() && self.class_live[id.index()]).then(|| {
                    if prefix == "a" {
                        VarId::A(id)
                    } else {
                        VarId::L(id)
                    }
                })
            }
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WarmStartWriteError {
    #[error(transparent)]
    NoWarmStart(NoWarmStart),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
