//! Shared domain types: forward graphs, compute/data graphs, chains,
//! block options and schedules.
//!
//! All sizes are integer bytes and all times are integer microseconds, so
//! every downstream computation (ILP, DP, simulation) is exact.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Time in microseconds.
pub type Micros = u64;
/// Memory size in bytes.
pub type Bytes = u64;

// ---------------------------------------------------------------------------
// Forward graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardNode {
    pub id: String,
    pub op_signature: String,
    pub output_shape: Vec<u64>,
    pub param_signature: String,
    pub predecessors: Vec<String>,
}

/// A simplified forward graph. `nodes` is stored in topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardGraph {
    pub nodes: Vec<ForwardNode>,
    pub input_ids: Vec<String>,
    pub output_id: String,
}

impl ForwardGraph {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Checks id uniqueness, reference integrity, topological order and
    /// the single-sink output rule. Returns a description of each breach.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if seen.insert(n.id.as_str(), i).is_some() {
                out.push(format!("duplicate node id `{}`", n.id));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for p in &n.predecessors {
                match seen.get(p.as_str()) {
                    None => out.push(format!("node `{}` references unknown predecessor `{p}`", n.id)),
                    Some(&j) if j >= i => out.push(format!(
                        "node `{}` is listed before its predecessor `{p}` (order is not topological)",
                        n.id
                    )),
                    _ => {}
                }
            }
        }
        for id in &self.input_ids {
            if !seen.contains_key(id.as_str()) {
                out.push(format!("unknown input id `{id}`"));
            }
        }
        match seen.get(self.output_id.as_str()) {
            None => out.push(format!("unknown output id `{}`", self.output_id)),
            Some(_) => {
                if self
                    .nodes
                    .iter()
                    .any(|n| n.predecessors.contains(&self.output_id))
                {
                    out.push(format!("output node `{}` has successors", self.output_id));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Compute/data graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CKind {
    Forward,
    Backward,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DKind {
    Data,
    Grad,
    Phantom,
}

/// A computation. `deps` and `outputs` index into the owning graph's `dnodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CNode {
    pub id: String,
    pub kind: CKind,
    pub time: Micros,
    pub tmp_mem: Bytes,
    pub deps: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// A tensor. `parents` index into the owning graph's `cnodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DNode {
    pub id: String,
    pub size: Bytes,
    pub kind: DKind,
    pub parents: Vec<usize>,
}

/// Forward + backward graph of one block. `cnodes` is in the fixed
/// topological order used by the block ILP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CDGraph {
    pub cnodes: Vec<CNode>,
    pub dnodes: Vec<DNode>,
    pub input_data: usize,
    pub output_data: usize,
    /// Gradient of `input_data`, produced by the backward pass. Required
    /// when the block is part of a chain.
    pub input_grad: Option<usize>,
    pub loss_index: usize,
}

/// The three edge sets the ILP is written over.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSets {
    /// `(compute, data)` for every compute -> data edge, ordered by compute then data.
    pub children_of_comp: Vec<(usize, usize)>,
    /// For each data node, the computes producing it (sorted).
    pub parents_of_data: Vec<Vec<usize>>,
    /// For each data node, the computes consuming it (sorted).
    pub children_of_data: Vec<Vec<usize>>,
}

impl EdgeSets {
    /// Sorted union of parents and children of `d`.
    pub fn related(&self, d: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.parents_of_data[d]
            .iter()
            .chain(&self.children_of_data[d])
            .copied()
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub fn derive_edge_sets(g: &CDGraph) -> EdgeSets {
    let mut children_of_comp = Vec::new();
    let mut parents_of_data = vec![Vec::new(); g.dnodes.len()];
    let mut children_of_data = vec![Vec::new(); g.dnodes.len()];
    for (t, c) in g.cnodes.iter().enumerate() {
        let mut outs = c.outputs.clone();
        outs.sort_unstable();
        outs.dedup();
        for d in outs {
            children_of_comp.push((t, d));
            parents_of_data[d].push(t);
        }
        let mut deps = c.deps.clone();
        deps.sort_unstable();
        deps.dedup();
        for d in deps {
            children_of_data[d].push(t);
        }
    }
    EdgeSets {
        children_of_comp,
        parents_of_data,
        children_of_data,
    }
}

impl CDGraph {
    pub fn cnode_index(&self, id: &str) -> Option<usize> {
        self.cnodes.iter().position(|c| c.id == id)
    }

    pub fn dnode_index(&self, id: &str) -> Option<usize> {
        self.dnodes.iter().position(|d| d.id == id)
    }

    pub fn input_size(&self) -> Bytes {
        self.dnodes[self.input_data].size
    }

    pub fn output_size(&self) -> Bytes {
        self.dnodes[self.output_data].size
    }

    /// The gradient produced by the loss node.
    pub fn output_grad(&self) -> usize {
        self.cnodes[self.loss_index].outputs[0]
    }

    /// Data nodes without any producer; resident for the whole block.
    pub fn is_source(&self, d: usize) -> bool {
        self.dnodes[d].parents.is_empty()
    }

    /// Sum of all compute times when every node runs once.
    pub fn one_pass_time(&self) -> Micros {
        self.cnodes.iter().map(|c| c.time).sum()
    }

    pub fn forward_time(&self) -> Micros {
        self.cnodes
            .iter()
            .filter(|c| c.kind == CKind::Forward)
            .map(|c| c.time)
            .sum()
    }

    pub fn backward_time(&self) -> Micros {
        self.cnodes
            .iter()
            .filter(|c| c.kind == CKind::Backward)
            .map(|c| c.time)
            .sum()
    }
}

/// Builder that keeps `DNode::parents` in sync with compute outputs.
#[derive(Debug, Default)]
pub struct CDGraphBuilder {
    cnodes: Vec<CNode>,
    dnodes: Vec<DNode>,
    input_data: Option<usize>,
    output_data: Option<usize>,
    input_grad: Option<usize>,
}

impl CDGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn data(&mut self, id: &str, size: Bytes, kind: DKind) -> usize {
        self.dnodes.push(DNode {
            id: id.to_string(),
            size,
            kind,
            parents: Vec::new(),
        });
        self.dnodes.len() - 1
    }

    pub fn compute(
        &mut self,
        id: &str,
        kind: CKind,
        time: Micros,
        tmp_mem: Bytes,
        deps: &[usize],
        outputs: &[usize],
    ) -> usize {
        let t = self.cnodes.len();
        for &d in outputs {
            self.dnodes[d].parents.push(t);
        }
        self.cnodes.push(CNode {
            id: id.to_string(),
            kind,
            time,
            tmp_mem,
            deps: deps.to_vec(),
            outputs: outputs.to_vec(),
        });
        t
    }

    pub fn input(&mut self, d: usize) -> &mut Self {
        self.input_data = Some(d);
        self
    }

    pub fn output(&mut self, d: usize) -> &mut Self {
        self.output_data = Some(d);
        self
    }

    pub fn input_grad(&mut self, d: usize) -> &mut Self {
        self.input_grad = Some(d);
        self
    }

    /// Finishes the graph. The loss index is the first `Loss` node (or 0
    /// when absent, which validation then reports).
    pub fn build(self) -> CDGraph {
        let loss_index = self
            .cnodes
            .iter()
            .position(|c| c.kind == CKind::Loss)
            .unwrap_or(0);
        CDGraph {
            cnodes: self.cnodes,
            dnodes: self.dnodes,
            input_data: self.input_data.unwrap_or(0),
            output_data: self.output_data.unwrap_or(0),
            input_grad: self.input_grad,
            loss_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    DanglingReference,
    DuplicateId,
    LossCount,
    LossShape,
    EmptyOutputs,
    ParentMismatch,
    PhantomDegree,
    Orphan,
    Acyclic,
    TopologicalOrder,
    PhaseOrder,
    InputOutput,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::DanglingReference => "dangling-reference",
            Rule::DuplicateId => "duplicate-id",
            Rule::LossCount => "loss-count",
            Rule::LossShape => "loss-shape",
            Rule::EmptyOutputs => "empty-outputs",
            Rule::ParentMismatch => "parent-mismatch",
            Rule::PhantomDegree => "phantom-degree",
            Rule::Orphan => "orphan-data",
            Rule::Acyclic => "acyclic",
            Rule::TopologicalOrder => "topological-order",
            Rule::PhaseOrder => "phase-order",
            Rule::InputOutput => "input-output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub subject: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.subject)
    }
}

fn violation(rule: Rule, subject: impl Into<String>) -> Violation {
    Violation {
        rule,
        subject: subject.into(),
    }
}

/// Lists every breached `CDGraph` invariant. Empty means valid.
pub fn validate_cdgraph(g: &CDGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let nd = g.dnodes.len();
    let nc = g.cnodes.len();

    // Reference integrity first; later checks index freely.
    for c in &g.cnodes {
        for &d in c.deps.iter().chain(&c.outputs) {
            if d >= nd {
                out.push(violation(Rule::DanglingReference, format!("cnode `{}` -> data #{d}", c.id)));
            }
        }
    }
    for d in &g.dnodes {
        for &p in &d.parents {
            if p >= nc {
                out.push(violation(Rule::DanglingReference, format!("dnode `{}` <- compute #{p}", d.id)));
            }
        }
    }
    for (name, idx) in [("input_data", g.input_data), ("output_data", g.output_data)] {
        if idx >= nd {
            out.push(violation(Rule::DanglingReference, format!("{name} #{idx}")));
        }
    }
    if let Some(ig) = g.input_grad {
        if ig >= nd {
            out.push(violation(Rule::DanglingReference, format!("input_grad #{ig}")));
        }
    }
    if !out.is_empty() {
        return out;
    }

    let mut ids = HashSet::new();
    for c in &g.cnodes {
        if !ids.insert(c.id.as_str()) {
            out.push(violation(Rule::DuplicateId, format!("`{}`", c.id)));
        }
    }
    for d in &g.dnodes {
        if !ids.insert(d.id.as_str()) {
            out.push(violation(Rule::DuplicateId, format!("`{}`", d.id)));
        }
    }

    let losses: Vec<usize> = (0..nc).filter(|&t| g.cnodes[t].kind == CKind::Loss).collect();
    if losses.len() != 1 {
        out.push(violation(Rule::LossCount, format!("found {} loss nodes", losses.len())));
    } else if losses[0] != g.loss_index {
        out.push(violation(
            Rule::LossCount,
            format!("loss_index {} does not point at the loss node", g.loss_index),
        ));
    }

    for (t, c) in g.cnodes.iter().enumerate() {
        if c.kind == CKind::Loss {
            if c.time != 0 {
                out.push(violation(Rule::LossShape, format!("loss `{}` has time {}", c.id, c.time)));
            }
            if c.tmp_mem != 0 {
                out.push(violation(Rule::LossShape, format!("loss `{}` has tmp_mem {}", c.id, c.tmp_mem)));
            }
            if c.deps != [g.output_data] {
                out.push(violation(
                    Rule::LossShape,
                    format!("loss `{}` must depend exactly on the block output", c.id),
                ));
            }
            if c.outputs.len() != 1 {
                out.push(violation(Rule::LossShape, format!("loss `{}` must have one output", c.id)));
            }
        } else if c.outputs.is_empty() {
            out.push(violation(Rule::EmptyOutputs, format!("cnode `{}`", c.id)));
        }
        for &d in &c.outputs {
            if !g.dnodes[d].parents.contains(&t) {
                out.push(violation(
                    Rule::ParentMismatch,
                    format!("`{}` outputs `{}` but is not among its parents", c.id, g.dnodes[d].id),
                ));
            }
        }
    }

    let edges = derive_edge_sets(g);
    for (d, dn) in g.dnodes.iter().enumerate() {
        for &p in &dn.parents {
            if !g.cnodes[p].outputs.contains(&d) {
                out.push(violation(
                    Rule::ParentMismatch,
                    format!("`{}` lists parent `{}` which does not output it", dn.id, g.cnodes[p].id),
                ));
            }
        }
        if dn.kind == DKind::Phantom
            && (dn.parents.len() != 1 || edges.children_of_data[d].len() != 1)
        {
            out.push(violation(
                Rule::PhantomDegree,
                format!(
                    "phantom `{}` has {} parents and {} consumers",
                    dn.id,
                    dn.parents.len(),
                    edges.children_of_data[d].len()
                ),
            ));
        }
        if dn.parents.is_empty() && d != g.input_data {
            out.push(violation(Rule::Orphan, format!("`{}` has no producer", dn.id)));
        }
    }
    if !g.dnodes[g.input_data].parents.is_empty() {
        out.push(violation(Rule::InputOutput, "input_data must not have a producer"));
    }
    if g.input_data == g.output_data {
        out.push(violation(Rule::InputOutput, "input_data and output_data coincide"));
    }
    if !g.dnodes[g.output_data]
        .parents
        .iter()
        .all(|&p| g.cnodes[p].kind == CKind::Forward)
        || g.dnodes[g.output_data].parents.is_empty()
    {
        out.push(violation(Rule::InputOutput, "output_data must be produced by forward nodes"));
    }
    if let Some(ig) = g.input_grad {
        let dn = &g.dnodes[ig];
        if dn.parents.is_empty() || dn.parents.iter().any(|&p| g.cnodes[p].kind != CKind::Backward) {
            out.push(violation(Rule::InputOutput, "input_grad must be produced by backward nodes"));
        }
        if !edges.children_of_data[ig].is_empty() {
            out.push(violation(Rule::InputOutput, "input_grad must not be consumed inside the block"));
        }
    }

    if let Some(cycle_at) = find_cycle(g) {
        out.push(violation(Rule::Acyclic, format!("cycle through `{}`", g.cnodes[cycle_at].id)));
    } else {
        for (t, c) in g.cnodes.iter().enumerate() {
            for &d in &c.deps {
                if let Some(&p) = g.dnodes[d].parents.iter().find(|&&p| p >= t) {
                    out.push(violation(
                        Rule::TopologicalOrder,
                        format!("`{}` consumes `{}` produced later by `{}`", c.id, g.dnodes[d].id, g.cnodes[p].id),
                    ));
                }
            }
        }
    }

    if losses.len() == 1 {
        let tl = losses[0];
        for (t, c) in g.cnodes.iter().enumerate() {
            let bad = match c.kind {
                CKind::Forward => t > tl,
                CKind::Backward => t < tl,
                CKind::Loss => false,
            };
            if bad {
                out.push(violation(Rule::PhaseOrder, format!("`{}` is on the wrong side of the loss", c.id)));
            }
        }
    }
    out
}

/// Returns a compute node on a cycle, if any (Kahn's algorithm on the
/// compute-to-compute projection).
fn find_cycle(g: &CDGraph) -> Option<usize> {
    let n = g.cnodes.len();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (t, c) in g.cnodes.iter().enumerate() {
        for &d in &c.deps {
            for &p in &g.dnodes[d].parents {
                succ[p].push(t);
                indeg[t] += 1;
            }
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&t| indeg[t] == 0).collect();
    let mut seen = 0;
    while let Some(t) = stack.pop() {
        seen += 1;
        for &s in &succ[t] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                stack.push(s);
            }
        }
    }
    if seen == n {
        None
    } else {
        (0..n).find(|&t| indeg[t] > 0)
    }
}

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

/// A sequence of blocks. Block `i` consumes activation `a_i` and produces
/// `a_{i+1}`; identical blocks share an equivalence class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub blocks: Vec<CDGraph>,
    pub equiv_class: Vec<usize>,
}

impl Chain {
    /// Chain with every block in its own class.
    pub fn new(blocks: Vec<CDGraph>) -> Self {
        let equiv_class = (0..blocks.len()).collect();
        Chain { blocks, equiv_class }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `a_0 ..= a_L`.
    pub fn act_sizes(&self) -> Vec<Bytes> {
        let mut v: Vec<Bytes> = self.blocks.iter().map(|b| b.input_size()).collect();
        if let Some(last) = self.blocks.last() {
            v.push(last.output_size());
        }
        v
    }

    /// Makespan of one forward+backward pass with no recomputation.
    /// Only the last block's loss runs.
    pub fn one_pass_time(&self) -> Micros {
        let loss = self.blocks.last().map_or(0, |b| b.cnodes[b.loss_index].time);
        self.blocks.iter().map(|b| b.forward_time() + b.backward_time()).sum::<Micros>() + loss
    }

    /// Number of distinct classes.
    pub fn class_count(&self) -> usize {
        let mut c = self.equiv_class.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// Representative (first member) for each class, in order of first appearance.
    pub fn class_representatives(&self) -> Vec<(usize, usize)> {
        let mut seen = HashSet::new();
        let mut reps = Vec::new();
        for (i, &c) in self.equiv_class.iter().enumerate() {
            if seen.insert(c) {
                reps.push((c, i));
            }
        }
        reps
    }
}

/// Checks every per-block invariant plus the chain-level ones: seam sizes,
/// gradient sizes, and structural identity within equivalence classes.
pub fn validate_chain(chain: &Chain) -> Vec<String> {
    let mut out = Vec::new();
    if chain.blocks.is_empty() {
        out.push("chain has no blocks".to_string());
        return out;
    }
    if chain.equiv_class.len() != chain.blocks.len() {
        out.push(format!(
            "equiv_class has {} entries for {} blocks",
            chain.equiv_class.len(),
            chain.blocks.len()
        ));
        return out;
    }
    let mut block_ok = true;
    for (i, b) in chain.blocks.iter().enumerate() {
        for v in validate_cdgraph(b) {
            out.push(format!("block {i}: {v}"));
            block_ok = false;
        }
    }
    if !block_ok {
        return out;
    }
    for (i, b) in chain.blocks.iter().enumerate() {
        match b.input_grad {
            None => out.push(format!("block {i}: missing input_grad")),
            Some(ig) if b.dnodes[ig].size != b.input_size() => out.push(format!(
                "block {i}: input_grad size {} differs from input size {}",
                b.dnodes[ig].size,
                b.input_size()
            )),
            _ => {}
        }
        let og = b.output_grad();
        if b.dnodes[og].size != b.output_size() {
            out.push(format!(
                "block {i}: loss output size {} differs from output size {}",
                b.dnodes[og].size,
                b.output_size()
            ));
        }
        if i + 1 < chain.blocks.len() {
            let next = &chain.blocks[i + 1];
            if b.output_size() != next.input_size() {
                out.push(format!(
                    "seam {}: block {i} output is {} bytes but block {} input is {} bytes",
                    i + 1,
                    b.output_size(),
                    i + 1,
                    next.input_size()
                ));
            }
        }
    }
    for (_, rep) in chain.class_representatives() {
        for (i, &c) in chain.equiv_class.iter().enumerate() {
            if c == chain.equiv_class[rep]
                && i != rep
                && !crate::partition::cdgraphs_equal(&chain.blocks[rep], &chain.blocks[i])
            {
                out.push(format!(
                    "blocks {rep} and {i} share class {c} but are not structurally identical"
                ));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Options and schedules
// ---------------------------------------------------------------------------

/// One step of a block-local op list; indices refer to the block's graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockStep {
    Compute(usize),
    Forget(usize),
}

/// A block-level execution strategy.
///
/// Memory figures are measured in chain context: `peak_fwd` starts from the
/// resident input; `save_mem` is everything resident when the forward
/// finishes (input, output and retained intermediates); `peak_bwd` starts
/// from that set plus the incoming output gradient. `bwd_ops` frees the
/// block output after its last reader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOption {
    pub option_id: usize,
    pub time_fwd: Micros,
    pub time_bwd: Option<Micros>,
    pub save_mem: Bytes,
    pub peak_fwd: Bytes,
    pub peak_bwd: Option<Bytes>,
    pub fwd_ops: Vec<BlockStep>,
    pub bwd_ops: Vec<BlockStep>,
}

impl BlockOption {
    pub fn total_time(&self) -> Micros {
        self.time_fwd + self.time_bwd.unwrap_or(0)
    }
}

/// One chain-level action. Compute/forget targets are node ids within the
/// named block; block ops name an option of that block's menu.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScheduleOp {
    Compute { block: usize, cnode: String },
    Forget { block: usize, dnode: String },
    BlockFwd { block: usize, option: usize },
    BlockBwd { block: usize, option: usize },
}

impl fmt::Display for ScheduleOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleOp::Compute { block, cnode } => write!(f, "compute {block}:{cnode}"),
            ScheduleOp::Forget { block, dnode } => write!(f, "forget {block}:{dnode}"),
            ScheduleOp::BlockFwd { block, option } => write!(f, "block_fwd {block}/{option}"),
            ScheduleOp::BlockBwd { block, option } => write!(f, "block_bwd {block}/{option}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScheduleMeta {
    pub budget: Option<Bytes>,
    pub makespan: Option<Micros>,
    pub peak: Option<Bytes>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    pub ops: Vec<ScheduleOp>,
    pub meta: ScheduleMeta,
}

impl Schedule {
    pub fn new(ops: Vec<ScheduleOp>) -> Self {
        Schedule {
            ops,
            meta: ScheduleMeta::default(),
        }
    }

    /// Converts block-local steps of block `block` into schedule ops.
    pub fn from_block_steps(g: &CDGraph, block: usize, steps: &[BlockStep]) -> Self {
        Schedule::new(steps.iter().map(|s| block_step_op(g, block, *s)).collect())
    }
}

pub fn block_step_op(g: &CDGraph, block: usize, s: BlockStep) -> ScheduleOp {
    match s {
        BlockStep::Compute(c) => ScheduleOp::Compute {
            block,
            cnode: g.cnodes[c].id.clone(),
        },
        BlockStep::Forget(d) => ScheduleOp::Forget {
            block,
            dnode: g.dnodes[d].id.clone(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// input -> f1 -> d1 -> f2 -> out -> loss -> gout -> b2 -> g1 -> b1 -> gin
    pub(crate) fn toy() -> CDGraph {
        let mut b = CDGraphBuilder::new();
        let x = b.data("x", 4, DKind::Data);
        let d1 = b.data("d1", 8, DKind::Data);
        let out = b.data("out", 4, DKind::Data);
        let gout = b.data("gout", 4, DKind::Grad);
        let g1 = b.data("g1", 8, DKind::Grad);
        let gin = b.data("gin", 4, DKind::Grad);
        b.compute("f1", CKind::Forward, 2, 0, &[x], &[d1]);
        b.compute("f2", CKind::Forward, 3, 0, &[d1], &[out]);
        b.compute("loss", CKind::Loss, 0, 0, &[out], &[gout]);
        b.compute("b2", CKind::Backward, 3, 0, &[gout, d1], &[g1]);
        b.compute("b1", CKind::Backward, 2, 0, &[g1, x], &[gin]);
        b.input(x).output(out).input_grad(gin);
        b.build()
    }

    #[test]
    fn well_formed_graph_has_no_violations() {
        assert_eq!(validate_cdgraph(&toy()), vec![]);
    }

    #[test]
    fn loss_with_time_is_reported() {
        let mut g = toy();
        g.cnodes[2].time = 5;
        let v = validate_cdgraph(&g);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::LossShape);
    }

    #[test]
    fn cycle_is_reported() {
        let mut b = CDGraphBuilder::new();
        let d1 = b.data("d1", 1, DKind::Data);
        let d2 = b.data("d2", 1, DKind::Data);
        b.compute("f1", CKind::Forward, 1, 0, &[d2], &[d1]);
        b.compute("f2", CKind::Forward, 1, 0, &[d1], &[d2]);
        let g = b.build();
        let v = validate_cdgraph(&g);
        assert!(v.iter().any(|v| v.rule == Rule::Acyclic), "{v:?}");
        assert!(!v.iter().any(|v| v.rule == Rule::TopologicalOrder));
    }

    #[test]
    fn edge_sets_of_simple_chain() {
        let mut b = CDGraphBuilder::new();
        let d1 = b.data("d1", 1, DKind::Data);
        let f1 = b.compute("f1", CKind::Forward, 1, 0, &[], &[d1]);
        let f2 = b.compute("f2", CKind::Forward, 1, 0, &[d1], &[]);
        let e = derive_edge_sets(&b.build());
        assert_eq!(e.children_of_comp, vec![(f1, d1)]);
        assert_eq!(e.parents_of_data[d1], vec![f1]);
        assert_eq!(e.children_of_data[d1], vec![f2]);
    }

    #[test]
    fn multi_parent_grad_lists_both_parents() {
        let mut b = CDGraphBuilder::new();
        let g = b.data("g", 1, DKind::Grad);
        let b1 = b.compute("b1", CKind::Backward, 1, 0, &[], &[g]);
        let b2 = b.compute("b2", CKind::Backward, 1, 0, &[], &[g]);
        let e = derive_edge_sets(&b.build());
        assert_eq!(e.parents_of_data[g], vec![b1, b2]);
        assert_eq!(e.children_of_comp.len(), 2);
    }

    #[test]
    fn empty_graph_has_empty_edge_sets() {
        let e = derive_edge_sets(&CDGraphBuilder::new().build());
        assert_eq!(e, EdgeSets::default());
    }

    #[test]
    fn edge_sets_are_pure() {
        let g = toy();
        assert_eq!(derive_edge_sets(&g), derive_edge_sets(&g));
    }
}
