//! On-disk format (version 1): forward graphs, chains, schedules and
//! partitions as pretty-printed JSON with a `format_version` and `kind`.
//!
//! Parsing happens in two passes. The header is read first so that an
//! unsupported version is reported as such, then the whole document is
//! decoded into a kind-specific shape that rejects unknown fields. Both
//! passes report line and column. Decoded documents are then resolved
//! into the index-based model types and validated.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_cdgraph, validate_chain, BlockOption, BlockStep, Bytes, CDGraph, CKind, CNode, Chain, DKind, DNode,
    ForwardGraph, ForwardNode, Micros, Schedule, ScheduleMeta, ScheduleOp,
};
use crate::partition::infer_classes;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid {what}: {}", problems.join("; "))]
    Validation { what: &'static str, problems: Vec<String> },
}

impl IngestError {
    fn invalid(what: &'static str, problems: Vec<String>) -> Self {
        IngestError::Validation { what, problems }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Chain,
    ForwardGraph,
    Schedule,
    Partition,
}

impl FileKind {
    fn name(self) -> &'static str {
        match self {
            FileKind::Chain => "chain",
            FileKind::ForwardGraph => "forward_graph",
            FileKind::Schedule => "schedule",
            FileKind::Partition => "partition",
        }
    }
}

#[derive(Deserialize)]
struct Header {
    format_version: Option<serde_json::Value>,
    kind: Option<serde_json::Value>,
}

// ---------------------------------------------------------------------------
// File shapes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForwardNodeFile {
    id: String,
    op: String,
    shape: Vec<u64>,
    #[serde(default)]
    params: String,
    #[serde(default)]
    predecessors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForwardGraphFile {
    format_version: u64,
    kind: FileKind,
    inputs: Vec<String>,
    output: String,
    nodes: Vec<ForwardNodeFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CNodeFile {
    id: String,
    kind: CKind,
    time_us: Micros,
    #[serde(default)]
    tmp_mem: Bytes,
    deps: Vec<String>,
    outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DNodeFile {
    id: String,
    size: Bytes,
    kind: DKind,
    #[serde(default)]
    parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    cnodes: Vec<CNodeFile>,
    dnodes: Vec<DNodeFile>,
    input_data: String,
    output_data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_grad: Option<String>,
    loss_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    format_version: u64,
    kind: FileKind,
    blocks: Vec<BlockFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    equiv_class: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum Target {
    Option(usize),
    Id(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum OpName {
    Compute,
    Forget,
    BlockFwd,
    BlockBwd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpFile {
    op: OpName,
    block: usize,
    target: Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepFile {
    op: OpName,
    target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionFile {
    time_fwd_us: Micros,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_bwd_us: Option<Micros>,
    save_mem: Bytes,
    peak_fwd: Bytes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peak_bwd: Option<Bytes>,
    fwd_ops: Vec<StepFile>,
    #[serde(default)]
    bwd_ops: Vec<StepFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    budget_bytes: Option<Bytes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    makespan_us: Option<Micros>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peak_bytes: Option<Bytes>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    format_version: u64,
    kind: FileKind,
    #[serde(default, skip_serializing_if = "is_default")]
    meta: MetaFile,
    ops: Vec<OpFile>,
    /// Per block, the options that `block_fwd`/`block_bwd` targets index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    options: Option<Vec<Vec<OptionFile>>>,
}

fn is_default(m: &MetaFile) -> bool {
    *m == MetaFile::default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionBlockFile {
    class: usize,
    nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    format_version: u64,
    kind: FileKind,
    separators: Vec<String>,
    blocks: Vec<PartitionBlockFile>,
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

/// A schedule together with the block options its block ops refer to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScheduleDoc {
    pub schedule: Schedule,
    pub options: Option<Vec<Vec<BlockOption>>>,
}

/// Result of cutting a forward graph: separators, the node ids of each
/// block and each block's class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionDoc {
    pub separators: Vec<String>,
    pub blocks: Vec<Vec<String>>,
    pub classes: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

fn parse_err(e: serde_json::Error) -> IngestError {
    IngestError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
    }
}

/// Line and column (1-based) of the first occurrence of `needle`.
fn locate(text: &str, needle: &str) -> (usize, usize) {
    let at = text.find(needle).unwrap_or(0);
    let before = &text[..at];
    let line = before.matches('\n').count() + 1;
    let column = at - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn decode<T: DeserializeOwned>(text: &str, kind: FileKind) -> Result<T, IngestError> {
    let header: Header = serde_json::from_str(text).map_err(parse_err)?;
    let (line, column) = locate(text, "\"format_version\"");
    match header.format_version {
        None => {
            return Err(IngestError::Parse {
                line: 1,
                column: 1,
                message: "missing field `format_version`".into(),
            })
        }
        Some(v) if v.as_u64() != Some(FORMAT_VERSION) => {
            return Err(IngestError::Parse {
                line,
                column,
                message: format!("unsupported version {v}"),
            })
        }
        _ => {}
    }
    if let Some(k) = header.kind {
        if k.as_str() != Some(kind.name()) {
            let (line, column) = locate(text, "\"kind\"");
            return Err(IngestError::Parse {
                line,
                column,
                message: format!("expected kind \"{}\", found {k}", kind.name()),
            });
        }
    }
    serde_json::from_str(text).map_err(parse_err)
}

fn encode<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("file shapes always serialize");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IngestError> {
    fs::write(path, text).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Forward graphs
// ---------------------------------------------------------------------------

pub fn parse_forward_graph(text: &str) -> Result<ForwardGraph, IngestError> {
    let f: ForwardGraphFile = decode(text, FileKind::ForwardGraph)?;
    let g = ForwardGraph {
        nodes: f
            .nodes
            .into_iter()
            .map(|n| ForwardNode {
                id: n.id,
                op_signature: n.op,
                output_shape: n.shape,
                param_signature: n.params,
                predecessors: n.predecessors,
            })
            .collect(),
        input_ids: f.inputs,
        output_id: f.output,
    };
    let problems = g.validate();
    if !problems.is_empty() {
        return Err(IngestError::invalid("forward graph", problems));
    }
    Ok(g)
}

pub fn forward_graph_to_string(g: &ForwardGraph) -> String {
    encode(&ForwardGraphFile {
        format_version: FORMAT_VERSION,
        kind: FileKind::ForwardGraph,
        inputs: g.input_ids.clone(),
        output: g.output_id.clone(),
        nodes: g
            .nodes
            .iter()
            .map(|n| ForwardNodeFile {
                id: n.id.clone(),
                op: n.op_signature.clone(),
                shape: n.output_shape.clone(),
                params: n.param_signature.clone(),
                predecessors: n.predecessors.clone(),
            })
            .collect(),
    })
}

pub fn load_forward_graph(path: &Path) -> Result<ForwardGraph, IngestError> {
    parse_forward_graph(&read(path)?)
}

pub fn save_forward_graph(g: &ForwardGraph, path: &Path) -> Result<(), IngestError> {
    write(path, &forward_graph_to_string(g))
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

fn resolve_block(i: usize, b: BlockFile) -> Result<CDGraph, Vec<String>> {
    let mut problems = Vec::new();
    let d_ix: HashMap<&str, usize> = b.dnodes.iter().enumerate().map(|(j, d)| (d.id.as_str(), j)).collect();
    let c_ix: HashMap<&str, usize> = b.cnodes.iter().enumerate().map(|(j, c)| (c.id.as_str(), j)).collect();
    let mut data = |id: &str, field: &str| match d_ix.get(id) {
        Some(&j) => j,
        None => {
            problems.push(format!("block {i}: {field} names unknown data node `{id}`"));
            0
        }
    };
    let cnodes: Vec<CNode> = b
        .cnodes
        .iter()
        .map(|c| CNode {
            id: c.id.clone(),
            kind: c.kind,
            time: c.time_us,
            tmp_mem: c.tmp_mem,
            deps: c.deps.iter().map(|d| data(d, &format!("deps of `{}`", c.id))).collect(),
            outputs: c.outputs.iter().map(|d| data(d, &format!("outputs of `{}`", c.id))).collect(),
        })
        .collect();
    let input_data = data(&b.input_data, "input_data");
    let output_data = data(&b.output_data, "output_data");
    let input_grad = b.input_grad.as_deref().map(|d| data(d, "input_grad"));
    let mut dnodes = Vec::with_capacity(b.dnodes.len());
    for d in &b.dnodes {
        let mut parents = Vec::new();
        for p in &d.parents {
            match c_ix.get(p.as_str()) {
                Some(&j) => parents.push(j),
                None => problems.push(format!("block {i}: parents of `{}` name unknown compute node `{p}`", d.id)),
            }
        }
        dnodes.push(DNode {
            id: d.id.clone(),
            size: d.size,
            kind: d.kind,
            parents,
        });
    }
    let loss_index = match c_ix.get(b.loss_id.as_str()) {
        Some(&j) => j,
        None => {
            problems.push(format!("block {i}: loss_id names unknown compute node `{}`", b.loss_id));
            0
        }
    };
    if !problems.is_empty() {
        return Err(problems);
    }
    let g = CDGraph {
        cnodes,
        dnodes,
        input_data,
        output_data,
        input_grad,
        loss_index,
    };
    let v = validate_cdgraph(&g);
    if v.is_empty() {
        Ok(g)
    } else {
        Err(v.into_iter().map(|v| format!("block {i}: {v}")).collect())
    }
}

fn block_file(g: &CDGraph) -> BlockFile {
    let d = |j: usize| g.dnodes[j].id.clone();
    BlockFile {
        cnodes: g
            .cnodes
            .iter()
            .map(|c| CNodeFile {
                id: c.id.clone(),
                kind: c.kind,
                time_us: c.time,
                tmp_mem: c.tmp_mem,
                deps: c.deps.iter().map(|&j| d(j)).collect(),
                outputs: c.outputs.iter().map(|&j| d(j)).collect(),
            })
            .collect(),
        dnodes: g
            .dnodes
            .iter()
            .map(|n| DNodeFile {
                id: n.id.clone(),
                size: n.size,
                kind: n.kind,
                parents: n.parents.iter().map(|&c| g.cnodes[c].id.clone()).collect(),
            })
            .collect(),
        input_data: d(g.input_data),
        output_data: d(g.output_data),
        input_grad: g.input_grad.map(d),
        loss_id: g.cnodes[g.loss_index].id.clone(),
    }
}

/// Parses and validates a chain. Without an explicit `equiv_class`,
/// structurally identical blocks are grouped automatically.
pub fn parse_chain(text: &str) -> Result<Chain, IngestError> {
    let f: ChainFile = decode(text, FileKind::Chain)?;
    let mut blocks = Vec::with_capacity(f.blocks.len());
    let mut problems = Vec::new();
    for (i, b) in f.blocks.into_iter().enumerate() {
        match resolve_block(i, b) {
            Ok(g) => blocks.push(g),
            Err(p) => problems.extend(p),
        }
    }
    if !problems.is_empty() {
        return Err(IngestError::invalid("chain", problems));
    }
    let equiv_class = f.equiv_class.unwrap_or_else(|| infer_classes(&blocks));
    let chain = Chain { blocks, equiv_class };
    let problems = validate_chain(&chain);
    if !problems.is_empty() {
        return Err(IngestError::invalid("chain", problems));
    }
    Ok(chain)
}

pub fn chain_to_string(chain: &Chain) -> String {
    encode(&ChainFile {
        format_version: FORMAT_VERSION,
        kind: FileKind::Chain,
        blocks: chain.blocks.iter().map(block_file).collect(),
        equiv_class: Some(chain.equiv_class.clone()),
    })
}

pub fn load_chain(path: &Path) -> Result<Chain, IngestError> {
    parse_chain(&read(path)?)
}

pub fn save_chain(chain: &Chain, path: &Path) -> Result<(), IngestError> {
    write(path, &chain_to_string(chain))
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

fn step_file(g: &CDGraph, s: BlockStep) -> StepFile {
    match s {
        BlockStep::Compute(c) => StepFile {
            op: OpName::Compute,
            target: g.cnodes[c].id.clone(),
        },
        BlockStep::Forget(d) => StepFile {
            op: OpName::Forget,
            target: g.dnodes[d].id.clone(),
        },
    }
}

fn option_file(g: &CDGraph, o: &BlockOption) -> OptionFile {
    OptionFile {
        time_fwd_us: o.time_fwd,
        time_bwd_us: o.time_bwd,
        save_mem: o.save_mem,
        peak_fwd: o.peak_fwd,
        peak_bwd: o.peak_bwd,
        fwd_ops: o.fwd_ops.iter().map(|&s| step_file(g, s)).collect(),
        bwd_ops: o.bwd_ops.iter().map(|&s| step_file(g, s)).collect(),
    }
}

fn resolve_step(g: &CDGraph, s: &StepFile) -> Result<BlockStep, String> {
    match s.op {
        OpName::Compute => g
            .cnode_index(&s.target)
            .map(BlockStep::Compute)
            .ok_or_else(|| format!("unknown compute node `{}`", s.target)),
        OpName::Forget => g
            .dnode_index(&s.target)
            .map(BlockStep::Forget)
            .ok_or_else(|| format!("unknown data node `{}`", s.target)),
        _ => Err(format!("block op inside an option step list (target `{}`)", s.target)),
    }
}

fn resolve_option(g: &CDGraph, id: usize, o: &OptionFile) -> Result<BlockOption, String> {
    let steps = |v: &[StepFile]| v.iter().map(|s| resolve_step(g, s)).collect::<Result<Vec<_>, _>>();
    Ok(BlockOption {
        option_id: id,
        time_fwd: o.time_fwd_us,
        time_bwd: o.time_bwd_us,
        save_mem: o.save_mem,
        peak_fwd: o.peak_fwd,
        peak_bwd: o.peak_bwd,
        fwd_ops: steps(&o.fwd_ops)?,
        bwd_ops: steps(&o.bwd_ops)?,
    })
}

/// Encodes a schedule. Block op targets are option indices; op targets
/// otherwise are node ids. `options` must be given per chain block when
/// present.
pub fn schedule_to_string(doc: &ScheduleDoc, chain: &Chain) -> String {
    let ops = doc
        .schedule
        .ops
        .iter()
        .map(|op| match op {
            ScheduleOp::Compute { block, cnode } => OpFile {
                op: OpName::Compute,
                block: *block,
                target: Target::Id(cnode.clone()),
            },
            ScheduleOp::Forget { block, dnode } => OpFile {
                op: OpName::Forget,
                block: *block,
                target: Target::Id(dnode.clone()),
            },
            ScheduleOp::BlockFwd { block, option } => OpFile {
                op: OpName::BlockFwd,
                block: *block,
                target: Target::Option(*option),
            },
            ScheduleOp::BlockBwd { block, option } => OpFile {
                op: OpName::BlockBwd,
                block: *block,
                target: Target::Option(*option),
            },
        })
        .collect();
    let m = &doc.schedule.meta;
    encode(&ScheduleFile {
        format_version: FORMAT_VERSION,
        kind: FileKind::Schedule,
        meta: MetaFile {
            budget_bytes: m.budget,
            makespan_us: m.makespan,
            peak_bytes: m.peak,
        },
        ops,
        options: doc.options.as_ref().map(|per_block| {
            per_block
                .iter()
                .zip(&chain.blocks)
                .map(|(opts, g)| opts.iter().map(|o| option_file(g, o)).collect())
                .collect()
        }),
    })
}

/// Decodes a schedule for `chain`. Block numbers and embedded option step
/// targets are checked against the chain; op targets are left for the
/// simulator, which reports them with their op index.
pub fn parse_schedule(text: &str, chain: &Chain) -> Result<ScheduleDoc, IngestError> {
    let f: ScheduleFile = decode(text, FileKind::Schedule)?;
    let mut problems = Vec::new();
    let mut ops = Vec::with_capacity(f.ops.len());
    for (at, o) in f.ops.into_iter().enumerate() {
        if o.block >= chain.len() {
            problems.push(format!("op {at}: block {} out of range", o.block));
            continue;
        }
        let op = match (o.op, o.target) {
            (OpName::Compute, Target::Id(cnode)) => ScheduleOp::Compute { block: o.block, cnode },
            (OpName::Forget, Target::Id(dnode)) => ScheduleOp::Forget { block: o.block, dnode },
            (OpName::BlockFwd, Target::Option(option)) => ScheduleOp::BlockFwd { block: o.block, option },
            (OpName::BlockBwd, Target::Option(option)) => ScheduleOp::BlockBwd { block: o.block, option },
            (op, _) => {
                problems.push(format!("op {at}: target has the wrong type for {op:?}"));
                continue;
            }
        };
        ops.push(op);
    }
    let options = match f.options {
        None => None,
        Some(per_block) if per_block.len() != chain.len() => {
            problems.push(format!("options list {} blocks, chain has {}", per_block.len(), chain.len()));
            None
        }
        Some(per_block) => {
            let mut all = Vec::with_capacity(per_block.len());
            for (b, (opts, g)) in per_block.iter().zip(&chain.blocks).enumerate() {
                let mut v = Vec::with_capacity(opts.len());
                for (id, o) in opts.iter().enumerate() {
                    match resolve_option(g, id, o) {
                        Ok(o) => v.push(o),
                        Err(e) => problems.push(format!("block {b} option {id}: {e}")),
                    }
                }
                all.push(v);
            }
            Some(all)
        }
    };
    if !problems.is_empty() {
        return Err(IngestError::invalid("schedule", problems));
    }
    Ok(ScheduleDoc {
        schedule: Schedule {
            ops,
            meta: ScheduleMeta {
                budget: f.meta.budget_bytes,
                makespan: f.meta.makespan_us,
                peak: f.meta.peak_bytes,
            },
        },
        options,
    })
}

pub fn load_schedule(path: &Path, chain: &Chain) -> Result<ScheduleDoc, IngestError> {
    parse_schedule(&read(path)?, chain)
}

pub fn save_schedule(doc: &ScheduleDoc, chain: &Chain, path: &Path) -> Result<(), IngestError> {
    write(path, &schedule_to_string(doc, chain))
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

pub fn partition_to_string(p: &PartitionDoc) -> String {
    encode(&PartitionFile {
        format_version: FORMAT_VERSION,
        kind: FileKind::Partition,
        separators: p.separators.clone(),
        blocks: p
            .blocks
            .iter()
            .zip(&p.classes)
            .map(|(nodes, &class)| PartitionBlockFile {
                class,
                nodes: nodes.clone(),
            })
            .collect(),
    })
}

pub fn parse_partition(text: &str) -> Result<PartitionDoc, IngestError> {
    let f: PartitionFile = decode(text, FileKind::Partition)?;
    Ok(PartitionDoc {
        separators: f.separators,
        classes: f.blocks.iter().map(|b| b.class).collect(),
        blocks: f.blocks.into_iter().map(|b| b.nodes).collect(),
    })
}

pub fn load_partition(path: &Path) -> Result<PartitionDoc, IngestError> {
    parse_partition(&read(path)?)
}

pub fn save_partition(p: &PartitionDoc, path: &Path) -> Result<(), IngestError> {
    write(path, &partition_to_string(p))
}
