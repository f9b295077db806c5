//! Ground-truth replay of schedules against a chain.
//!
//! Memory model: a compute needs every dependency resident and complete
//! (all producers of a multi-parent tensor have contributed since it was
//! last freed). Its peak is the resident total plus its temporary memory
//! plus every output that is not already resident. Forgets happen after
//! the peak of the compute they follow, so freed bytes still count toward
//! that step. Block `i`'s output and block `i+1`'s input are the same
//! tensor, as are block `i`'s loss gradient and block `i+1`'s input gradient.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::chain_dp::OptionMenu;
use crate::model::{BlockStep, Bytes, CDGraph, CKind, Chain, Micros, Schedule, ScheduleOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("op {op_index} ({op}): dependency `{missing}` is not resident")]
    DanglingDependency { op_index: usize, op: String, missing: String },
    #[error("op {op_index}: cannot forget `{target}`, it is not resident")]
    ForgetAbsent { op_index: usize, target: String },
    #[error("op {op_index}: loss computed twice")]
    DoubleLoss { op_index: usize },
    #[error("op {op_index}: loss node of block {block} is not the chain loss")]
    NonFinalLoss { op_index: usize, block: usize },
    #[error("op {op_index}: unknown target `{target}`")]
    UnknownTarget { op_index: usize, target: String },
    #[error("op {op_index}: block op without an option menu or unknown option")]
    MissingOption { op_index: usize },
    #[error("op {op_index}: peak {peak} exceeds budget {budget} by {}", peak - budget)]
    BudgetExceeded { op_index: usize, peak: Bytes, budget: Bytes },
    #[error("block {block} node `{cnode}` ran {runs} times, expected {expected}")]
    RunCount { block: usize, cnode: String, runs: u32, expected: &'static str },
}

/// Canonical tensor table for a sequence of blocks.
#[derive(Debug, Clone)]
pub struct SimContext<'a> {
    blocks: &'a [CDGraph],
    menu: Option<&'a OptionMenu>,
    /// `key[block][dnode]`.
    key: Vec<Vec<usize>>,
    size: Vec<Bytes>,
    /// Producers of each key as `(block, cnode)`.
    producers: Vec<Vec<(usize, usize)>>,
    name: Vec<String>,
    cnode_ix: Vec<HashMap<String, usize>>,
    dnode_ix: Vec<HashMap<String, usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimState {
    pub resident: Vec<bool>,
    /// Bitmask over `producers[key]` of contributions since creation.
    pub contrib: Vec<u64>,
    pub current: Bytes,
    pub peak: Bytes,
    pub elapsed: Micros,
    pub loss_done: bool,
    pub mem_at_loss: Option<Bytes>,
    pub runs: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub op_index: usize,
    pub op: String,
    pub elapsed_us: Micros,
    pub current_mem: Bytes,
    pub peak_mem: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub makespan: Micros,
    pub peak_mem: Bytes,
    pub mem_at_loss: Bytes,
    pub overhead: Micros,
    pub trace: Vec<TraceRow>,
}

impl SimReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("op_index,op,elapsed_us,current_mem,peak_mem\n");
        for r in &self.trace {
            let _ = writeln!(s, "{},{},{},{},{}", r.op_index, r.op, r.elapsed_us, r.current_mem, r.peak_mem);
        }
        s
    }
}

impl<'a> SimContext<'a> {
    pub fn new(blocks: &'a [CDGraph], menu: Option<&'a OptionMenu>) -> Self {
        let mut key = Vec::with_capacity(blocks.len());
        let mut size = Vec::new();
        let mut name = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            let mut row = Vec::with_capacity(b.dnodes.len());
            for d in &b.dnodes {
                row.push(size.len());
                size.push(d.size);
                name.push(format!("{i}:{}", d.id));
            }
            key.push(row);
        }
        // Seams: next input aliases this output; this loss gradient aliases
        // next input gradient.
        for i in 0..blocks.len().saturating_sub(1) {
            let (b, n) = (&blocks[i], &blocks[i + 1]);
            key[i + 1][n.input_data] = key[i][b.output_data];
            if let Some(ig) = n.input_grad {
                key[i][b.output_grad()] = key[i + 1][ig];
            }
        }
        let mut producers = vec![Vec::new(); size.len()];
        for (i, b) in blocks.iter().enumerate() {
            for (c, cn) in b.cnodes.iter().enumerate() {
                if cn.kind == CKind::Loss && i + 1 != blocks.len() {
                    continue;
                }
                for &d in &cn.outputs {
                    producers[key[i][d]].push((i, c));
                }
            }
        }
        let cnode_ix = blocks
            .iter()
            .map(|b| b.cnodes.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect())
            .collect();
        let dnode_ix = blocks
            .iter()
            .map(|b| b.dnodes.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect())
            .collect();
        SimContext {
            blocks,
            menu,
            key,
            size,
            producers,
            name,
            cnode_ix,
            dnode_ix,
        }
    }

    pub fn for_chain(chain: &'a Chain, menu: Option<&'a OptionMenu>) -> Self {
        Self::new(&chain.blocks, menu)
    }

    pub fn for_block(g: &'a CDGraph) -> Self {
        Self::new(std::slice::from_ref(g), None)
    }

    pub fn blocks(&self) -> &'a [CDGraph] {
        self.blocks
    }

    pub fn key(&self, block: usize, d: usize) -> usize {
        self.key[block][d]
    }

    pub fn key_count(&self) -> usize {
        self.size.len()
    }

    pub fn key_size(&self, k: usize) -> Bytes {
        self.size[k]
    }

    /// State with the first block's input resident.
    pub fn initial_state(&self) -> SimState {
        let n = self.size.len();
        let mut st = SimState {
            resident: vec![false; n],
            contrib: vec![0; n],
            current: 0,
            peak: 0,
            elapsed: 0,
            loss_done: false,
            mem_at_loss: None,
            runs: self.blocks.iter().map(|b| vec![0; b.cnodes.len()]).collect(),
        };
        if let Some(b) = self.blocks.first() {
            let k = self.key[0][b.input_data];
            st.resident[k] = true;
            st.current = self.size[k];
            st.peak = st.current;
        }
        st
    }

    fn complete(&self, st: &SimState, k: usize) -> bool {
        if !st.resident[k] {
            return false;
        }
        let n = self.producers[k].len();
        n == 0 || st.contrib[k] == full_mask(n)
    }

    pub fn compute(&self, st: &mut SimState, block: usize, c: usize, at: usize) -> Result<(), SimError> {
        let g = &self.blocks[block];
        let cn = &g.cnodes[c];
        if cn.kind == CKind::Loss {
            if block + 1 != self.blocks.len() {
                return Err(SimError::NonFinalLoss { op_index: at, block });
            }
            if st.loss_done {
                return Err(SimError::DoubleLoss { op_index: at });
            }
        }
        for &d in &cn.deps {
            let k = self.key[block][d];
            if !self.complete(st, k) {
                return Err(SimError::DanglingDependency {
                    op_index: at,
                    op: format!("compute {block}:{}", cn.id),
                    missing: self.name[k].clone(),
                });
            }
        }
        if cn.kind == CKind::Loss {
            st.mem_at_loss = Some(st.current);
            st.loss_done = true;
        }
        let mut fresh = 0;
        for &d in &cn.outputs {
            let k = self.key[block][d];
            if !st.resident[k] {
                fresh += self.size[k];
            }
        }
        st.peak = st.peak.max(st.current + cn.tmp_mem + fresh);
        for &d in &cn.outputs {
            let k = self.key[block][d];
            if !st.resident[k] {
                st.resident[k] = true;
                st.contrib[k] = 0;
                st.current += self.size[k];
            }
            if let Some(pos) = self.producers[k].iter().position(|&p| p == (block, c)) {
                st.contrib[k] |= 1 << pos;
            }
        }
        st.elapsed += cn.time;
        st.runs[block][c] += 1;
        Ok(())
    }

    pub fn forget(&self, st: &mut SimState, block: usize, d: usize, at: usize) -> Result<(), SimError> {
        let k = self.key[block][d];
        if !st.resident[k] {
            return Err(SimError::ForgetAbsent {
                op_index: at,
                target: self.name[k].clone(),
            });
        }
        st.resident[k] = false;
        st.contrib[k] = 0;
        st.current -= self.size[k];
        Ok(())
    }

    /// Makes `d` resident and complete without running its producers, as
    /// when a neighbouring block has already produced it.
    pub fn materialize(&self, st: &mut SimState, block: usize, d: usize) {
        let k = self.key[block][d];
        if !st.resident[k] {
            st.resident[k] = true;
            st.current += self.size[k];
            st.peak = st.peak.max(st.current);
        }
        st.contrib[k] = full_mask(self.producers[k].len());
    }

    pub fn step(&self, st: &mut SimState, block: usize, s: BlockStep, at: usize) -> Result<(), SimError> {
        match s {
            BlockStep::Compute(c) => self.compute(st, block, c, at),
            BlockStep::Forget(d) => self.forget(st, block, d, at),
        }
    }

    /// Block-local steps that a chain-level op expands to.
    pub fn expand(&self, op: &ScheduleOp, at: usize) -> Result<Vec<(usize, BlockStep)>, SimError> {
        let unknown = |t: &str| SimError::UnknownTarget {
            op_index: at,
            target: t.to_string(),
        };
        let check_block = |b: usize| {
            if b < self.blocks.len() {
                Ok(b)
            } else {
                Err(unknown(&format!("block {b}")))
            }
        };
        Ok(match op {
            ScheduleOp::Compute { block, cnode } => {
                let b = check_block(*block)?;
                let c = *self.cnode_ix[b].get(cnode).ok_or_else(|| unknown(cnode))?;
                vec![(b, BlockStep::Compute(c))]
            }
            ScheduleOp::Forget { block, dnode } => {
                let b = check_block(*block)?;
                let d = *self.dnode_ix[b].get(dnode).ok_or_else(|| unknown(dnode))?;
                vec![(b, BlockStep::Forget(d))]
            }
            ScheduleOp::BlockFwd { block, option } => {
                let b = check_block(*block)?;
                let o = self
                    .menu
                    .and_then(|m| m.option(b, *option))
                    .ok_or(SimError::MissingOption { op_index: at })?;
                o.fwd_ops.iter().map(|&s| (b, s)).collect()
            }
            ScheduleOp::BlockBwd { block, option } => {
                let b = check_block(*block)?;
                let o = self
                    .menu
                    .and_then(|m| m.option(b, *option))
                    .filter(|o| o.time_bwd.is_some())
                    .ok_or(SimError::MissingOption { op_index: at })?;
                o.bwd_ops.iter().map(|&s| (b, s)).collect()
            }
        })
    }

    fn step_label(&self, block: usize, s: BlockStep) -> String {
        let g = &self.blocks[block];
        match s {
            BlockStep::Compute(c) => format!("compute {block}:{}", g.cnodes[c].id),
            BlockStep::Forget(d) => format!("forget {block}:{}", g.dnodes[d].id),
        }
    }

    /// Applies one chain-level op, optionally appending trace rows.
    pub fn apply(
        &self,
        st: &mut SimState,
        op: &ScheduleOp,
        at: usize,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<(), SimError> {
        for (b, s) in self.expand(op, at)? {
            self.step(st, b, s, at)?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceRow {
                    op_index: at,
                    op: self.step_label(b, s),
                    elapsed_us: st.elapsed,
                    current_mem: st.current,
                    peak_mem: st.peak,
                });
            }
        }
        Ok(())
    }

    /// Full replay with end-of-schedule checks: the loss exactly once, each
    /// backward exactly once, each forward at least once.
    pub fn simulate(&self, schedule: &Schedule, budget: Option<Bytes>) -> Result<SimReport, SimError> {
        let mut st = self.initial_state();
        let mut trace = Vec::new();
        for (at, op) in schedule.ops.iter().enumerate() {
            self.apply(&mut st, op, at, Some(&mut trace))?;
            if let Some(b) = budget {
                if st.peak > b {
                    return Err(SimError::BudgetExceeded {
                        op_index: at,
                        peak: st.peak,
                        budget: b,
                    });
                }
            }
        }
        let last = self.blocks.len().saturating_sub(1);
        let mut one_pass = 0;
        for (i, g) in self.blocks.iter().enumerate() {
            for (c, cn) in g.cnodes.iter().enumerate() {
                let runs = st.runs[i][c];
                let expected = match cn.kind {
                    CKind::Backward if runs != 1 => Some("exactly once"),
                    CKind::Loss if i == last && runs != 1 => Some("exactly once"),
                    CKind::Forward if runs == 0 => Some("at least once"),
                    _ => None,
                };
                if let Some(expected) = expected {
                    return Err(SimError::RunCount {
                        block: i,
                        cnode: cn.id.clone(),
                        runs,
                        expected,
                    });
                }
                if cn.kind != CKind::Loss || i == last {
                    one_pass += cn.time;
                }
            }
        }
        Ok(SimReport {
            makespan: st.elapsed,
            peak_mem: st.peak,
            mem_at_loss: st.mem_at_loss.unwrap_or(0),
            overhead: st.elapsed - one_pass,
            trace,
        })
    }
}

fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Replays `schedule` on `chain` (block ops need `simulate_with_menu`).
pub fn simulate(schedule: &Schedule, chain: &Chain, budget: Option<Bytes>) -> Result<SimReport, SimError> {
    SimContext::for_chain(chain, None).simulate(schedule, budget)
}

pub fn simulate_with_menu(
    schedule: &Schedule,
    chain: &Chain,
    menu: &OptionMenu,
    budget: Option<Bytes>,
) -> Result<SimReport, SimError> {
    SimContext::for_chain(chain, Some(menu)).simulate(schedule, budget)
}

/// Replays block-local steps of a single block from its initial state.
pub fn simulate_block(g: &CDGraph, steps: &[BlockStep], budget: Option<Bytes>) -> Result<SimReport, SimError> {
    let s = Schedule::from_block_steps(g, 0, steps);
    SimContext::for_block(g).simulate(&s, budget)
}

// ---------------------------------------------------------------------------
// Canonical one-pass schedules
// ---------------------------------------------------------------------------

/// Position after which each non-source tensor is dead in the one-pass
/// order: its last consumer or last producer, whichever is later.
fn last_touch(g: &CDGraph) -> Vec<usize> {
    let mut last = vec![0usize; g.dnodes.len()];
    for (t, c) in g.cnodes.iter().enumerate() {
        for &d in c.deps.iter().chain(&c.outputs) {
            last[d] = last[d].max(t);
        }
    }
    last
}

fn one_pass(g: &CDGraph, hold_until_loss: bool) -> Vec<BlockStep> {
    let last = last_touch(g);
    let mut steps = Vec::new();
    let mut pending = Vec::new();
    for t in 0..g.cnodes.len() {
        steps.push(BlockStep::Compute(t));
        let mut dead: Vec<usize> = g.cnodes[t]
            .deps
            .iter()
            .chain(&g.cnodes[t].outputs)
            .copied()
            .filter(|&d| !g.is_source(d) && last[d] == t)
            .collect();
        dead.sort_unstable();
        dead.dedup();
        if hold_until_loss && t < g.loss_index {
            pending.extend(dead);
            continue;
        }
        if t == g.loss_index {
            pending.sort_unstable();
            steps.extend(pending.drain(..).map(BlockStep::Forget));
        }
        steps.extend(dead.into_iter().map(BlockStep::Forget));
    }
    steps
}

/// One pass in order, forgetting every tensor right after its last use.
pub fn eager_free_steps(g: &CDGraph) -> Vec<BlockStep> {
    one_pass(g, false)
}

/// One pass in order; nothing is forgotten before the loss, afterwards
/// tensors are forgotten after their last use.
pub fn no_recompute_steps(g: &CDGraph) -> Vec<BlockStep> {
    one_pass(g, true)
}

pub fn eager_free_schedule(g: &CDGraph) -> Schedule {
    Schedule::from_block_steps(g, 0, &eager_free_steps(g))
}

pub fn no_recompute_schedule(g: &CDGraph) -> Schedule {
    Schedule::from_block_steps(g, 0, &no_recompute_steps(g))
}

/// Chain-wide one pass with no recomputation: every forward, the loss,
/// then backwards from the last block to the first. Nothing is forgotten
/// before the loss; afterwards tensors go after their last use. The model
/// input and its gradient are kept.
pub fn chain_no_recompute_schedule(chain: &Chain) -> Schedule {
    let ctx = SimContext::for_chain(chain, None);
    let last_block = chain.len() - 1;
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (i, b) in chain.blocks.iter().enumerate() {
        order.extend(
            b.cnodes
                .iter()
                .enumerate()
                .filter(|(_, c)| c.kind == CKind::Forward)
                .map(|(c, _)| (i, c)),
        );
    }
    let loss_pos = order.len();
    order.push((last_block, chain.blocks[last_block].loss_index));
    for (i, b) in chain.blocks.iter().enumerate().rev() {
        order.extend(
            b.cnodes
                .iter()
                .enumerate()
                .filter(|(_, c)| c.kind == CKind::Backward)
                .map(|(c, _)| (i, c)),
        );
    }
    let mut keep = vec![false; ctx.key_count()];
    keep[ctx.key(0, chain.blocks[0].input_data)] = true;
    if let Some(ig) = chain.blocks[0].input_grad {
        keep[ctx.key(0, ig)] = true;
    }
    let mut last = vec![0usize; ctx.key_count()];
    for (pos, &(i, c)) in order.iter().enumerate() {
        let cn = &chain.blocks[i].cnodes[c];
        for &d in cn.deps.iter().chain(&cn.outputs) {
            let k = ctx.key(i, d);
            last[k] = last[k].max(pos);
        }
    }
    // Forget after the later of last use and the loss.
    let mut forget_at: Vec<Vec<(usize, usize)>> = vec![Vec::new(); order.len()];
    let mut named = vec![false; ctx.key_count()];
    for &(i, c) in &order {
        let cn = &chain.blocks[i].cnodes[c];
        for &d in cn.deps.iter().chain(&cn.outputs) {
            let k = ctx.key(i, d);
            if !keep[k] && !named[k] {
                named[k] = true;
                forget_at[last[k].max(loss_pos)].push((i, d));
            }
        }
    }
    let mut ops = Vec::new();
    for (pos, &(i, c)) in order.iter().enumerate() {
        ops.push(ScheduleOp::Compute {
            block: i,
            cnode: chain.blocks[i].cnodes[c].id.clone(),
        });
        let mut fs = forget_at[pos].clone();
        fs.sort_unstable();
        for (i, d) in fs {
            ops.push(ScheduleOp::Forget {
                block: i,
                dnode: chain.blocks[i].dnodes[d].id.clone(),
            });
        }
    }
    Schedule::new(ops)
}
