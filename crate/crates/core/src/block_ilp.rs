//! The per-block 0/1 program over stages and steps, the budget grid, and
//! conversion of solutions into block options.
//!
//! Stage `t` may run any step `k <= t` and always runs `t` itself. `P[t][d]`
//! says `d` is resident when stage `t` starts. Within a stage, tensors are
//! created by their producers and freed right after the last related step
//! that still needs them.

#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ilp_solver::{BinaryProgram, Sense};
use crate::model::{derive_edge_sets, BlockOption, BlockStep, Bytes, CDGraph, CKind, EdgeSets};
use crate::simulate::{simulate_block, SimContext, SimError};

pub const DEFAULT_VAR_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BudgetPair {
    pub m_peak: Bytes,
    pub m_save: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IlpError {
    #[error("model needs {vars} variables, cap is {cap}")]
    ModelTooLarge { vars: usize, cap: usize },
    #[error("m_save {m_save} exceeds m_peak {m_peak}")]
    SaveAbovePeak { m_peak: Bytes, m_save: Bytes },
    #[error("solution violates the model: {0}")]
    SolutionInfeasible(String),
    #[error("block has no compute nodes")]
    EmptyBlock,
}

/// A variable, or a constant when the structure decides it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bit {
    Zero,
    One,
    Var(usize),
}

impl Bit {
    fn value(self, x: &[bool]) -> bool {
        match self {
            Bit::Zero => false,
            Bit::One => true,
            Bit::Var(v) => x[v],
        }
    }
}

#[derive(Default)]
struct Lin {
    terms: Vec<(usize, i64)>,
    constant: i64,
}

impl Lin {
    fn add(&mut self, b: Bit, a: i64) -> &mut Self {
        match b {
            Bit::Zero => {}
            Bit::One => self.constant += a,
            Bit::Var(v) => self.terms.push((v, a)),
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct IlpModel {
    pub t: usize,
    pub d: usize,
    pub e: usize,
    pub budget: BudgetPair,
    pub program: BinaryProgram,
    /// `r[t][k]`, `k <= t`.
    pub r: Vec<Vec<Bit>>,
    /// `p[t][d]` for `t in 0..=T`; `p[T]` is all zero.
    pub p: Vec<Vec<Bit>>,
    /// `s[t][e]` over `edges.children_of_comp`.
    pub s: Vec<Vec<Bit>>,
    pub create: HashMap<(usize, usize, usize), usize>,
    pub delete: HashMap<(usize, usize, usize), usize>,
    pub edges: EdgeSets,
}

fn can_run(g: &CDGraph, t: usize, k: usize) -> bool {
    k == t || (k < t && g.cnodes[k].kind == CKind::Forward)
}

fn add_row(p: &mut BinaryProgram, lin: &Lin, sense: Sense, rhs: i64) {
    p.add_row(lin.terms.clone(), sense, rhs - lin.constant);
}

pub fn build_model(g: &CDGraph, b: BudgetPair) -> Result<IlpModel, IlpError> {
    build_model_capped(g, b, DEFAULT_VAR_CAP)
}

pub fn build_model_capped(g: &CDGraph, b: BudgetPair, cap: usize) -> Result<IlpModel, IlpError> {
    if b.m_save > b.m_peak {
        return Err(IlpError::SaveAbovePeak {
            m_peak: b.m_peak,
            m_save: b.m_save,
        });
    }
    let nt = g.cnodes.len();
    let nd = g.dnodes.len();
    if nt == 0 {
        return Err(IlpError::EmptyBlock);
    }
    let es = derive_edge_sets(g);
    let ne = es.children_of_comp.len();
    let related: Vec<Vec<usize>> = (0..nd).map(|d| es.related(d)).collect();
    let first_parent: Vec<Option<usize>> = es.parents_of_data.iter().map(|ps| ps.iter().min().copied()).collect();

    let estimate = nt * nt + nt * (nd + ne) + nt * related.iter().map(|r| r.len() * 2).sum::<usize>();
    if estimate > cap {
        return Err(IlpError::ModelTooLarge { vars: estimate, cap });
    }

    let mut prog = BinaryProgram::new();
    let mut order: Vec<(usize, bool)> = Vec::new();

    let mut r = vec![Vec::new(); nt];
    for (t, row) in r.iter_mut().enumerate() {
        for k in 0..=t {
            row.push(if !can_run(g, t, k) {
                Bit::Zero
            } else if k == t {
                Bit::One
            } else {
                Bit::Var(prog.add_var(g.cnodes[k].time as i64))
            });
        }
    }
    let mut p = vec![vec![Bit::Zero; nd]; nt + 1];
    for (t, row) in p.iter_mut().enumerate().take(nt) {
        for d in 0..nd {
            row[d] = match first_parent[d] {
                None => Bit::One,
                Some(f) if t > f => Bit::Var(prog.add_var(0)),
                Some(_) => Bit::Zero,
            };
        }
    }
    let mut s = vec![vec![Bit::Zero; ne]; nt];
    for (t, row) in s.iter_mut().enumerate() {
        for (e, &(prod, d)) in es.children_of_comp.iter().enumerate() {
            if t > prod && matches!(p[t][d], Bit::Var(_)) {
                row[e] = Bit::Var(prog.add_var(0));
            }
        }
    }
    let mut create = HashMap::new();
    let mut delete = HashMap::new();
    let mut stage_vars: Vec<Vec<usize>> = vec![Vec::new(); nt];
    for t in 0..nt {
        for d in 0..nd {
            if first_parent[d].is_none() {
                continue;
            }
            for &k in &related[d] {
                if k > t || r[t][k] == Bit::Zero {
                    continue;
                }
                if es.parents_of_data[d].contains(&k) {
                    let v = prog.add_var(0);
                    create.insert((t, d, k), v);
                    stage_vars[t].push(v);
                }
                let v = prog.add_var(0);
                delete.insert((t, d, k), v);
                stage_vars[t].push(v);
            }
        }
    }
    for t in 0..nt {
        for k in 0..t {
            if let Bit::Var(v) = r[t][k] {
                order.push((v, false));
            }
        }
        if t + 1 < nt {
            // Keep a tensor first only if a later step still reads it.
            let needed = |d: usize| es.children_of_data[d].iter().any(|&c| c > t);
            for d in 0..nd {
                if let Bit::Var(v) = p[t + 1][d] {
                    order.push((v, needed(d)));
                }
            }
            for (e, &(_, d)) in es.children_of_comp.iter().enumerate() {
                if let Bit::Var(v) = s[t + 1][e] {
                    order.push((v, needed(d)));
                }
            }
        }
        order.extend(stage_vars[t].iter().map(|&v| (v, false)));
    }
    prog.branch_order = order;

    let cr = |t: usize, d: usize, k: usize| create.get(&(t, d, k)).map_or(Bit::Zero, |&v| Bit::Var(v));
    let dl = |t: usize, d: usize, k: usize| delete.get(&(t, d, k)).map_or(Bit::Zero, |&v| Bit::Var(v));
    let source_mem: i64 = (0..nd).filter(|&d| first_parent[d].is_none()).map(|d| g.dnodes[d].size as i64).sum();

    for t in 0..nt {
        // Saved contributions.
        for (e, &(prod, d)) in es.children_of_comp.iter().enumerate() {
            if s[t][e] == Bit::Zero {
                continue;
            }
            let mut lin = Lin::default();
            lin.add(s[t][e], 1).add(p[t][d], -1);
            add_row(&mut prog, &lin, Sense::Le, 0);
            if t + 1 < nt && s[t + 1][e] != Bit::Zero {
                let mut lin = Lin::default();
                lin.add(s[t + 1][e], 1).add(s[t][e], -1).add(r[t][prod], -1);
                add_row(&mut prog, &lin, Sense::Le, 0);
            }
        }
        // Dependencies, per producer edge.
        for c in 0..=t {
            if r[t][c] == Bit::Zero {
                continue;
            }
            for &d in &g.cnodes[c].deps {
                for &prod in &es.parents_of_data[d] {
                    let e = es.children_of_comp.iter().position(|&x| x == (prod, d)).unwrap();
                    let mut lin = Lin::default();
                    lin.add(r[t][c], 1);
                    if prod < c {
                        lin.add(r[t][prod], -1);
                    }
                    lin.add(s[t][e], -1);
                    add_row(&mut prog, &lin, Sense::Le, 0);
                }
            }
        }
        // Residency bookkeeping.
        for d in 0..nd {
            if first_parent[d].is_none() {
                continue;
            }
            let mut alive = Lin::default();
            alive.add(p[t][d], 1);
            for &k in related[d].iter().filter(|&&k| k <= t) {
                if r[t][k] == Bit::Zero {
                    continue;
                }
                let is_parent = es.parents_of_data[d].contains(&k);
                if is_parent {
                    // Before the step's frees: at most one copy, and present if k runs.
                    alive.add(cr(t, d, k), 1);
                    add_row(&mut prog, &alive, Sense::Le, 1);
                    let mut lin = Lin { terms: alive.terms.clone(), constant: alive.constant };
                    lin.add(r[t][k], -1);
                    add_row(&mut prog, &lin, Sense::Ge, 0);
                    let mut lin = Lin::default();
                    lin.add(cr(t, d, k), 1).add(r[t][k], -1);
                    add_row(&mut prog, &lin, Sense::Le, 0);
                }
                alive.add(dl(t, d, k), -1);
                add_row(&mut prog, &alive, Sense::Ge, 0);
                add_row(&mut prog, &alive, Sense::Le, 1);

                // delete = R[t][k] AND NOT P[t+1][d] AND no later child runs.
                let del = dl(t, d, k);
                let mut factors: Vec<(Bit, bool)> = vec![(r[t][k], true)];
                if t + 1 < nt {
                    factors.push((p[t + 1][d], false));
                }
                for &c in es.children_of_data[d].iter().filter(|&&c| c > k && c <= t) {
                    factors.push((r[t][c], false));
                }
                let mut lower = Lin::default();
                lower.add(del, 1);
                let mut n_true = 0;
                for &(f, positive) in &factors {
                    let mut up = Lin::default();
                    up.add(del, 1);
                    if positive {
                        up.add(f, -1);
                        add_row(&mut prog, &up, Sense::Le, 0);
                        lower.add(f, -1);
                    } else {
                        up.add(f, 1);
                        add_row(&mut prog, &up, Sense::Le, 1);
                        lower.add(f, 1);
                        n_true += 1;
                    }
                }
                // del >= Σ pos + Σ (1 - neg) - (n - 1)
                add_row(&mut prog, &lower, Sense::Ge, n_true - (factors.len() as i64 - 1));
            }
            let mut carry = alive;
            carry.add(p[t + 1][d], -1);
            add_row(&mut prog, &carry, Sense::Eq, 0);
        }
        // Memory before each step, and the peak of the step.
        for k in 0..=t {
            let mut u = Lin {
                constant: source_mem,
                ..Lin::default()
            };
            for d in 0..nd {
                if first_parent[d].is_none() {
                    continue;
                }
                let m = g.dnodes[d].size as i64;
                u.add(p[t][d], m);
                for &kk in related[d].iter().filter(|&&kk| kk < k) {
                    u.add(cr(t, d, kk), m).add(dl(t, d, kk), -m);
                }
            }
            if t == g.loss_index && k == t {
                add_row(&mut prog, &u, Sense::Le, b.m_save as i64);
            }
            u.add(r[t][k], g.cnodes[k].tmp_mem as i64);
            for &d in &g.cnodes[k].outputs {
                u.add(cr(t, d, k), g.dnodes[d].size as i64);
            }
            add_row(&mut prog, &u, Sense::Le, b.m_peak as i64);
        }
    }

    // Implied rows: a tensor absent at the start of stage t that a child
    // c >= t reads must be produced again in some stage of t..=c.
    for d in 0..nd {
        for &c in &es.children_of_data[d] {
            for t in 0..=c.min(nt - 1) {
                if !matches!(p[t][d], Bit::Var(_)) {
                    continue;
                }
                let mut lin = Lin::default();
                lin.add(p[t][d], -1);
                for tt in t..=c {
                    for &k in &es.parents_of_data[d] {
                        if k <= tt {
                            lin.add(r[tt][k], -1);
                        }
                    }
                }
                if lin.constant > -1 {
                    add_row(&mut prog, &lin, Sense::Le, -1);
                }
            }
        }
    }

    Ok(IlpModel {
        t: nt,
        d: nd,
        e: ne,
        budget: b,
        program: prog,
        r,
        p,
        s,
        create,
        delete,
        edges: es,
    })
}

impl IlpModel {
    pub fn num_vars(&self) -> usize {
        self.program.num_vars()
    }

    /// Flattens an assignment into block steps, stage by stage.
    pub fn steps(&self, g: &CDGraph, x: &[bool]) -> Vec<BlockStep> {
        let mut steps = Vec::new();
        for t in 0..self.t {
            for k in 0..=t {
                if !self.r[t][k].value(x) {
                    continue;
                }
                steps.push(BlockStep::Compute(k));
                for d in 0..g.dnodes.len() {
                    if self.delete.get(&(t, d, k)).is_some_and(|&v| x[v]) {
                        steps.push(BlockStep::Forget(d));
                    }
                }
            }
        }
        steps
    }

    /// Resident bytes after each step that runs, as `(t, k, bytes)`.
    pub fn resident_after_steps(&self, g: &CDGraph, x: &[bool]) -> Vec<(usize, usize, Bytes)> {
        let mut out = Vec::new();
        for t in 0..self.t {
            let mut mem: i64 = (0..self.d)
                .filter(|&d| self.p[t][d].value(x))
                .map(|d| g.dnodes[d].size as i64)
                .sum();
            for k in 0..=t {
                for d in 0..self.d {
                    let m = g.dnodes[d].size as i64;
                    if self.create.get(&(t, d, k)).is_some_and(|&v| x[v]) {
                        mem += m;
                    }
                    if self.delete.get(&(t, d, k)).is_some_and(|&v| x[v]) {
                        mem -= m;
                    }
                }
                if self.r[t][k].value(x) {
                    out.push((t, k, mem as Bytes));
                }
            }
        }
        out
    }
}

/// Solves one block for one budget pair and checks the result in the
/// simulator. Returns the block steps and the recomputation cost.
pub fn solve_block<S: crate::ilp_solver::BinarySolver>(
    g: &CDGraph,
    b: BudgetPair,
    solver: &S,
) -> Result<(crate::ilp_solver::SolveResult, Option<Vec<BlockStep>>), IlpError> {
    let model = build_model(g, b)?;
    let res = solver.solve(&model.program);
    let steps = match &res.assignment {
        Some(x) => Some(verified_steps(g, &model, x)?),
        None => None,
    };
    Ok((res, steps))
}

fn verified_steps(g: &CDGraph, model: &IlpModel, x: &[bool]) -> Result<Vec<BlockStep>, IlpError> {
    if !model.program.feasible(x) {
        return Err(IlpError::SolutionInfeasible("constraint check failed".into()));
    }
    let steps = model.steps(g, x);
    let rep = simulate_block(g, &steps, Some(model.budget.m_peak))
        .map_err(|e| IlpError::SolutionInfeasible(e.to_string()))?;
    if rep.mem_at_loss > model.budget.m_save {
        return Err(IlpError::SolutionInfeasible(format!(
            "{} bytes resident at the loss, save budget {}",
            rep.mem_at_loss, model.budget.m_save
        )));
    }
    let cost = model.program.cost(x) as u64;
    if rep.overhead != cost {
        return Err(IlpError::SolutionInfeasible(format!(
            "objective {cost} but simulated overhead {}",
            rep.overhead
        )));
    }
    Ok(steps)
}

/// `n` evenly spaced integers from `lo` to `hi`, endpoints included.
pub fn spaced(lo: Bytes, hi: Bytes, n: usize) -> Vec<Bytes> {
    if n <= 1 || hi <= lo {
        return vec![hi.max(lo)];
    }
    let mut v: Vec<Bytes> = (0..n)
        .map(|i| lo + ((hi - lo) as u128 * i as u128 / (n - 1) as u128) as Bytes)
        .collect();
    v.dedup();
    v
}

/// Peaks of the eager-free and no-recompute one-pass schedules.
pub fn peak_range(g: &CDGraph) -> Result<(Bytes, Bytes), SimError> {
    let lo = simulate_block(g, &crate::simulate::eager_free_steps(g), None)?.peak_mem;
    let hi = simulate_block(g, &crate::simulate::no_recompute_steps(g), None)?.peak_mem;
    Ok((lo, hi))
}

pub fn budget_grid(g: &CDGraph, n_peak: usize, n_save: usize) -> Result<Vec<BudgetPair>, SimError> {
    let (lo, hi) = peak_range(g)?;
    let out = g.output_size();
    let mut grid = Vec::new();
    for m_peak in spaced(lo, hi, n_peak) {
        for m_save in spaced(out, m_peak, n_save) {
            if m_save <= m_peak {
                grid.push(BudgetPair { m_peak, m_save });
            }
        }
    }
    Ok(grid)
}

/// Splits solved block steps into a chain-level option and measures it.
///
/// The forward part is everything before the loss; the backward part is
/// everything after it, minus frees of the block output and of the input
/// gradient. The output free is then placed right after the output's last
/// reader; the input gradient belongs to the preceding block.
pub fn extract_option(g: &CDGraph, steps: &[BlockStep], option_id: usize) -> Result<BlockOption, IlpError> {
    let lp = steps
        .iter()
        .position(|s| *s == BlockStep::Compute(g.loss_index))
        .ok_or_else(|| IlpError::SolutionInfeasible("loss never computed".into()))?;
    let fwd_ops = steps[..lp].to_vec();
    let bwd_ops: Vec<BlockStep> = steps[lp + 1..]
        .iter()
        .copied()
        .filter(|s| *s != BlockStep::Forget(g.output_data) && Some(*s) != g.input_grad.map(BlockStep::Forget))
        .collect();
    measure_option(g, option_id, fwd_ops, Some(bwd_ops)).map_err(|e| IlpError::SolutionInfeasible(e.to_string()))
}

fn time_of(g: &CDGraph, ops: &[BlockStep]) -> u64 {
    ops.iter()
        .map(|s| match s {
            BlockStep::Compute(c) => g.cnodes[*c].time,
            BlockStep::Forget(_) => 0,
        })
        .sum()
}

/// Inserts a free of the block output after the last backward step that
/// reads it, unless the list already frees it.
fn with_output_forget(g: &CDGraph, mut ops: Vec<BlockStep>) -> Vec<BlockStep> {
    let out = g.output_data;
    if ops.contains(&BlockStep::Forget(out)) {
        return ops;
    }
    let at = ops
        .iter()
        .rposition(|s| matches!(s, BlockStep::Compute(c) if g.cnodes[*c].deps.contains(&out)))
        .map_or(0, |i| i + 1);
    ops.insert(at, BlockStep::Forget(out));
    ops
}

/// Measures an option's memory figures in chain context: the forward runs
/// from the resident input; the backward starts from the saved set plus the
/// output gradient. A backward list without a free of the output gets one
/// after the output's last reader.
pub fn measure_option(
    g: &CDGraph,
    option_id: usize,
    fwd_ops: Vec<BlockStep>,
    bwd_ops: Option<Vec<BlockStep>>,
) -> Result<BlockOption, SimError> {
    let bwd_ops = bwd_ops.map(|ops| with_output_forget(g, ops));
    let ctx = SimContext::for_block(g);
    let mut st = ctx.initial_state();
    for (i, s) in fwd_ops.iter().enumerate() {
        ctx.step(&mut st, 0, *s, i)?;
    }
    let peak_fwd = st.peak;
    let save_mem = st.current;
    let (time_bwd, peak_bwd) = match &bwd_ops {
        Some(ops) => {
            st.peak = st.current;
            ctx.materialize(&mut st, 0, g.output_grad());
            for (i, s) in ops.iter().enumerate() {
                ctx.step(&mut st, 0, *s, fwd_ops.len() + i)?;
            }
            (Some(time_of(g, ops)), Some(st.peak))
        }
        None => (None, None),
    };
    Ok(BlockOption {
        option_id,
        time_fwd: time_of(g, &fwd_ops),
        time_bwd,
        save_mem,
        peak_fwd,
        peak_bwd,
        fwd_ops,
        bwd_ops: bwd_ops.unwrap_or_default(),
    })
}

/// Forward sweep that keeps only the block input and output.
pub fn option_zero(g: &CDGraph) -> Result<BlockOption, SimError> {
    let fwd: Vec<usize> = (0..g.cnodes.len()).filter(|&c| g.cnodes[c].kind == CKind::Forward).collect();
    let mut last = vec![None; g.dnodes.len()];
    for &c in &fwd {
        for &d in g.cnodes[c].deps.iter().chain(&g.cnodes[c].outputs) {
            last[d] = Some(c);
        }
    }
    let mut ops = Vec::new();
    for &c in &fwd {
        ops.push(BlockStep::Compute(c));
        let mut dead: Vec<usize> = g.cnodes[c]
            .deps
            .iter()
            .chain(&g.cnodes[c].outputs)
            .copied()
            .filter(|&d| last[d] == Some(c) && d != g.output_data && !g.is_source(d))
            .collect();
        dead.sort_unstable();
        dead.dedup();
        ops.extend(dead.into_iter().map(BlockStep::Forget));
    }
    measure_option(g, 0, ops, None)
}

fn dominates(a: &BlockOption, b: &BlockOption) -> bool {
    let ka = [a.total_time(), a.save_mem, a.peak_fwd, a.peak_bwd.unwrap_or(0)];
    let kb = [b.total_time(), b.save_mem, b.peak_fwd, b.peak_bwd.unwrap_or(0)];
    ka.iter().zip(&kb).all(|(x, y)| x <= y) && ka != kb
}

/// Drops repeated op lists and Pareto-dominated options, keeps option 0
/// first, and renumbers the survivors.
pub fn dedup_options(opts: Vec<BlockOption>) -> Vec<BlockOption> {
    let mut uniq: Vec<BlockOption> = Vec::new();
    for o in opts {
        if !uniq.iter().any(|u| u.fwd_ops == o.fwd_ops && u.bwd_ops == o.bwd_ops && u.time_bwd.is_some() == o.time_bwd.is_some()) {
            uniq.push(o);
        }
    }
    let (zero, rest): (Vec<_>, Vec<_>) = uniq.into_iter().partition(|o| o.time_bwd.is_none());
    let kept: Vec<BlockOption> = rest
        .iter()
        .filter(|o| !rest.iter().any(|q| dominates(q, o)))
        .cloned()
        .collect();
    zero.into_iter()
        .take(1)
        .chain(kept)
        .enumerate()
        .map(|(i, mut o)| {
            o.option_id = i;
            o
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilp_solver::{BinarySolver, BranchAndBound, SolveStatus};
    use crate::model::{CDGraphBuilder, DKind};

    fn toy() -> CDGraph {
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

    fn solve(g: &CDGraph, m_peak: Bytes, m_save: Bytes) -> (SolveStatus, Option<i64>, Option<Vec<BlockStep>>) {
        let (r, steps) = solve_block(g, BudgetPair { m_peak, m_save }, &BranchAndBound::default()).unwrap();
        (r.status, r.objective, steps)
    }

    #[test]
    fn toy_structure() {
        let g = toy();
        let m = build_model(&g, BudgetPair { m_peak: 100, m_save: 100 }).unwrap();
        assert_eq!(m.t, 5);
        for t in 0..5 {
            assert_eq!(m.r[t].len(), t + 1);
            assert_eq!(m.r[t][t], Bit::One);
        }
        // backward nodes and the loss never repeat
        assert_eq!(m.r[4][2], Bit::Zero);
        assert_eq!(m.r[4][3], Bit::Zero);
        assert!(matches!(m.r[4][1], Bit::Var(_)));
    }

    #[test]
    fn ample_budget_costs_nothing() {
        let g = toy();
        let (st, obj, steps) = solve(&g, 1000, 1000);
        assert_eq!((st, obj), (SolveStatus::Optimal, Some(0)));
        let opt = extract_option(&g, &steps.unwrap(), 1).unwrap();
        assert_eq!(opt.time_fwd, 5);
        assert_eq!(opt.time_bwd, Some(5));
    }

    #[test]
    fn tight_save_forces_recompute_of_f1() {
        let g = toy();
        // Only x and out fit at the loss, so d1 must be rebuilt.
        let (st, obj, steps) = solve(&g, 24, 8);
        assert_eq!((st, obj), (SolveStatus::Optimal, Some(2)));
        let steps = steps.unwrap();
        let f1_again = steps.iter().rposition(|s| *s == BlockStep::Compute(0)).unwrap();
        let b2 = steps.iter().position(|s| *s == BlockStep::Compute(3)).unwrap();
        assert!(f1_again < b2 && f1_again > g.loss_index);
    }

    #[test]
    fn below_eager_peak_is_infeasible() {
        let g = toy();
        let (lo, _) = peak_range(&g).unwrap();
        let (st, _, _) = solve(&g, lo - 1, 4);
        assert_eq!(st, SolveStatus::Infeasible);
    }

    #[test]
    fn save_above_peak_is_rejected() {
        let g = toy();
        assert!(matches!(
            build_model(&g, BudgetPair { m_peak: 10, m_save: 11 }),
            Err(IlpError::SaveAbovePeak { .. })
        ));
    }

    #[test]
    fn model_cap_is_enforced() {
        let g = toy();
        assert!(matches!(
            build_model_capped(&g, BudgetPair { m_peak: 10, m_save: 10 }, 5),
            Err(IlpError::ModelTooLarge { .. })
        ));
    }

    #[test]
    fn resident_memory_matches_simulator_trace() {
        let g = toy();
        let m = build_model(&g, BudgetPair { m_peak: 24, m_save: 8 }).unwrap();
        let r = BranchAndBound::default().solve(&m.program);
        let x = r.assignment.unwrap();
        let steps = m.steps(&g, &x);
        let rep = simulate_block(&g, &steps, None).unwrap();
        // The trace row of the last op belonging to each compute step.
        let mut sim = Vec::new();
        for (i, row) in rep.trace.iter().enumerate() {
            let next_is_compute = rep.trace.get(i + 1).is_none_or(|n| n.op.starts_with("compute"));
            if next_is_compute {
                sim.push(row.current_mem);
            }
        }
        let ilp: Vec<Bytes> = m.resident_after_steps(&g, &x).into_iter().map(|(_, _, b)| b).collect();
        assert_eq!(sim, ilp);
    }

    #[test]
    fn grid_spacing() {
        assert_eq!(spaced(100, 500, 3), vec![100, 300, 500]);
        assert_eq!(spaced(60, 300, 3), vec![60, 180, 300]);
        assert_eq!(spaced(7, 7, 4), vec![7]);
        let g = toy();
        let grid = budget_grid(&g, 20, 20).unwrap();
        assert!(grid.len() <= 400);
        assert!(grid.iter().all(|b| b.m_save <= b.m_peak && b.m_save >= g.output_size()));
    }

    #[test]
    fn option_zero_keeps_only_the_boundary() {
        let g = toy();
        let o = option_zero(&g).unwrap();
        assert_eq!(o.save_mem, 8);
        assert_eq!(o.peak_fwd, 16);
        assert_eq!(o.time_bwd, None);
        assert_eq!(o.time_fwd, 5);
    }

    fn opt(id: usize, t: u64, save: u64, ops: usize) -> BlockOption {
        BlockOption {
            option_id: id,
            time_fwd: t,
            time_bwd: Some(0),
            save_mem: save,
            peak_fwd: 10,
            peak_bwd: Some(10),
            fwd_ops: vec![BlockStep::Compute(0); ops],
            bwd_ops: vec![],
        }
    }

    #[test]
    fn dedup_drops_repeats_and_dominated() {
        let out = dedup_options(vec![opt(1, 10, 8, 1), opt(2, 10, 8, 1)]);
        assert_eq!(out.len(), 1);
        let out = dedup_options(vec![opt(1, 12, 8, 2), opt(2, 10, 8, 1)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].time_fwd, 10);
        assert_eq!(out[0].option_id, 0);
        let single = dedup_options(vec![opt(5, 1, 1, 1)]);
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn dedup_keeps_option_zero_first() {
        let g = toy();
        let z = option_zero(&g).unwrap();
        let out = dedup_options(vec![opt(1, 1, 1, 3), z.clone()]);
        assert_eq!(out[0].fwd_ops, z.fwd_ops);
        assert_eq!(out[1].option_id, 1);
    }
}
