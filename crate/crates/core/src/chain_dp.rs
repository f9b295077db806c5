//! Dynamic program over a chain of blocks with per-block option menus.
//!
//! `Opt(s, t, m)` is the best time to run the forward of blocks `s..t`,
//! then (for `t = L`) the loss, then their backward, given that `a_s` is
//! resident and not charged to `m`, and that the gradient `δ_t` entering
//! from the right (for `t < L`) is resident and charged to `m`. On exit
//! `a_s` and `δ_s` are resident and nothing else from the range is.
//!
//! Case 1 runs block `s` with a saving option `o`, keeps its pack (the
//! saved set, which includes `a_s` and `a_{s+1}`), solves `s+1..t` and
//! runs the backward. Case 2 sweeps forward without saving up to a cut
//! `i`, solves `i..t` while holding `a_i`, frees `a_i` and solves `s..i`.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{BlockOption, Bytes, Chain, Micros, Schedule, ScheduleOp};

pub const DEFAULT_UNITS: u64 = 500;
pub const INF: Micros = Micros::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("no schedule fits in {budget} bytes")]
    InfeasibleBudget { budget: Bytes },
    #[error("menu does not match the chain: {0}")]
    BadMenu(String),
}

/// Execution options of every block. Index 0 of each list is the forward
/// sweep that saves nothing; it has no backward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionMenu {
    /// `a_0 ..= a_L`.
    pub act_sizes: Vec<Bytes>,
    /// Sizes of `δ_0 .. δ_{L-1}` (block input gradients) followed by the
    /// gradient the loss produces.
    pub grad_sizes: Vec<Bytes>,
    pub options: Vec<Vec<BlockOption>>,
}

impl OptionMenu {
    pub fn new(chain: &Chain, options: Vec<Vec<BlockOption>>) -> Result<Self, ChainError> {
        if options.len() != chain.len() || chain.is_empty() {
            return Err(ChainError::BadMenu(format!(
                "{} option lists for {} blocks",
                options.len(),
                chain.len()
            )));
        }
        for (i, opts) in options.iter().enumerate() {
            match opts.first() {
                Some(o) if o.time_bwd.is_none() => {}
                _ => return Err(ChainError::BadMenu(format!("block {i} lacks a leading forward-only option"))),
            }
            if opts[1..].iter().any(|o| o.time_bwd.is_none() || o.peak_bwd.is_none()) {
                return Err(ChainError::BadMenu(format!("block {i} has a saving option without a backward")));
            }
        }
        let mut grad_sizes = Vec::with_capacity(chain.len() + 1);
        for b in &chain.blocks {
            let ig = b
                .input_grad
                .ok_or_else(|| ChainError::BadMenu("block without an input gradient".into()))?;
            grad_sizes.push(b.dnodes[ig].size);
        }
        let last = chain.blocks.last().unwrap();
        grad_sizes.push(last.dnodes[last.output_grad()].size);
        Ok(OptionMenu {
            act_sizes: chain.act_sizes(),
            grad_sizes,
            options,
        })
    }

    pub fn option(&self, block: usize, option: usize) -> Option<&BlockOption> {
        self.options.get(block)?.get(option)
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    /// Largest number of saving options over all blocks.
    pub fn max_saving_options(&self) -> usize {
        self.options.iter().map(|o| o.len() - 1).max().unwrap_or(0)
    }
}

/// `unit = ceil(budget / units)`; sizes are rounded up and the budget down.
pub fn quantize(sizes: &[Bytes], budget: Bytes, units: u64) -> (Bytes, Vec<u64>, u64) {
    let unit = budget.div_ceil(units.max(1)).max(1);
    (unit, sizes.iter().map(|s| s.div_ceil(unit)).collect(), budget / unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QOption {
    time: Micros,
    fwd_need: u64,
    bwd_need: u64,
    pin: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QSweep {
    time: Micros,
    /// Charge when the sweep starts at the frame input.
    first_need: u64,
    /// Charge for later blocks of the sweep, whose input is held on top.
    mid_need: u64,
}

/// Menu figures in memory units, every charge rounded up on its own.
#[derive(Debug, Clone)]
struct QMenu {
    a: Vec<u64>,
    g: Vec<u64>,
    opts: Vec<Vec<QOption>>,
    sweep: Vec<QSweep>,
}

impl QMenu {
    fn new(menu: &OptionMenu, unit: Bytes) -> Self {
        let q = |b: Bytes| b.div_ceil(unit);
        let a = &menu.act_sizes;
        QMenu {
            a: a.iter().map(|&x| q(x)).collect(),
            g: menu.grad_sizes.iter().map(|&x| q(x)).collect(),
            opts: menu
                .options
                .iter()
                .enumerate()
                .map(|(s, os)| {
                    os[1..]
                        .iter()
                        .map(|o| QOption {
                            time: o.total_time(),
                            fwd_need: q(o.peak_fwd - a[s]),
                            bwd_need: q(o.peak_bwd.unwrap() - a[s]),
                            pin: q(o.save_mem - a[s]),
                        })
                        .collect()
                })
                .collect(),
            sweep: menu
                .options
                .iter()
                .enumerate()
                .map(|(s, os)| QSweep {
                    time: os[0].time_fwd,
                    first_need: q(os[0].peak_fwd - a[s]),
                    mid_need: q(os[0].peak_fwd),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arg {
    Infeasible,
    Empty,
    /// Saving option of block `s` (its index in the menu, so at least 1).
    Case1(usize),
    /// Cut index `i` with `s < i < t`.
    Case2(usize),
}

#[derive(Debug, Clone)]
pub struct DPTable {
    pub l: usize,
    pub m_max: u64,
    pub unit: Bytes,
    opt: Vec<Micros>,
    arg: Vec<Arg>,
    /// Candidates evaluated per cell.
    pub candidates: Vec<u32>,
    q: QMenu,
    max_options: usize,
}

impl DPTable {
    fn ix(&self, s: usize, t: usize, m: u64) -> usize {
        (s * (self.l + 1) + t) * (self.m_max as usize + 1) + m as usize
    }

    /// `Opt(s, t, m)`, or `INF`.
    pub fn opt(&self, s: usize, t: usize, m: u64) -> Micros {
        self.opt[self.ix(s, t, m)]
    }

    pub fn arg(&self, s: usize, t: usize, m: u64) -> Arg {
        self.arg[self.ix(s, t, m)]
    }

    pub fn candidates_at(&self, s: usize, t: usize, m: u64) -> u32 {
        self.candidates[self.ix(s, t, m)]
    }

    /// Upper bound on candidates for cells of span `t - s`.
    pub fn candidate_bound(&self, s: usize, t: usize) -> u32 {
        ((t - s) + self.max_options + 1) as u32
    }

    fn entry_grad(&self, t: usize) -> u64 {
        if t < self.l {
            self.q.g[t]
        } else {
            0
        }
    }

    pub fn validity_case1(&self, s: usize, t: usize, o: usize, m: u64) -> bool {
        let op = &self.q.opts[s][o - 1];
        op.fwd_need + self.entry_grad(t) <= m && op.bwd_need <= m && op.pin <= m
    }

    pub fn validity_case2(&self, s: usize, i: usize, t: usize, m: u64) -> bool {
        let e = self.entry_grad(t);
        self.q.a[i] <= m
            && self.q.sweep[s].first_need + e <= m
            && (s + 1..i).all(|j| self.q.sweep[j].mid_need + e <= m)
    }

    fn cell(&self, s: usize, t: usize, m: u64) -> (Micros, Arg, u32) {
        if s == t {
            let need = self.q.g[t];
            return if need <= m { (0, Arg::Empty, 0) } else { (INF, Arg::Infeasible, 0) };
        }
        let mut best = (INF, Arg::Infeasible);
        let mut count = 0;
        for o in 1..=self.q.opts[s].len() {
            count += 1;
            if !self.validity_case1(s, t, o, m) {
                continue;
            }
            let op = &self.q.opts[s][o - 1];
            let rest = self.opt(s + 1, t, m - op.pin);
            if rest != INF && op.time + rest < best.0 {
                best = (op.time + rest, Arg::Case1(o));
            }
        }
        let mut sweep_time = self.q.sweep[s].time;
        for i in s + 1..t {
            count += 1;
            if i > s + 1 {
                sweep_time += self.q.sweep[i - 1].time;
            }
            if !self.validity_case2(s, i, t, m) {
                continue;
            }
            let right = self.opt(i, t, m - self.q.a[i]);
            let left = self.opt(s, i, m);
            if right != INF && left != INF && sweep_time + right + left < best.0 {
                best = (sweep_time + right + left, Arg::Case2(i));
            }
        }
        (best.0, best.1, count)
    }
}

/// Fills the table for memory `0..=m_max` units of `unit` bytes.
pub fn compute_table(menu: &OptionMenu, unit: Bytes, m_max: u64) -> DPTable {
    let l = menu.len();
    let cells = (l + 1) * (l + 1) * (m_max as usize + 1);
    let mut table = DPTable {
        l,
        m_max,
        unit,
        opt: vec![INF; cells],
        arg: vec![Arg::Infeasible; cells],
        candidates: vec![0; cells],
        q: QMenu::new(menu, unit),
        max_options: menu.max_saving_options(),
    };
    for k in 0..=l {
        for s in 0..=l - k {
            let t = s + k;
            let row: Vec<(Micros, Arg, u32)> = (0..=m_max).into_par_iter().map(|m| table.cell(s, t, m)).collect();
            for (m, (v, a, c)) in row.into_iter().enumerate() {
                let ix = table.ix(s, t, m as u64);
                debug_assert!(c <= table.candidate_bound(s, t));
                table.opt[ix] = v;
                table.arg[ix] = a;
                table.candidates[ix] = c;
            }
        }
    }
    table
}

/// Emits the schedule for `Opt(s, t, m)`.
pub fn build_schedule(
    table: &DPTable,
    chain: &Chain,
    s: usize,
    t: usize,
    m: u64,
    ops: &mut Vec<ScheduleOp>,
) -> Result<(), ChainError> {
    let infeasible = || ChainError::InfeasibleBudget {
        budget: table.m_max * table.unit,
    };
    match table.arg(s, t, m) {
        Arg::Infeasible => return Err(infeasible()),
        Arg::Empty => {
            if t == table.l {
                let last = &chain.blocks[t - 1];
                ops.push(ScheduleOp::Compute {
                    block: t - 1,
                    cnode: last.cnodes[last.loss_index].id.clone(),
                });
            }
        }
        Arg::Case1(o) => {
            ops.push(ScheduleOp::BlockFwd { block: s, option: o });
            build_schedule(table, chain, s + 1, t, m - table.q.opts[s][o - 1].pin, ops)?;
            ops.push(ScheduleOp::BlockBwd { block: s, option: o });
        }
        Arg::Case2(i) => {
            ops.push(ScheduleOp::BlockFwd { block: s, option: 0 });
            for j in s + 1..i {
                ops.push(ScheduleOp::BlockFwd { block: j, option: 0 });
                ops.push(forget_input(chain, j));
            }
            build_schedule(table, chain, i, t, m - table.q.a[i], ops)?;
            ops.push(forget_input(chain, i));
            build_schedule(table, chain, s, i, m, ops)?;
        }
    }
    Ok(())
}

fn forget_input(chain: &Chain, j: usize) -> ScheduleOp {
    let b = &chain.blocks[j];
    ScheduleOp::Forget {
        block: j,
        dnode: b.dnodes[b.input_data].id.clone(),
    }
}

/// Memory available at the top level, in units, once the model input is
/// held: `floor(budget/unit) - ceil(a_0/unit)`.
pub fn top_level_memory(menu: &OptionMenu, budget: Bytes, unit: Bytes) -> Option<u64> {
    (budget / unit).checked_sub(menu.act_sizes[0].div_ceil(unit))
}

/// Table and top-level memory for `budget` bytes in units of `unit`.
pub fn solve_table_with_unit(menu: &OptionMenu, budget: Bytes, unit: Bytes) -> (DPTable, Option<u64>) {
    let top = top_level_memory(menu, budget, unit);
    let table = compute_table(menu, unit, top.unwrap_or(0));
    (table, top)
}

pub fn solve_table(menu: &OptionMenu, budget: Bytes, units: u64) -> (DPTable, Option<u64>) {
    solve_table_with_unit(menu, budget, quantize(&[], budget, units).0)
}

/// Best schedule for the whole chain within `budget` bytes, with the
/// memory axis split into `units` steps.
pub fn solve_chain(chain: &Chain, menu: &OptionMenu, budget: Bytes, units: u64) -> Result<Schedule, ChainError> {
    solve_chain_with_unit(chain, menu, budget, quantize(&[], budget, units).0)
}

/// As [`solve_chain`] with an explicit unit, so several budgets can share
/// one rounding.
pub fn solve_chain_with_unit(chain: &Chain, menu: &OptionMenu, budget: Bytes, unit: Bytes) -> Result<Schedule, ChainError> {
    let (table, top) = solve_table_with_unit(menu, budget, unit);
    let infeasible = ChainError::InfeasibleBudget { budget };
    let m = top.ok_or(infeasible.clone())?;
    if table.opt(0, table.l, m) == INF {
        return Err(infeasible);
    }
    let mut ops = Vec::new();
    build_schedule(&table, chain, 0, table.l, m, &mut ops)?;
    let mut sched = Schedule::new(ops);
    sched.meta.budget = Some(budget);
    sched.meta.makespan = Some(table.opt(0, table.l, m));
    Ok(sched)
}
