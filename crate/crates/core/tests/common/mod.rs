//! Shared generators and oracles for the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use remat_core::block_ilp::{dedup_options, extract_option, option_zero, solve_block};
use remat_core::block_ilp::budget_grid;
use remat_core::fixtures::linear_chain;
use remat_core::ilp_solver::{BranchAndBound, SolveStatus};
use remat_core::simulate::{SimContext, SimState};
use remat_core::{BlockOption, Bytes, CKind, DKind, Chain, Micros, OptionMenu, ScheduleOp};

/// Random chain of 1..=max_l straight blocks with 1 or 2 layers each,
/// sizes 1..=5 and times 1..=9.
pub fn random_chain<R: Rng>(rng: &mut R, max_l: usize) -> Chain {
    let l = rng.gen_range(1..=max_l);
    let mut boundary = rng.gen_range(1..=5);
    let mut layers = Vec::new();
    for _ in 0..l {
        let n = rng.gen_range(1..=2);
        let mut acts = vec![boundary];
        for _ in 0..n {
            acts.push(rng.gen_range(1..=5));
        }
        boundary = *acts.last().unwrap();
        let fwd = (0..n).map(|_| rng.gen_range(1..=9)).collect();
        let bwd = (0..n).map(|_| rng.gen_range(1..=9)).collect();
        layers.push((acts, fwd, bwd));
    }
    linear_chain(&layers)
}

/// Option 0 plus up to `max_saving` options from a small budget grid.
pub fn small_menu(chain: &Chain, max_saving: usize) -> OptionMenu {
    let bb = BranchAndBound::default();
    let options = chain
        .blocks
        .iter()
        .map(|g| {
            let mut opts: Vec<BlockOption> = vec![option_zero(g).unwrap()];
            for b in budget_grid(g, 4, 4).unwrap() {
                if b.m_save < g.input_size() + g.output_size() {
                    continue;
                }
                let (res, steps) = solve_block(g, b, &bb).unwrap();
                if res.status == SolveStatus::Optimal {
                    opts.push(extract_option(g, &steps.unwrap(), opts.len()).unwrap());
                }
            }
            let mut opts = dedup_options(opts);
            opts.truncate(max_saving + 1);
            opts
        })
        .collect();
    OptionMenu::new(chain, options).unwrap()
}

/// Shortest makespan over every sequence of block forwards, the loss,
/// block backwards and boundary forgets that the simulator accepts with
/// each op's peak within `budget`.
///
/// A forward of a block only starts when its output and internals are
/// absent. A backward under option `o` needs the pack left by a forward
/// under `o`; forgetting either boundary of a block discards its pack.
/// Schedules are persistent: a boundary tensor is forgotten either before
/// any backward has run since it was computed, or after the backward of
/// the block it feeds.
pub fn chain_oracle(chain: &Chain, menu: &OptionMenu, budget: Bytes) -> Option<Micros> {
    chain_oracle_witness(chain, menu, budget).map(|(t, _)| t)
}

/// [`chain_oracle`] with the op sequence that reaches the optimum.
pub fn chain_oracle_witness(chain: &Chain, menu: &OptionMenu, budget: Bytes) -> Option<(Micros, Vec<ScheduleOp>)> {
    let ctx = SimContext::for_chain(chain, Some(menu));
    let l = chain.len();
    let loss_c = chain.blocks[l - 1].cnodes.iter().position(|c| c.kind == CKind::Loss).unwrap();
    let loss_id = chain.blocks[l - 1].cnodes[loss_c].id.clone();
    let start = ctx.initial_state();
    if start.current > budget {
        return None;
    }
    let internals: Vec<Vec<usize>> = chain
        .blocks
        .iter()
        .enumerate()
        .map(|(i, g)| {
            (0..g.dnodes.len())
                .filter(|&d| d != g.input_data && g.dnodes[d].kind == DKind::Data)
                .map(|d| ctx.key(i, d))
                .collect()
        })
        .collect();
    let bwd_done = |st: &SimState, i: usize| {
        let g = &chain.blocks[i];
        g.cnodes.iter().enumerate().any(|(c, n)| n.kind == CKind::Backward && st.runs[i][c] > 0)
    };
    /// Per block: the option whose pack is held, and whether the block's
    /// input was computed after the latest backward.
    type Abstract = (Vec<Option<usize>>, Vec<bool>);
    type Key = (Vec<bool>, Vec<u64>, bool, Vec<bool>, Abstract);
    let key = |st: &SimState, ab: &Abstract| -> Key {
        (st.resident.clone(), st.contrib.clone(), st.loss_done, (0..l).map(|i| bwd_done(st, i)).collect(), ab.clone())
    };
    let mut best: HashMap<Key, Micros> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let init: Abstract = (vec![None; l], vec![false; l]);
    let mut states: Vec<(SimState, Abstract)> = vec![(start.clone(), init.clone())];
    let mut parent: Vec<Option<(usize, ScheduleOp)>> = vec![None];
    best.insert(key(&start, &init), 0);
    heap.push(Reverse((0u64, 0usize)));
    while let Some(Reverse((t, ix))) = heap.pop() {
        let (st, ab) = states[ix].clone();
        let (pack, fresh) = &ab;
        if best.get(&key(&st, &ab)).is_some_and(|&b| b < t) {
            continue;
        }
        if bwd_done(&st, 0) {
            let mut ops = Vec::new();
            let mut at = ix;
            while let Some((p, op)) = parent[at].clone() {
                ops.push(op);
                at = p;
            }
            ops.reverse();
            return Some((t, ops));
        }
        let mut ops = Vec::new();
        for i in 0..l {
            if i > 0 {
                let g = &chain.blocks[i];
                if st.resident[ctx.key(i, g.input_data)] && (fresh[i] || bwd_done(&st, i)) {
                    ops.push(ScheduleOp::Forget { block: i, dnode: g.dnodes[g.input_data].id.clone() });
                }
            }
            if bwd_done(&st, i) {
                continue;
            }
            if internals[i].iter().all(|&k| !st.resident[k]) {
                for o in 0..menu.options[i].len() {
                    ops.push(ScheduleOp::BlockFwd { block: i, option: o });
                }
            }
            if let Some(o) = pack[i] {
                ops.push(ScheduleOp::BlockBwd { block: i, option: o });
            }
        }
        if !st.loss_done {
            ops.push(ScheduleOp::Compute { block: l - 1, cnode: loss_id.clone() });
        }
        for op in ops {
            let op_for_parent = op.clone();
            let mut next = st.clone();
            next.peak = next.current;
            let r = ctx.apply(&mut next, &op, 0, None);
            if r.is_err() || next.peak > budget {
                continue;
            }
            let (mut next_pack, mut next_fresh) = (pack.clone(), fresh.clone());
            match &op {
                ScheduleOp::BlockFwd { block, option } => {
                    next_pack[*block] = (*option > 0).then_some(*option);
                    if block + 1 < l {
                        next_fresh[block + 1] = true;
                    }
                }
                ScheduleOp::BlockBwd { block, .. } => {
                    next_pack[*block] = None;
                    next_fresh.iter_mut().for_each(|f| *f = false);
                }
                ScheduleOp::Forget { block, .. } => {
                    next_pack[*block] = None;
                    next_pack[*block - 1] = None;
                }
                ScheduleOp::Compute { .. } => {}
            }
            let nt = next.elapsed;
            let next_ab = (next_pack, next_fresh);
            let k = key(&next, &next_ab);
            if best.get(&k).is_none_or(|&b| nt < b) {
                best.insert(k, nt);
                states.push((next, next_ab));
                parent.push(Some((ix, op_for_parent)));
                heap.push(Reverse((nt, states.len() - 1)));
            }
        }
    }
    None
}
