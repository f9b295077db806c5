//! Exact 0/1 program solver (depth-first branch and bound with bound
//! propagation over integer rows) and an exhaustive schedule search used
//! to cross-check block programs.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block_ilp::BudgetPair;
use crate::model::{BlockStep, CDGraph, CKind};
use crate::simulate::{SimContext, SimError, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub terms: Vec<(usize, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

impl Row {
    pub fn new(terms: Vec<(usize, i64)>, sense: Sense, rhs: i64) -> Self {
        Row { terms, sense, rhs }
    }

    pub fn holds(&self, x: &[bool]) -> bool {
        let lhs: i64 = self.terms.iter().filter(|(v, _)| x[*v]).map(|(_, a)| a).sum();
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Ge => lhs >= self.rhs,
            Sense::Eq => lhs == self.rhs,
        }
    }
}

/// Minimise `objective · x` over binary `x` subject to `rows`.
///
/// Objective coefficients must be nonnegative. `branch_order` lists
/// variables in the order they are branched on, each with the value tried
/// first; unlisted variables follow in index order, 0 first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinaryProgram {
    pub objective: Vec<i64>,
    pub rows: Vec<Row>,
    pub fixed: Vec<Option<bool>>,
    pub branch_order: Vec<(usize, bool)>,
}

impl BinaryProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: i64) -> usize {
        assert!(cost >= 0, "objective coefficients must be nonnegative");
        self.objective.push(cost);
        self.fixed.push(None);
        self.objective.len() - 1
    }

    pub fn fix(&mut self, v: usize, value: bool) {
        self.fixed[v] = Some(value);
    }

    pub fn add_row(&mut self, terms: Vec<(usize, i64)>, sense: Sense, rhs: i64) {
        self.rows.push(Row::new(terms, sense, rhs));
    }

    pub fn feasible(&self, x: &[bool]) -> bool {
        x.len() == self.num_vars()
            && self.fixed.iter().zip(x).all(|(f, v)| f.is_none_or(|f| f == *v))
            && self.rows.iter().all(|r| r.holds(x))
    }

    pub fn cost(&self, x: &[bool]) -> i64 {
        self.objective.iter().zip(x).filter(|(_, v)| **v).map(|(c, _)| c).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<i64>,
    /// Best assignment found; for `TimedOut` this is the incumbent, if any.
    pub assignment: Option<Vec<bool>>,
    pub stats: SolveStats,
}

pub trait BinarySolver {
    fn solve(&self, p: &BinaryProgram) -> SolveResult;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchAndBound {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
}

impl Default for BranchAndBound {
    fn default() -> Self {
        BranchAndBound {
            time_limit: Some(Duration::from_secs(120)),
            node_limit: None,
        }
    }
}

impl BinarySolver for BranchAndBound {
    fn solve(&self, p: &BinaryProgram) -> SolveResult {
        let start = Instant::now();
        let mut s = Search::new(p, *self, start);
        let mut ok = true;
        for (v, f) in p.fixed.iter().enumerate() {
            if let Some(val) = *f {
                match s.val[v] {
                    UNSET => s.assign(v, val),
                    cur if (cur == 1) != val => ok = false,
                    _ => {}
                }
            }
        }
        let mut all_rows: Vec<usize> = (0..s.rows.len()).collect();
        s.queue.append(&mut all_rows);
        for r in s.queue.iter() {
            s.queued[*r] = true;
        }
        if ok && s.propagate() {
            s.dfs(0);
        }
        let wall_ms = start.elapsed().as_millis() as u64;
        let assignment = s.best.take().map(|(_, x)| x);
        if let Some(x) = &assignment {
            assert!(p.feasible(x), "branch and bound returned an infeasible assignment");
        }
        let objective = assignment.as_ref().map(|x| p.cost(x));
        let status = if s.stopped {
            SolveStatus::TimedOut
        } else if assignment.is_some() {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        SolveResult {
            status,
            objective,
            assignment,
            stats: SolveStats { nodes: s.nodes, wall_ms },
        }
    }
}

const UNSET: i8 = -1;

/// `Σ a·x ≤ rhs`.
struct LeRow {
    terms: Vec<(usize, i64)>,
    rhs: i64,
}

struct Search<'a> {
    p: &'a BinaryProgram,
    cfg: BranchAndBound,
    start: Instant,
    rows: Vec<LeRow>,
    occ: Vec<Vec<(usize, i64)>>,
    order: Vec<(usize, bool)>,
    val: Vec<i8>,
    minact: Vec<i64>,
    trail: Vec<usize>,
    queue: Vec<usize>,
    queued: Vec<bool>,
    cost: i64,
    best: Option<(i64, Vec<bool>)>,
    nodes: u64,
    stopped: bool,
    /// Rows saying "at least one of these is 1".
    covers: Vec<Vec<usize>>,
    used: Vec<bool>,
}

impl<'a> Search<'a> {
    fn new(p: &'a BinaryProgram, cfg: BranchAndBound, start: Instant) -> Self {
        let n = p.num_vars();
        let mut rows = Vec::new();
        for r in &p.rows {
            let neg = || LeRow {
                terms: r.terms.iter().map(|&(v, a)| (v, -a)).collect(),
                rhs: -r.rhs,
            };
            let pos = || LeRow {
                terms: r.terms.clone(),
                rhs: r.rhs,
            };
            match r.sense {
                Sense::Le => rows.push(pos()),
                Sense::Ge => rows.push(neg()),
                Sense::Eq => {
                    rows.push(pos());
                    rows.push(neg());
                }
            }
        }
        let mut occ = vec![Vec::new(); n];
        let mut minact = vec![0; rows.len()];
        for (ri, r) in rows.iter().enumerate() {
            for &(v, a) in &r.terms {
                occ[v].push((ri, a));
                if a < 0 {
                    minact[ri] += a;
                }
            }
        }
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for &(v, pref) in &p.branch_order {
            if !seen[v] {
                seen[v] = true;
                order.push((v, pref));
            }
        }
        order.extend((0..n).filter(|&v| !seen[v]).map(|v| (v, false)));
        let nrows = rows.len();
        let covers = rows
            .iter()
            .filter(|r| r.rhs == -1 && r.terms.len() > 1 && r.terms.iter().all(|&(_, a)| a == -1))
            .map(|r| r.terms.iter().map(|&(v, _)| v).collect())
            .collect();
        Search {
            p,
            cfg,
            start,
            rows,
            occ,
            order,
            val: vec![UNSET; n],
            minact,
            trail: Vec::new(),
            queue: Vec::new(),
            queued: vec![false; nrows],
            cost: 0,
            best: None,
            nodes: 0,
            stopped: false,
            covers,
            used: vec![false; n],
        }
    }

    fn assign(&mut self, v: usize, value: bool) {
        self.val[v] = value as i8;
        self.trail.push(v);
        if value {
            self.cost += self.p.objective[v];
        }
        for &(r, a) in &self.occ[v] {
            if (a > 0 && value) || (a < 0 && !value) {
                self.minact[r] += a.abs();
            }
            if !self.queued[r] {
                self.queued[r] = true;
                self.queue.push(r);
            }
        }
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().unwrap();
            let value = self.val[v] == 1;
            if value {
                self.cost -= self.p.objective[v];
            }
            for &(r, a) in &self.occ[v] {
                if (a > 0 && value) || (a < 0 && !value) {
                    self.minact[r] -= a.abs();
                }
            }
            self.val[v] = UNSET;
        }
        for r in self.queue.drain(..) {
            self.queued[r] = false;
        }
    }

    /// Fixes every variable whose other value would violate a row.
    /// Returns `false` on conflict.
    fn propagate(&mut self) -> bool {
        while let Some(r) = self.queue.pop() {
            self.queued[r] = false;
            let slack = self.rows[r].rhs - self.minact[r];
            if slack < 0 {
                return false;
            }
            for i in 0..self.rows[r].terms.len() {
                let (v, a) = self.rows[r].terms[i];
                if self.val[v] == UNSET && a.abs() > slack {
                    self.assign(v, a < 0);
                }
            }
        }
        true
    }

    fn out_of_budget(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        if self.cfg.node_limit.is_some_and(|l| self.nodes >= l) {
            self.stopped = true;
        }
        if self.nodes.is_multiple_of(1024) && self.cfg.time_limit.is_some_and(|l| self.start.elapsed() >= l) {
            self.stopped = true;
        }
        self.stopped
    }

    fn bound_ok(&self, extra: i64) -> bool {
        self.best.as_ref().is_none_or(|(b, _)| self.cost + extra < *b)
    }

    /// Cost still forced by unsatisfied cover rows, packed greedily so
    /// that no variable is counted twice.
    fn cover_bound(&mut self) -> i64 {
        let mut extra = 0;
        let mut touched = Vec::new();
        for c in &self.covers {
            if c.iter().any(|&v| self.val[v] == 1 || (self.val[v] == UNSET && self.used[v])) {
                continue;
            }
            let cheapest = c
                .iter()
                .filter(|&&v| self.val[v] == UNSET)
                .map(|&v| self.p.objective[v])
                .min()
                .unwrap_or(0);
            if cheapest <= 0 {
                continue;
            }
            extra += cheapest;
            for &v in c {
                if self.val[v] == UNSET {
                    self.used[v] = true;
                    touched.push(v);
                }
            }
        }
        for v in touched {
            self.used[v] = false;
        }
        extra
    }

    /// Whether setting `v` to `value` can never break a row, whatever the
    /// unfixed variables become.
    fn harmless(&self, v: usize, value: bool) -> bool {
        self.occ[v].iter().all(|&(r, a)| {
            if (a > 0) != value {
                return true;
            }
            let row = &self.rows[r];
            let max: i64 = row
                .terms
                .iter()
                .map(|&(u, b)| match self.val[u] {
                    _ if u == v => b * value as i64,
                    UNSET => b.max(0),
                    x => b * x as i64,
                })
                .sum();
            max <= row.rhs
        })
    }

    fn dfs(&mut self, from: usize) {
        self.nodes += 1;
        if self.out_of_budget() || !self.bound_ok(0) {
            return;
        }
        if self.best.is_some() && !self.covers.is_empty() {
            let extra = self.cover_bound();
            if !self.bound_ok(extra) {
                return;
            }
        }
        let Some(pos) = (from..self.order.len()).find(|&i| self.val[self.order[i].0] == UNSET) else {
            debug_assert!(self.minact.iter().zip(&self.rows).all(|(m, r)| *m <= r.rhs));
            let x: Vec<bool> = self.val.iter().map(|&v| v == 1).collect();
            self.best = Some((self.cost, x));
            return;
        };
        let (v, pref) = self.order[pos];
        // A free value that cannot hurt any row dominates the other one.
        let only = [pref, !pref]
            .into_iter()
            .find(|&x| if x { self.p.objective[v] <= 0 } else { self.p.objective[v] >= 0 } && self.harmless(v, x));
        let values: &[bool] = match only {
            Some(true) => &[true],
            Some(false) => &[false],
            None => &[pref, !pref],
        };
        for &value in values {
            if value && !self.bound_ok(self.p.objective[v]) {
                continue;
            }
            let mark = self.trail.len();
            self.assign(v, value);
            if self.propagate() {
                self.dfs(pos + 1);
            }
            self.undo_to(mark);
            if self.stopped {
                return;
            }
        }
    }
}

/// Exhaustive search over the same stage/step schedule class as the block
/// program: stage `t` runs step `t` and any earlier forward steps, the loss
/// and backward nodes run only in their own stage, and after a step runs
/// any subset of the resident tensors it touches may be freed. Returns the
/// minimal recomputation cost and a simulator-checked witness, or `None`
/// when no schedule fits.
pub fn brute_force_block(
    g: &CDGraph,
    b: BudgetPair,
    recompute_cap: u32,
) -> Result<Option<(u64, Vec<BlockStep>)>, OracleError> {
    let ctx = SimContext::for_block(g);
    let mut search = Oracle {
        g,
        ctx: &ctx,
        b,
        cap: recompute_cap.max(1),
        memo: HashMap::new(),
    };
    let st = ctx.initial_state();
    if st.current > b.m_peak {
        return Ok(None);
    }
    let Some(cost) = search.best(0, 0, &st)? else {
        return Ok(None);
    };
    let steps = search.witness(st);
    let rep = crate::simulate::simulate_block(g, &steps, Some(b.m_peak)).map_err(OracleError::Witness)?;
    assert!(rep.mem_at_loss <= b.m_save && rep.overhead == cost, "oracle witness disagrees with the simulator");
    Ok(Some((cost, steps)))
}

pub const ORACLE_STATE_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search exceeded {0} states")]
    SearchExploded(usize),
    #[error("witness failed in the simulator: {0}")]
    Witness(SimError),
}

type OracleKey = (usize, usize, Vec<bool>, Vec<u64>, Vec<u32>);

struct Oracle<'a> {
    g: &'a CDGraph,
    ctx: &'a SimContext<'a>,
    b: BudgetPair,
    cap: u32,
    /// Best remaining cost with the choice that reaches it: run, and the
    /// mask of freed candidates.
    memo: HashMap<OracleKey, Option<(u64, bool, u32)>>,
}

impl Oracle<'_> {
    fn key(t: usize, k: usize, st: &SimState) -> OracleKey {
        (t, k, st.resident.clone(), st.contrib.clone(), st.runs[0].clone())
    }

    fn can_run(&self, t: usize, k: usize) -> bool {
        k == t || (k < t && self.g.cnodes[k].kind == CKind::Forward)
    }

    /// Resident non-source tensors touched by step `k`.
    fn candidates(&self, k: usize, st: &SimState) -> Vec<usize> {
        let c = &self.g.cnodes[k];
        let mut v: Vec<usize> = c
            .deps
            .iter()
            .chain(&c.outputs)
            .copied()
            .filter(|&d| !self.g.is_source(d) && st.resident[self.ctx.key(0, d)])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// State after running `k` (if `run`) and freeing `mask`, or `None`
    /// when the step is not allowed.
    fn advance(&self, t: usize, k: usize, st: &SimState, run: bool, mask: u32) -> Option<SimState> {
        let mut next = st.clone();
        if !run {
            return (k < t).then_some(next);
        }
        if !self.can_run(t, k) || st.runs[0][k] >= self.cap {
            return None;
        }
        if k == self.g.loss_index && st.current > self.b.m_save {
            return None;
        }
        next.peak = next.current;
        self.ctx.compute(&mut next, 0, k, 0).ok()?;
        if next.peak > self.b.m_peak {
            return None;
        }
        for (i, d) in self.candidates(k, &next).into_iter().enumerate() {
            if mask >> i & 1 == 1 {
                self.ctx.forget(&mut next, 0, d, 0).ok()?;
            }
        }
        Some(next)
    }

    fn best(&mut self, t: usize, k: usize, st: &SimState) -> Result<Option<u64>, OracleError> {
        let nt = self.g.cnodes.len();
        if t == nt {
            let clean = (0..self.g.dnodes.len()).all(|d| self.g.is_source(d) || !st.resident[self.ctx.key(0, d)]);
            return Ok(clean.then_some(0));
        }
        if k > t {
            return self.best(t + 1, 0, st);
        }
        let key = Self::key(t, k, st);
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.map(|(c, _, _)| c));
        }
        if self.memo.len() >= ORACLE_STATE_CAP {
            return Err(OracleError::SearchExploded(ORACLE_STATE_CAP));
        }
        let mut best: Option<(u64, bool, u32)> = None;
        if let Some(next) = self.advance(t, k, st, false, 0) {
            if let Some(c) = self.best(t, k + 1, &next)? {
                best = Some((c, false, 0));
            }
        }
        if self.can_run(t, k) {
            let step_cost = if k < t { self.g.cnodes[k].time } else { 0 };
            let n_cand = {
                let mut probe = st.clone();
                probe.peak = probe.current;
                match self.ctx.compute(&mut probe, 0, k, 0) {
                    Ok(()) => self.candidates(k, &probe).len(),
                    Err(_) => 0,
                }
            };
            for mask in 0..1u32 << n_cand {
                let Some(next) = self.advance(t, k, st, true, mask) else {
                    continue;
                };
                if let Some(c) = self.best(t, k + 1, &next)? {
                    let total = c + step_cost;
                    if best.is_none_or(|(b, _, _)| total < b) {
                        best = Some((total, true, mask));
                    }
                }
            }
        }
        self.memo.insert(key, best);
        Ok(best.map(|(c, _, _)| c))
    }

    fn witness(&self, mut st: SimState) -> Vec<BlockStep> {
        let nt = self.g.cnodes.len();
        let mut steps = Vec::new();
        for t in 0..nt {
            for k in 0..=t {
                let (_, run, mask) = self.memo[&Self::key(t, k, &st)].expect("witness follows a feasible path");
                if run {
                    steps.push(BlockStep::Compute(k));
                    let mut probe = st.clone();
                    self.ctx.compute(&mut probe, 0, k, 0).expect("replayed step is valid");
                    for (i, d) in self.candidates(k, &probe).into_iter().enumerate() {
                        if mask >> i & 1 == 1 {
                            steps.push(BlockStep::Forget(d));
                        }
                    }
                }
                st = self.advance(t, k, &st, run, mask).expect("replayed step is valid");
            }
        }
        steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exhaustive(p: &BinaryProgram) -> Option<i64> {
        let n = p.num_vars();
        (0..1u32 << n)
            .filter_map(|mask| {
                let x: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                p.feasible(&x).then(|| p.cost(&x))
            })
            .min()
    }

    #[test]
    fn knapsack_cover() {
        // min 3a + 2b + 4c  s.t. 2a + b + 3c >= 3
        let mut p = BinaryProgram::new();
        let (a, b, c) = (p.add_var(3), p.add_var(2), p.add_var(4));
        p.add_row(vec![(a, 2), (b, 1), (c, 3)], Sense::Ge, 3);
        let r = BranchAndBound::default().solve(&p);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, Some(4));
        assert_eq!(exhaustive(&p), Some(4));
    }

    #[test]
    fn infeasible_equality() {
        let mut p = BinaryProgram::new();
        let (a, b) = (p.add_var(1), p.add_var(1));
        p.add_row(vec![(a, 2), (b, 2)], Sense::Eq, 3);
        assert_eq!(BranchAndBound::default().solve(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn conflicting_fixes_are_infeasible() {
        let mut p = BinaryProgram::new();
        let a = p.add_var(0);
        p.fix(a, true);
        p.add_row(vec![(a, 1)], Sense::Le, 0);
        assert_eq!(BranchAndBound::default().solve(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn empty_program_is_optimal_at_zero() {
        let r = BranchAndBound::default().solve(&BinaryProgram::new());
        assert_eq!((r.status, r.objective), (SolveStatus::Optimal, Some(0)));
    }

    #[test]
    fn node_limit_reports_timeout() {
        let mut p = BinaryProgram::new();
        let vs: Vec<usize> = (0..12).map(|i| p.add_var(1 + i % 3)).collect();
        p.add_row(vs.iter().map(|&v| (v, 1)).collect(), Sense::Ge, 6);
        let r = BranchAndBound {
            time_limit: None,
            node_limit: Some(3),
        }
        .solve(&p);
        assert_eq!(r.status, SolveStatus::TimedOut);
    }

    #[test]
    fn matches_exhaustive_on_random_programs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..600 {
            let n = rng.gen_range(1..=10);
            let mut p = BinaryProgram::new();
            for _ in 0..n {
                p.add_var(rng.gen_range(0..6));
            }
            for _ in 0..rng.gen_range(0..6) {
                let mut terms = Vec::new();
                for v in 0..n {
                    if rng.gen_bool(0.5) {
                        terms.push((v, rng.gen_range(-3..=3)));
                    }
                }
                let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..3)];
                p.add_row(terms, sense, rng.gen_range(-2..=4));
            }
            for _ in 0..rng.gen_range(0..3) {
                let terms: Vec<_> = (0..n).filter(|_| rng.gen_bool(0.4)).map(|v| (v, 1)).collect();
                p.add_row(terms, Sense::Ge, 1);
            }
            let order = (0..n).rev().map(|v| (v, rng.gen_bool(0.5))).collect();
            p.branch_order = order;
            let r = BranchAndBound::default().solve(&p);
            assert_eq!(r.objective, exhaustive(&p));
            let again = BranchAndBound::default().solve(&p);
            assert_eq!(r.assignment, again.assignment);
        }
    }

    fn budgets(g: &CDGraph) -> Vec<BudgetPair> {
        let (lo, hi) = crate::block_ilp::peak_range(g).unwrap();
        let out = g.output_size();
        let mid = (lo + hi) / 2;
        let low = lo.saturating_sub(2).max(1);
        vec![
            BudgetPair { m_peak: hi, m_save: hi },
            BudgetPair { m_peak: mid, m_save: out.max((out + mid) / 2).min(mid) },
            BudgetPair { m_peak: low, m_save: out.min(low) },
        ]
    }

    #[test]
    fn oracle_and_program_agree_on_random_blocks() {
        use rand::SeedableRng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..40 {
            let g = crate::fixtures::random_block(&mut rng, 6, 6);
            for b in budgets(&g) {
                let model = crate::block_ilp::build_model(&g, b).unwrap();
                let r = BranchAndBound::default().solve(&model.program);
                let o = brute_force_block(&g, b, g.cnodes.len() as u32).unwrap();
                assert_eq!(r.objective.map(|v| v as u64), o.map(|(c, _)| c), "{b:?} {g:?}");
            }
        }
    }

    #[test]
    fn oracle_on_toy() {
        let g = crate::fixtures::toy_block();
        let ample = brute_force_block(&g, BudgetPair { m_peak: 100, m_save: 100 }, 3).unwrap();
        assert_eq!(ample.unwrap().0, 0);
        let tight = brute_force_block(&g, BudgetPair { m_peak: 24, m_save: 8 }, 3).unwrap().unwrap();
        assert_eq!(tight.0, 2);
        assert!(tight.1.iter().filter(|s| **s == BlockStep::Compute(0)).count() == 2);
        assert_eq!(brute_force_block(&g, BudgetPair { m_peak: 3, m_save: 3 }, 3).unwrap(), None);
    }
}
