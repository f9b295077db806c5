//! End-to-end solving: options per block class, then the chain program,
//! then a simulator check of the result.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block_ilp::{self, budget_grid, extract_option, option_zero, BudgetPair, IlpError};
use crate::chain_dp::{self, ChainError, OptionMenu, DEFAULT_UNITS};
use crate::ilp_solver::{BranchAndBound, SolveStatus};
use crate::model::{BlockOption, Bytes, CDGraph, Chain, Micros, Schedule, ScheduleOp};
use crate::simulate::{chain_no_recompute_schedule, simulate_with_menu, SimError, SimReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveConfig {
    pub n_peak: usize,
    pub n_save: usize,
    pub units: u64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Solve each class of identical blocks once; otherwise every block.
    pub use_classes: bool,
    /// Worker threads; `None` reads `REMAT_THREADS`, then uses all CPUs.
    pub threads: Option<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            n_peak: 20,
            n_save: 20,
            units: DEFAULT_UNITS,
            time_limit: Some(Duration::from_secs(120)),
            node_limit: None,
            use_classes: true,
            threads: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no schedule fits in {budget} bytes{}", min_feasible.map(|m| format!("; smallest feasible budget is {m} bytes")).unwrap_or_default())]
    Infeasible {
        budget: Bytes,
        min_feasible: Option<Bytes>,
        timed_out_pairs: usize,
    },
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStats {
    pub pairs: usize,
    pub skipped: usize,
    pub optimal: usize,
    pub infeasible: usize,
    pub timed_out: usize,
    pub options: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MenuStats {
    /// Number of blocks whose programs were solved.
    pub class_solves: usize,
    /// Per solved block, in chain order of first appearance.
    pub blocks: Vec<(usize, BlockStats)>,
}

impl MenuStats {
    pub fn timed_out_pairs(&self) -> usize {
        self.blocks.iter().map(|(_, s)| s.timed_out).sum()
    }
}

fn solver(cfg: &SolveConfig) -> BranchAndBound {
    BranchAndBound {
        time_limit: cfg.time_limit,
        node_limit: cfg.node_limit,
    }
}

/// Worker count from the config, `REMAT_THREADS`, or the CPU count.
pub fn thread_count(cfg: &SolveConfig) -> usize {
    cfg.threads
        .or_else(|| std::env::var("REMAT_THREADS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn with_pool<T: Send>(cfg: &SolveConfig, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cfg))
        .build()
        .map_err(|e| PipelineError::Threads(e.to_string()))?;
    Ok(pool.install(f))
}

/// Options of one block over its budget grid, deduplicated.
pub fn block_options(g: &CDGraph, cfg: &SolveConfig) -> Result<(Vec<BlockOption>, BlockStats), PipelineError> {
    let grid = budget_grid(g, cfg.n_peak, cfg.n_save)?;
    let floor = g.input_size() + g.output_size();
    let pairs: Vec<BudgetPair> = grid.iter().copied().filter(|b| b.m_save >= floor).collect();
    let mut stats = BlockStats {
        pairs: grid.len(),
        skipped: grid.len() - pairs.len(),
        ..Default::default()
    };
    let bb = solver(cfg);
    let solved: Vec<Result<_, IlpError>> = pairs.par_iter().map(|&b| block_ilp::solve_block(g, b, &bb)).collect();
    let mut opts = vec![option_zero(g)?];
    for r in solved {
        let (res, steps) = r?;
        match res.status {
            SolveStatus::Optimal => {
                stats.optimal += 1;
                opts.push(extract_option(g, &steps.expect("optimal result has steps"), opts.len())?);
            }
            SolveStatus::Infeasible => stats.infeasible += 1,
            SolveStatus::TimedOut => stats.timed_out += 1,
        }
    }
    let opts = block_ilp::dedup_options(opts);
    stats.options = opts.len();
    Ok((opts, stats))
}

/// Menu for the whole chain. With classes enabled, each class is solved
/// on its first member and the result is shared by all members.
pub fn build_menu(chain: &Chain, cfg: &SolveConfig) -> Result<(OptionMenu, MenuStats), PipelineError> {
    with_pool(cfg, || build_menu_in_pool(chain, cfg))?
}

fn build_menu_in_pool(chain: &Chain, cfg: &SolveConfig) -> Result<(OptionMenu, MenuStats), PipelineError> {
    let reps: Vec<usize> = if cfg.use_classes {
        chain.class_representatives().into_iter().map(|(_, i)| i).collect()
    } else {
        (0..chain.len()).collect()
    };
    let solved: Vec<Result<_, PipelineError>> = reps
        .par_iter()
        .map(|&i| block_options(&chain.blocks[i], cfg))
        .collect();
    let mut by_block: Vec<Option<Vec<BlockOption>>> = vec![None; chain.len()];
    let mut stats = MenuStats {
        class_solves: reps.len(),
        blocks: Vec::new(),
    };
    for (&i, r) in reps.iter().zip(solved) {
        let (opts, st) = r?;
        stats.blocks.push((i, st));
        if cfg.use_classes {
            let class = chain.equiv_class[i];
            for (j, slot) in by_block.iter_mut().enumerate() {
                if chain.equiv_class[j] == class {
                    *slot = Some(opts.clone());
                }
            }
        } else {
            by_block[i] = Some(opts);
        }
    }
    let menu = OptionMenu::new(chain, by_block.into_iter().map(|o| o.expect("every block covered")).collect())?;
    Ok((menu, stats))
}

/// Smallest budget in bytes for which the chain program finds a schedule,
/// by bisection between 0 and the sum of every tensor in the chain.
pub fn min_feasible_budget(menu: &OptionMenu, chain: &Chain, units: u64) -> Option<Bytes> {
    let feasible = |b: Bytes| {
        let (table, top) = chain_dp::solve_table(menu, b, units);
        top.is_some_and(|m| table.opt(0, table.l, m) != chain_dp::INF)
    };
    let mut hi: Bytes = chain.blocks.iter().flat_map(|b| b.dnodes.iter().map(|d| d.size)).sum::<Bytes>().max(1);
    let mut tries = 0;
    while !feasible(hi) {
        hi = hi.checked_mul(2)?;
        tries += 1;
        if tries > 8 {
            return None;
        }
    }
    let mut lo = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub schedule: Schedule,
    pub report: SimReport,
}

/// Chain schedule for `budget` with the memory axis in steps of `unit`.
/// When the budget holds the no-recompute pass, that pass is returned:
/// nothing is faster, and rounding in the chain program could miss it.
fn chain_schedule(chain: &Chain, menu: &OptionMenu, budget: Bytes, unit: Bytes) -> Result<Schedule, ChainError> {
    let mut plain = chain_no_recompute_schedule(chain);
    if simulate_with_menu(&plain, chain, menu, None).is_ok_and(|r| r.peak_mem <= budget) {
        plain.meta.budget = Some(budget);
        plain.meta.makespan = Some(chain.one_pass_time());
        return Ok(plain);
    }
    chain_dp::solve_chain_with_unit(chain, menu, budget, unit)
}

/// Runs the chain program on a prepared menu and checks the schedule in
/// the simulator under `budget`.
pub fn solve_with_menu(
    chain: &Chain,
    menu: &OptionMenu,
    budget: Bytes,
    units: u64,
    timed_out_pairs: usize,
) -> Result<Solved, PipelineError> {
    let unit = chain_dp::quantize(&[], budget, units).0;
    let mut schedule = match chain_schedule(chain, menu, budget, unit) {
        Ok(s) => s,
        Err(ChainError::InfeasibleBudget { .. }) => {
            return Err(PipelineError::Infeasible {
                budget,
                min_feasible: min_feasible_budget(menu, chain, units),
                timed_out_pairs,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let report = simulate_with_menu(&schedule, chain, menu, Some(budget))?;
    assert_eq!(
        Some(report.makespan),
        schedule.meta.makespan,
        "simulated makespan differs from the chain program"
    );
    schedule.meta.peak = Some(report.peak_mem);
    Ok(Solved { schedule, report })
}

pub fn solve(chain: &Chain, budget: Bytes, cfg: &SolveConfig) -> Result<(Solved, OptionMenu, MenuStats), PipelineError> {
    let (menu, stats) = build_menu(chain, cfg)?;
    let solved = solve_with_menu(chain, &menu, budget, cfg.units, stats.timed_out_pairs())?;
    Ok((solved, menu, stats))
}

/// Keeps only the options a schedule uses (plus option 0 of every block)
/// and renumbers its block ops to match.
pub fn compact_options(schedule: &Schedule, menu: &OptionMenu) -> (Schedule, Vec<Vec<BlockOption>>) {
    let mut used: Vec<Vec<usize>> = vec![vec![0]; menu.len()];
    for op in &schedule.ops {
        if let ScheduleOp::BlockFwd { block, option } | ScheduleOp::BlockBwd { block, option } = op {
            used[*block].push(*option);
        }
    }
    for u in &mut used {
        u.sort_unstable();
        u.dedup();
    }
    let renumber = |block: usize, option: usize| used[block].binary_search(&option).expect("option collected above");
    let ops = schedule
        .ops
        .iter()
        .map(|op| match op {
            ScheduleOp::BlockFwd { block, option } => ScheduleOp::BlockFwd {
                block: *block,
                option: renumber(*block, *option),
            },
            ScheduleOp::BlockBwd { block, option } => ScheduleOp::BlockBwd {
                block: *block,
                option: renumber(*block, *option),
            },
            other => other.clone(),
        })
        .collect();
    let options = used
        .iter()
        .enumerate()
        .map(|(b, ids)| {
            ids.iter()
                .enumerate()
                .map(|(new_id, &o)| BlockOption {
                    option_id: new_id,
                    ..menu.options[b][o].clone()
                })
                .collect()
        })
        .collect();
    (
        Schedule {
            ops,
            meta: schedule.meta.clone(),
        },
        options,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub budget: Bytes,
    pub makespan: Option<Micros>,
    pub overhead_pct: Option<f64>,
    pub peak: Option<Bytes>,
    pub status: &'static str,
}

pub const SWEEP_HEADER: &str = "budget_bytes,makespan_us,overhead_pct,peak_bytes,status";

impl SweepRow {
    pub fn csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.budget,
            opt(self.makespan.map(|m| m.to_string())),
            opt(self.overhead_pct.map(|p| format!("{p:.4}"))),
            opt(self.peak.map(|p| p.to_string())),
            self.status
        )
    }
}

/// One chain solve per budget, sharing the block options and the memory
/// unit of the largest budget. Rows are sorted by budget.
pub fn sweep(chain: &Chain, budgets: &[Bytes], cfg: &SolveConfig) -> Result<Vec<SweepRow>, PipelineError> {
    let (menu, _) = build_menu(chain, cfg)?;
    Ok(sweep_with_menu(chain, &menu, budgets, cfg.units))
}

pub fn sweep_with_menu(chain: &Chain, menu: &OptionMenu, budgets: &[Bytes], units: u64) -> Vec<SweepRow> {
    let mut budgets = budgets.to_vec();
    budgets.sort_unstable();
    budgets.dedup();
    let base = chain.one_pass_time();
    let unit = chain_dp::quantize(&[], budgets.last().copied().unwrap_or(1), units).0;
    budgets
        .into_iter()
        .map(|b| match chain_schedule(chain, menu, b, unit) {
            Ok(s) => {
                let rep = simulate_with_menu(&s, chain, menu, Some(b)).expect("chain schedules replay within budget");
                SweepRow {
                    budget: b,
                    makespan: Some(rep.makespan),
                    overhead_pct: Some(if base == 0 { 0.0 } else { 100.0 * rep.overhead as f64 / base as f64 }),
                    peak: Some(rep.peak_mem),
                    status: "ok",
                }
            }
            Err(_) => SweepRow {
                budget: b,
                makespan: None,
                overhead_pct: None,
                peak: None,
                status: "infeasible",
            },
        })
        .collect()
}
