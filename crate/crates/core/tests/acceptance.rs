//! Acceptance run: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach stdout.

mod common;

use std::panic::catch_unwind;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use remat_core::block_ilp::{build_model, peak_range, BudgetPair};
use remat_core::chain_dp::{solve_chain_with_unit, solve_table_with_unit, INF};
use remat_core::fixtures::{linear_block, linear_chain, random_block, tiny_chain, transformer_block};
use remat_core::ilp_solver::{brute_force_block, BinarySolver, BranchAndBound, SolveStatus};
use remat_core::ingest::{save_schedule, ScheduleDoc};
use remat_core::partition::infer_classes;
use remat_core::pipeline::{self, block_options, build_menu, compact_options, PipelineError, SolveConfig};
use remat_core::simulate::{chain_no_recompute_schedule, simulate, simulate_with_menu};
use remat_core::{Bytes, CDGraph, Chain, OptionMenu};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("block program matches exhaustive search", ilp_matches_oracle),
        ("chain program matches exhaustive search", dp_matches_oracle),
        ("every emitted schedule replays within budget", universal_feasibility),
        ("no-recompute budget gives zero overhead", no_recompute_identity),
        ("sweeps are monotone", sweeps_are_monotone),
        ("rebuilt schedules replay at the table value", reconstruction_is_exact),
        ("candidates per cell within (t-s)+B+1", work_bound),
        ("option counts after dedup", option_counts),
        ("identical blocks solved once per class", class_invariance),
        ("solve output is byte-identical across runs", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let r = catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1}s]", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {e} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Ample, middle and tight budgets; the tight one is below the eager-free
/// peak, so some blocks have no schedule at all.
fn levels(g: &CDGraph) -> Vec<BudgetPair> {
    let (lo, hi) = peak_range(g).unwrap();
    let floor = g.input_size() + g.output_size();
    let mid = (lo + hi) / 2;
    let tight = lo.saturating_sub(1).max(1);
    vec![
        BudgetPair { m_peak: hi, m_save: hi },
        BudgetPair { m_peak: mid, m_save: ((floor + mid) / 2).min(mid) },
        BudgetPair { m_peak: tight, m_save: floor.min(tight) },
    ]
}

fn ilp_matches_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(101);
    let bb = BranchAndBound::default();
    let (mut cases, mut infeasible) = (0, 0);
    for n in 0..120 {
        let g = random_block(&mut rng, 6, 6);
        for b in levels(&g) {
            let model = build_model(&g, b).map_err(|e| e.to_string())?;
            let r = bb.solve(&model.program);
            ensure(r.status != SolveStatus::TimedOut, || format!("block {n} {b:?} timed out"))?;
            let oracle = brute_force_block(&g, b, g.cnodes.len() as u32).map_err(|e| e.to_string())?;
            let want = oracle.map(|(c, _)| c);
            let got = r.objective.map(|v| v as u64);
            ensure(got == want, || format!("block {n} {b:?}: program {got:?}, exhaustive {want:?}"))?;
            cases += 1;
            infeasible += want.is_none() as usize;
        }
    }
    Ok(format!("120 blocks, {cases} budget pairs, {infeasible} infeasible, all equal"))
}

fn dp_value(menu: &OptionMenu, budget: Bytes) -> Option<u64> {
    let (table, top) = solve_table_with_unit(menu, budget, 1);
    top.map(|m| table.opt(0, table.l, m)).filter(|&v| v != INF)
}

fn dp_matches_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(202);
    let (mut cases, mut feasible) = (0, 0);
    for n in 0..50 {
        let chain = common::random_chain(&mut rng, 4);
        let menu = common::small_menu(&chain, 2);
        let a0 = chain.act_sizes()[0];
        for m in 0..=20 {
            let dp = dp_value(&menu, a0 + m);
            let oracle = common::chain_oracle(&chain, &menu, a0 + m);
            ensure(dp == oracle, || format!("chain {n} m {m}: table {dp:?}, exhaustive {oracle:?}"))?;
            cases += 1;
            feasible += dp.is_some() as usize;
        }
    }
    Ok(format!("50 chains, {cases} memory levels, {feasible} feasible, all equal"))
}

fn no_recompute_peak(chain: &Chain) -> Bytes {
    simulate(&chain_no_recompute_schedule(chain), chain, None).unwrap().peak_mem
}

fn small_cfg(n: usize, units: u64) -> SolveConfig {
    SolveConfig {
        n_peak: n,
        n_save: n,
        units,
        threads: Some(1),
        ..SolveConfig::default()
    }
}

fn universal_feasibility() -> Outcome {
    let mut rng = StdRng::seed_from_u64(303);
    let (mut ok, mut infeasible) = (0, 0);
    for n in 0..1000 {
        let chain = common::random_chain(&mut rng, 4);
        let cfg = small_cfg(5, rng.gen_range(4..=500));
        let top = no_recompute_peak(&chain) + 2;
        let budget = rng.gen_range(top / 2..=top);
        match pipeline::solve(&chain, budget, &cfg) {
            Ok((solved, menu, _)) => {
                let rep = simulate_with_menu(&solved.schedule, &chain, &menu, Some(budget))
                    .map_err(|e| format!("run {n} budget {budget}: {e}"))?;
                ensure(rep.peak_mem <= budget, || format!("run {n}: peak {} over {budget}", rep.peak_mem))?;
                ok += 1;
            }
            Err(PipelineError::Infeasible { .. }) => infeasible += 1,
            Err(e) => return Err(format!("run {n} budget {budget}: {e}")),
        }
    }
    Ok(format!("1000 runs, {ok} schedules replayed cleanly, {infeasible} infeasible budgets, 0 simulator errors"))
}

fn abab_chain() -> Chain {
    let a = linear_block(&[4, 3, 5], &[3, 4], &[5, 6]);
    let b = linear_block(&[5, 2, 4], &[2, 6], &[3, 7]);
    let mut chain = Chain::new(vec![a.clone(), b.clone(), a.clone(), b.clone(), a, b]);
    chain.equiv_class = infer_classes(&chain.blocks);
    chain
}

/// Sizes large enough that the memory axis is rounded.
fn wide_chain() -> Chain {
    let k = 1013;
    linear_chain(&[
        (vec![4 * k, 2 * k + 1, 4 * k], vec![4, 6], vec![5, 7]),
        (vec![4 * k, 2 * k + 3, 2 * k], vec![3, 5], vec![4, 5]),
        (vec![2 * k, 3 * k + 7, 5 * k], vec![3, 5], vec![4, 5]),
    ])
}

fn transformer_chain(n: usize) -> Chain {
    let mut chain = Chain::new(vec![transformer_block(8); n]);
    chain.equiv_class = infer_classes(&chain.blocks);
    chain
}

fn no_recompute_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(404);
    let mut chains = vec![tiny_chain(), abab_chain(), wide_chain(), transformer_chain(3)];
    chains.extend((0..20).map(|_| common::random_chain(&mut rng, 4)));
    let cfg = SolveConfig {
        time_limit: Some(Duration::from_secs(30)),
        threads: Some(1),
        ..SolveConfig::default()
    };
    for (n, chain) in chains.iter().enumerate() {
        let budget = no_recompute_peak(chain);
        let (solved, _, _) = pipeline::solve(chain, budget, &cfg).map_err(|e| format!("chain {n}: {e}"))?;
        let r = &solved.report;
        ensure(r.overhead == 0 && r.makespan == chain.one_pass_time(), || {
            format!("chain {n} budget {budget}: makespan {}, one pass {}", r.makespan, chain.one_pass_time())
        })?;
    }
    Ok(format!("{} chains at their no-recompute peak, overhead 0", chains.len()))
}

fn sweeps_are_monotone() -> Outcome {
    let mut rng = StdRng::seed_from_u64(505);
    let mut chains = vec![tiny_chain(), abab_chain(), wide_chain()];
    chains.extend((0..30).map(|_| common::random_chain(&mut rng, 4)));
    let mut rows = 0;
    for (n, chain) in chains.iter().enumerate() {
        let units = rng.gen_range(4..=500);
        let (menu, _) = build_menu(chain, &small_cfg(8, units)).map_err(|e| e.to_string())?;
        let a0 = chain.act_sizes()[0];
        let top = no_recompute_peak(chain) + 3;
        let budgets: Vec<Bytes> = (0..16).map(|i| a0 + (top - a0) * i / 15).collect();
        let sweep = pipeline::sweep_with_menu(chain, &menu, &budgets, units);
        let mut last: Option<u64> = None;
        for r in &sweep {
            match (r.makespan, last) {
                (Some(m), Some(prev)) => ensure(m <= prev, || format!("chain {n}: {m} at {} after {prev}", r.budget))?,
                (None, Some(_)) => return Err(format!("chain {n}: infeasible at {} after a feasible budget", r.budget)),
                _ => {}
            }
            if r.makespan.is_some() {
                last = r.makespan;
            }
        }
        ensure(last.is_some(), || format!("chain {n}: nothing feasible up to {top}"))?;
        rows += sweep.len();
    }
    Ok(format!("{} sweeps, {rows} rows, makespan never increases", chains.len()))
}

fn reconstruction_is_exact() -> Outcome {
    let mut rng = StdRng::seed_from_u64(606);
    let mut cases = 0;
    for n in 0..40 {
        let chain = common::random_chain(&mut rng, 4);
        let menu = common::small_menu(&chain, 3);
        let a0 = chain.act_sizes()[0];
        for m in 0..=20 {
            let budget = a0 + m;
            for unit in [1, 2, 3] {
                let (table, top) = solve_table_with_unit(&menu, budget, unit);
                let opt = top.map(|t| table.opt(0, table.l, t)).filter(|&v| v != INF);
                let sched = solve_chain_with_unit(&chain, &menu, budget, unit);
                match (opt, sched) {
                    (Some(v), Ok(s)) => {
                        let rep = simulate_with_menu(&s, &chain, &menu, Some(budget))
                            .map_err(|e| format!("chain {n} budget {budget} unit {unit}: {e}"))?;
                        ensure(rep.makespan == v, || {
                            format!("chain {n} budget {budget} unit {unit}: replay {}, table {v}", rep.makespan)
                        })?;
                        cases += 1;
                    }
                    (None, Err(_)) => {}
                    (o, s) => return Err(format!("chain {n} budget {budget}: table {o:?}, builder ok {}", s.is_ok())),
                }
            }
        }
    }
    Ok(format!("{cases} feasible instances replay at exactly the table value"))
}

fn work_bound() -> Outcome {
    let mut rng = StdRng::seed_from_u64(707);
    let (mut cells, mut worst) = (0u64, 0.0f64);
    for n in 0..40 {
        let chain = common::random_chain(&mut rng, 4);
        let menu = common::small_menu(&chain, 3);
        let b = menu.options.iter().map(|o| o.len() - 1).max().unwrap_or(0);
        let budget = no_recompute_peak(&chain) + 2;
        let (table, _) = solve_table_with_unit(&menu, budget, 1);
        for s in 0..table.l {
            for t in s + 1..=table.l {
                let bound = (t - s + b + 1) as u32;
                for m in 0..=table.m_max {
                    let c = table.candidates_at(s, t, m);
                    ensure(c <= bound, || format!("chain {n} cell ({s},{t},{m}): {c} candidates, bound {bound}"))?;
                    worst = worst.max(c as f64 / bound as f64);
                    cells += 1;
                }
            }
        }
    }
    Ok(format!("{cells} cells, largest candidates/bound ratio {worst:.2}"))
}

fn option_counts() -> Outcome {
    let mut rng = StdRng::seed_from_u64(808);
    let cfg = SolveConfig {
        time_limit: Some(Duration::from_secs(30)),
        threads: Some(1),
        ..SolveConfig::default()
    };
    let mut most = 0;
    let mut blocks: Vec<CDGraph> = (0..20).map(|_| random_block(&mut rng, 6, 6)).collect();
    blocks.extend(tiny_chain().blocks);
    for (n, g) in blocks.iter().enumerate() {
        let (opts, _) = block_options(g, &cfg).map_err(|e| format!("block {n}: {e}"))?;
        ensure(opts.len() <= 400, || format!("block {n}: {} options", opts.len()))?;
        most = most.max(opts.len());
    }
    let (opts, st) = block_options(&transformer_block(8), &cfg).map_err(|e| e.to_string())?;
    ensure(opts.len() <= 400, || format!("transformer block: {} options", opts.len()))?;
    let flag = if opts.len() > 30 { " (above 30, worth a look)" } else { "" };
    Ok(format!(
        "at most {most} options over {} blocks; transformer block {} options from {} pairs ({} skipped, {} timed out){flag}",
        blocks.len(),
        opts.len(),
        st.pairs,
        st.skipped,
        st.timed_out
    ))
}

fn class_invariance() -> Outcome {
    let chain = abab_chain();
    let classes = SolveConfig {
        threads: Some(1),
        ..SolveConfig::default()
    };
    let singletons = SolveConfig {
        use_classes: false,
        ..classes
    };
    let (menu, with) = build_menu(&chain, &classes).map_err(|e| e.to_string())?;
    let (menu1, without) = build_menu(&chain, &singletons).map_err(|e| e.to_string())?;
    ensure(with.class_solves == 2 && without.class_solves == 6, || {
        format!("class solves {} and {}", with.class_solves, without.class_solves)
    })?;
    let lo = pipeline::min_feasible_budget(&menu, &chain, classes.units).ok_or("no feasible budget")?;
    let hi = no_recompute_peak(&chain);
    let mut compared = 0;
    for budget in lo..=hi {
        let a = pipeline::solve_with_menu(&chain, &menu, budget, classes.units, 0).map(|s| s.report.makespan);
        let b = pipeline::solve_with_menu(&chain, &menu1, budget, classes.units, 0).map(|s| s.report.makespan);
        match (a, b) {
            (Ok(x), Ok(y)) => ensure(x == y, || format!("budget {budget}: {x} with classes, {y} without"))?,
            (a, b) => return Err(format!("budget {budget}: {a:?} vs {b:?}")),
        }
        compared += 1;
    }
    Ok(format!("2 class solves vs 6, equal makespans at {compared} budgets from {lo} to {hi}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let chains = [tiny_chain(), abab_chain(), transformer_chain(3)];
    for (n, chain) in chains.iter().enumerate() {
        let (menu, _) = build_menu(chain, &small_cfg(20, 500)).map_err(|e| e.to_string())?;
        let lo = pipeline::min_feasible_budget(&menu, chain, 500).ok_or("no feasible budget")?;
        let budget = &((lo + no_recompute_peak(chain)) / 2);
        let mut files = Vec::new();
        for threads in [1, 4, 1] {
            let cfg = SolveConfig {
                time_limit: Some(Duration::from_secs(30)),
                threads: Some(threads),
                ..SolveConfig::default()
            };
            let (solved, menu, _) = pipeline::solve(chain, *budget, &cfg).map_err(|e| format!("chain {n}: {e}"))?;
            let (schedule, options) = compact_options(&solved.schedule, &menu);
            let path = dir.path().join(format!("{n}_{}.json", files.len()));
            let doc = ScheduleDoc {
                schedule,
                options: Some(options),
            };
            save_schedule(&doc, chain, &path).map_err(|e| e.to_string())?;
            files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(files.windows(2).all(|w| w[0] == w[1]), || format!("chain {n}: schedule files differ"))?;
    }
    Ok("3 chains solved three times each with 1, 4 and 1 threads, identical files".into())
}
