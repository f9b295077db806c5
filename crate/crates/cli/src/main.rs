//! `remat`: partition forward graphs, solve chains for a memory budget,
//! replay schedules and sweep budgets.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use remat_core::chain_dp::DEFAULT_UNITS;
use remat_core::ingest::{self, PartitionDoc, ScheduleDoc};
use remat_core::partition::{class_indices, cut_into_blocks, find_separators, group_identical};
use remat_core::pipeline::{self, compact_options, PipelineError, SolveConfig, SWEEP_HEADER};
use remat_core::simulate::SimContext;
use remat_core::{Bytes, OptionMenu, SimError};

#[derive(Parser)]
#[command(name = "remat", version, about = "Re-materialization scheduler for chains of blocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut a forward graph into blocks and group identical ones.
    Partition {
        graph: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Find the fastest schedule of a chain within a memory budget.
    Solve {
        chain: PathBuf,
        /// Memory budget in bytes.
        #[arg(long)]
        memory: Bytes,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Replay a schedule and report time and memory.
    Simulate {
        schedule: PathBuf,
        chain: PathBuf,
        /// Fail if the peak exceeds this many bytes.
        #[arg(long)]
        budget: Option<Bytes>,
        /// Write the per-step trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve for several budgets and print a CSV.
    Sweep {
        chain: PathBuf,
        /// Comma-separated budgets in bytes.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to", "steps"])]
        budgets: Option<Vec<Bytes>>,
        #[arg(long, requires_all = ["to", "steps"])]
        from: Option<Bytes>,
        #[arg(long, requires_all = ["from", "steps"])]
        to: Option<Bytes>,
        #[arg(long, requires_all = ["from", "to"])]
        steps: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the CSV here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolverArgs {
    /// Peak budgets per block.
    #[arg(long, default_value_t = 20)]
    npeak: usize,
    /// Save budgets per block.
    #[arg(long, default_value_t = 20)]
    nsave: usize,
    /// Resolution of the memory axis of the chain program.
    #[arg(long, default_value_t = DEFAULT_UNITS)]
    units: u64,
    /// Seconds allowed per block program.
    #[arg(long, default_value_t = 120.0)]
    time_limit: f64,
    /// Solve every block separately instead of once per class.
    #[arg(long)]
    no_classes: bool,
    /// Worker threads (default: REMAT_THREADS, then all CPUs).
    #[arg(long)]
    threads: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> Result<SolveConfig, Failure> {
        if !(self.time_limit.is_finite() && self.time_limit > 0.0) {
            return Err(Failure::Input("--time-limit must be a positive number of seconds".into()));
        }
        Ok(SolveConfig {
            n_peak: self.npeak,
            n_save: self.nsave,
            units: self.units,
            time_limit: Some(Duration::from_secs_f64(self.time_limit)),
            node_limit: None,
            use_classes: !self.no_classes,
            threads: self.threads,
        })
    }
}

enum Failure {
    Input(String),
    Infeasible(String),
    Timeout(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Timeout(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Timeout(m) => m,
        }
    }
}

fn input_err(path: &Path) -> impl Fn(ingest::IngestError) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Infeasible { timed_out_pairs, .. } if timed_out_pairs > 0 => {
            Failure::Timeout(format!("{e} ({timed_out_pairs} block programs timed out)"))
        }
        PipelineError::Infeasible { .. } => Failure::Infeasible(e.to_string()),
        other => Failure::Input(other.to_string()),
    }
}

fn partition(graph: &Path, out: &Path) -> Result<(), Failure> {
    let g = ingest::load_forward_graph(graph).map_err(input_err(graph))?;
    let seps = find_separators(&g).map_err(|e| Failure::Input(format!("{}: {e}", graph.display())))?;
    let blocks = cut_into_blocks(&g, &seps);
    let classes = group_identical(&blocks);
    let doc = PartitionDoc {
        separators: seps,
        classes: class_indices(&classes, blocks.len()),
        blocks: blocks.iter().map(|b| b.nodes.iter().map(|n| n.id.clone()).collect()).collect(),
    };
    ingest::save_partition(&doc, out).map_err(input_err(out))?;
    println!("{} blocks, {} classes", blocks.len(), classes.len());
    Ok(())
}

fn solve(chain_path: &Path, memory: Bytes, args: &SolverArgs, out: &Path) -> Result<(), Failure> {
    let chain = ingest::load_chain(chain_path).map_err(input_err(chain_path))?;
    let cfg = args.config()?;
    let (solved, menu, stats) = pipeline::solve(&chain, memory, &cfg).map_err(pipeline_failure)?;
    let (schedule, options) = compact_options(&solved.schedule, &menu);
    let doc = ScheduleDoc {
        schedule,
        options: Some(options),
    };
    ingest::save_schedule(&doc, &chain, out).map_err(input_err(out))?;
    let r = &solved.report;
    println!("budget_bytes: {memory}");
    println!("makespan_us: {}", r.makespan);
    println!("overhead_us: {}", r.overhead);
    println!("peak_bytes: {}", r.peak_mem);
    println!("mem_at_loss_bytes: {}", r.mem_at_loss);
    println!("class_solves: {}", stats.class_solves);
    for (block, s) in &stats.blocks {
        println!(
            "block {block}: {} budget pairs, {} skipped, {} optimal, {} infeasible, {} timed out, {} options",
            s.pairs, s.skipped, s.optimal, s.infeasible, s.timed_out, s.options
        );
    }
    Ok(())
}

fn simulate(schedule: &Path, chain_path: &Path, budget: Option<Bytes>, trace: Option<&Path>) -> Result<(), Failure> {
    let chain = ingest::load_chain(chain_path).map_err(input_err(chain_path))?;
    let doc = ingest::load_schedule(schedule, &chain).map_err(input_err(schedule))?;
    let menu = match doc.options {
        Some(o) => Some(OptionMenu::new(&chain, o).map_err(|e| Failure::Input(format!("{}: {e}", schedule.display())))?),
        None => None,
    };
    let report = SimContext::for_chain(&chain, menu.as_ref())
        .simulate(&doc.schedule, budget)
        .map_err(|e| match e {
            SimError::BudgetExceeded { .. } => Failure::Infeasible(e.to_string()),
            other => Failure::Input(other.to_string()),
        })?;
    if let Some(t) = trace {
        std::fs::write(t, report.trace_csv()).map_err(|e| Failure::Input(format!("{}: {e}", t.display())))?;
    }
    println!("makespan_us: {}", report.makespan);
    println!("overhead_us: {}", report.overhead);
    println!("peak_bytes: {}", report.peak_mem);
    println!("mem_at_loss_bytes: {}", report.mem_at_loss);
    Ok(())
}

/// `steps` evenly spaced integer budgets from `from` to `to` inclusive.
fn spaced(from: Bytes, to: Bytes, steps: usize) -> Result<Vec<Bytes>, Failure> {
    if steps == 0 || to < from {
        return Err(Failure::Input("--from/--to/--steps need from <= to and at least one step".into()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    let span = (to - from) as u128;
    Ok((0..steps)
        .map(|i| from + (span * i as u128 / (steps as u128 - 1)) as Bytes)
        .collect())
}

fn sweep(chain_path: &Path, budgets: Vec<Bytes>, args: &SolverArgs, out: Option<&Path>) -> Result<(), Failure> {
    let chain = ingest::load_chain(chain_path).map_err(input_err(chain_path))?;
    let rows = pipeline::sweep(&chain, &budgets, &args.config()?).map_err(pipeline_failure)?;
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, csv).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Partition { graph, out } => partition(&graph, &out),
        Command::Solve {
            chain,
            memory,
            solver,
            out,
        } => solve(&chain, memory, &solver, &out),
        Command::Simulate {
            schedule,
            chain,
            budget,
            trace,
        } => simulate(&schedule, &chain, budget, trace.as_deref()),
        Command::Sweep {
            chain,
            budgets,
            from,
            to,
            steps,
            solver,
            out,
        } => {
            let budgets = match (budgets, from, to, steps) {
                (Some(b), ..) if !b.is_empty() => b,
                (None, Some(f), Some(t), Some(s)) => spaced(f, t, s)?,
                _ => return Err(Failure::Input("give --budgets or --from/--to/--steps".into())),
            };
            sweep(&chain, budgets, &solver, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
