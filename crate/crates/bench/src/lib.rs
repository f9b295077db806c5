//! Inputs shared by the benchmarks under `benches/`.

use remat_core::block_ilp::{budget_grid, BudgetPair};
use remat_core::fixtures::transformer_block;
use remat_core::partition::infer_classes;
use remat_core::pipeline::{build_menu, SolveConfig};
use remat_core::{CDGraph, Chain, OptionMenu};

/// `n` identical transformer-like blocks of the given width.
pub fn transformer_chain(n: usize, width: u64) -> Chain {
    let mut chain = Chain::new(vec![transformer_block(width); n]);
    chain.equiv_class = infer_classes(&chain.blocks);
    chain
}

/// Largest, middle and smallest save budget at the largest peak of the
/// default grid, keeping only pairs the pipeline would solve.
pub fn sample_pairs(g: &CDGraph) -> Vec<BudgetPair> {
    let floor = g.input_size() + g.output_size();
    let grid: Vec<BudgetPair> = budget_grid(g, 20, 20)
        .expect("fixture simulates")
        .into_iter()
        .filter(|b| b.m_save >= floor)
        .collect();
    let top = grid.iter().map(|b| b.m_peak).max().unwrap_or(0);
    let row: Vec<BudgetPair> = grid.into_iter().filter(|b| b.m_peak == top).collect();
    let mut picks = vec![row[row.len() - 1], row[row.len() / 2], row[0]];
    picks.dedup();
    picks
}

/// Menu for `chain` under the default grid, on one thread.
pub fn menu(chain: &Chain) -> OptionMenu {
    let cfg = SolveConfig {
        threads: Some(1),
        ..SolveConfig::default()
    };
    build_menu(chain, &cfg).expect("fixture menu").0
}
