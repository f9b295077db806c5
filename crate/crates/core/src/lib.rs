//! Rematerialization scheduling for chains of blocks: a per-block 0/1
//! program produces execution options, and a dynamic program over the
//! chain picks one option (or a recompute cut) per block under a memory
//! budget.

pub mod block_ilp;
pub mod chain_dp;
pub mod fixtures;
pub mod ilp_solver;
pub mod ingest;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod simulate;

pub use chain_dp::OptionMenu;
pub use model::{
    BlockOption, BlockStep, Bytes, CDGraph, CDGraphBuilder, CKind, CNode, Chain, DKind, DNode, ForwardGraph,
    ForwardNode, Micros, Schedule, ScheduleMeta, ScheduleOp,
};
pub use simulate::{SimError, SimReport};
