//! Prefix-nested multi-vector late-interaction retrieval.
//!
//! Candidates and queries are represented by small stacks of unit vectors
//! whose leading rows form coarse summaries and later rows refine them. A
//! retrieval [`Budget`] `(r_q, r_c)` picks how many rows each side
//! contributes to MaxSim scoring, trading accuracy for scoring cost and
//! index memory without re-encoding anything.
//!
//! - [`embedding`]: unit-row embedding sets and prefix slicing
//! - [`budget`]: budgets and nested budget ladders
//! - [`lateint`]: MaxSim kernels, batched scoring, top-k, FLOPs accounting
//! - [`index`]: bf16 nested index, truncation, persistence, search
//! - [`train`]: grouped InfoNCE training of a toy encoder
//! - [`eval`]: Precision@1, NDCG@k, budget sweeps, pooling baselines
//! - [`registry`]: name-keyed strategy registries used for kernels, metrics
//!   and poolers

pub mod budget;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod index;
pub mod lateint;
pub mod registry;
pub mod train;

pub use budget::{validate_ladder, Budget, BudgetLadder};
pub use embedding::{l2_normalize_rows, MetaEmbeddingSet, Side};
pub use error::{Error, ErrorClass, Result};
pub use index::{
    build_index, load_index, memory_report, save_index, search, truncate_index, Dtype, MemoryReport, NestedIndex,
};
pub use lateint::{group_score, maxsim, score_batch, scoring_flops, top_k, RankedEntry, RankedList, ScoreMatrix};
