//! Late-interaction (MaxSim) scoring.
//!
//! `s(q, c) = Σ_i max_j ⟨q_i, c_j⟩` over unit rows, with the sum taken over
//! query rows in ascending order. Budgeted variants score only the leading
//! `r_q` query rows against the leading `r_c` candidate rows.

mod kernel;

use std::cmp::Ordering;

use num_traits::Float;
use rayon::prelude::*;
use serde::Serialize;

pub use kernel::{kernel_registry, BlockedKernel, NaiveKernel, ScoringKernel, DEFAULT_KERNEL};

use crate::budget::Budget;
use crate::embedding::MetaEmbeddingSet;
use crate::error::{Error, Result};
use crate::index::NestedIndex;

/// Candidates scored per shard unless told otherwise.
pub const DEFAULT_BATCH_SIZE: usize = 1000;

#[inline]
pub fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// MaxSim over raw row-major blocks sharing `dim`.
pub fn maxsim_rows<T: Float>(query: &[T], candidate: &[T], dim: usize) -> T {
    let mut total = T::zero();
    for q in query.chunks_exact(dim) {
        let mut best = T::neg_infinity();
        for c in candidate.chunks_exact(dim) {
            let s = dot(q, c);
            if s > best {
                best = s;
            }
        }
        total = total + best;
    }
    total
}

pub fn maxsim<T: Float>(query: &MetaEmbeddingSet<T>, candidate: &MetaEmbeddingSet<T>) -> Result<T> {
    if query.dim() != candidate.dim() {
        return Err(Error::DimensionMismatch {
            expected: query.dim(),
            actual: candidate.dim(),
        });
    }
    Ok(maxsim_rows(
        query.as_slice(),
        candidate.as_slice(),
        query.dim(),
    ))
}

/// MaxSim restricted to the budget's prefixes of both sides.
pub fn group_score<T: Float>(
    query: &MetaEmbeddingSet<T>,
    candidate: &MetaEmbeddingSet<T>,
    budget: Budget,
) -> Result<T> {
    if query.dim() != candidate.dim() {
        return Err(Error::DimensionMismatch {
            expected: query.dim(),
            actual: candidate.dim(),
        });
    }
    let q = query
        .prefix_slice(budget.r_q())
        .map_err(|_| exceeds(budget.r_q(), query.rows()))?;
    let c = candidate
        .prefix_slice(budget.r_c())
        .map_err(|_| exceeds(budget.r_c(), candidate.rows()))?;
    Ok(maxsim_rows(q, c, query.dim()))
}

fn exceeds(requested: usize, available: usize) -> Error {
    Error::BudgetExceedsVectors {
        requested,
        available,
    }
}

/// Analytic scoring cost: one multiply and one add per dimension per
/// (query vector, candidate vector) pair, over `n` candidates.
pub fn scoring_flops(budget: Budget, dim: usize, n: usize) -> u64 {
    [budget.r_q(), budget.r_c(), dim, n]
        .iter()
        .fold(2u64, |acc, &x| acc.saturating_mul(x as u64))
}

/// Scores of `Q` queries against `N` candidates under one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: Vec<f32>,
    query_ids: Vec<u64>,
    doc_ids: Vec<u64>,
    budget: Budget,
}

impl ScoreMatrix {
    pub fn new(values: Vec<f32>, query_ids: Vec<u64>, doc_ids: Vec<u64>, budget: Budget) -> Result<Self> {
        if values.len() != query_ids.len() * doc_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: query_ids.len() * doc_ids.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "score matrix",
            });
        }
        Ok(Self {
            values,
            query_ids,
            doc_ids,
            budget,
        })
    }

    pub fn queries(&self) -> usize {
        self.query_ids.len()
    }

    pub fn candidates(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn row(&self, q: usize) -> &[f32] {
        let n = self.candidates();
        &self.values[q * n..(q + 1) * n]
    }

    pub fn get(&self, q: usize, n: usize) -> f32 {
        self.values[q * self.candidates() + n]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn query_ids(&self) -> &[u64] {
        &self.query_ids
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    /// Replace the positional query ids assigned by [`score_batch`].
    pub fn with_query_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.query_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.query_ids.len(),
                actual: ids.len(),
            });
        }
        self.query_ids = ids;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedEntry {
    pub doc_id: u64,
    pub score: f32,
}

/// Search output for one query: descending score, ties by ascending doc id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub query_id: u64,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn top(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }
}

/// Total order used for ranking: higher score first, then lower doc id.
pub fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

pub fn top_k(scores: &ScoreMatrix, k: usize) -> Result<Vec<RankedList>> {
    let n = scores.candidates();
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok((0..scores.queries())
        .map(|q| {
            let mut entries: Vec<RankedEntry> = scores
                .row(q)
                .iter()
                .zip(scores.doc_ids())
                .map(|(&score, &doc_id)| RankedEntry { doc_id, score })
                .collect();
            if k < n {
                entries.select_nth_unstable_by(k - 1, rank_order);
                entries.truncate(k);
            }
            entries.sort_unstable_by(rank_order);
            RankedList {
                query_id: scores.query_ids()[q],
                entries,
            }
        })
        .collect())
}

/// Score every query against every indexed candidate with the default kernel.
pub fn score_batch(
    queries: &[MetaEmbeddingSet],
    index: &NestedIndex,
    budget: Budget,
    batch_size: usize,
) -> Result<ScoreMatrix> {
    score_batch_with(queries, index, budget, batch_size, &BlockedKernel)
}

/// Candidates are dequantized in shards of `batch_size`; each shard is scored
/// for all queries in parallel. Every score depends only on its own
/// (query, candidate) pair, so the result does not depend on `batch_size`.
pub fn score_batch_with(
    queries: &[MetaEmbeddingSet],
    index: &NestedIndex,
    budget: Budget,
    batch_size: usize,
    kernel: &dyn ScoringKernel,
) -> Result<ScoreMatrix> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let n = index.len();
    if n == 0 {
        return Err(Error::EmptyIndex);
    }
    if budget.r_c() > index.r_c() {
        return Err(exceeds(budget.r_c(), index.r_c()));
    }
    let dim = index.dim();
    for q in queries {
        if q.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: q.dim(),
            });
        }
        if budget.r_q() > q.rows() {
            return Err(exceeds(budget.r_q(), q.rows()));
        }
    }
    let query_prefixes: Vec<&[f32]> = queries
        .iter()
        .map(|q| &q.as_slice()[..budget.r_q() * dim])
        .collect();

    let mut values = vec![0.0f32; queries.len() * n];
    let mut shard = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        index.dequantize_prefix_into(start..end, budget.r_c(), &mut shard);
        let shard_ref = &shard;
        values
            .par_chunks_mut(n)
            .zip(query_prefixes.par_iter())
            .for_each(|(row, q)| {
                kernel.score_candidates(q, shard_ref, budget.r_c(), dim, &mut row[start..end]);
            });
        start = end;
    }
    ScoreMatrix::new(
        values,
        (0..queries.len() as u64).collect(),
        index.doc_ids().to_vec(),
        budget,
    )
}
