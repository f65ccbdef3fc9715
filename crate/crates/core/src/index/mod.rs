//! Prefix-nested candidate index.
//!
//! Each candidate contributes its first `R_c` meta-embeddings, stored
//! candidate-major and row-major. Because the stored rows are a prefix, any
//! smaller `r_c` is obtained by truncation without re-encoding.

mod bf16;
mod format;

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::Serialize;

pub use bf16::{dequantize_bf16, quantize_bf16, Bf16};
pub use format::{load_index, read_embeddings, save_index, write_embeddings, EmbeddingFile};

use crate::budget::Budget;
use crate::embedding::MetaEmbeddingSet;
use crate::error::{Error, Result};
use crate::lateint::{self, RankedList, ScoringKernel, DEFAULT_BATCH_SIZE};

/// Allowed deviation of a dequantized stored row from unit norm.
pub const STORED_NORM_TOLERANCE: f32 = 4e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    Bf16,
}

impl Dtype {
    pub fn bytes_per_value(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::Bf16 => 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::Bf16 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::Bf16),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::F32 => "f32",
            Dtype::Bf16 => "bf16",
        })
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" => Ok(Dtype::F32),
            "bf16" => Ok(Dtype::Bf16),
            _ => Err(Error::Config(format!("unknown dtype '{s}' (expected f32 or bf16)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Storage {
    F32(Vec<f32>),
    Bf16(Vec<Bf16>),
}

impl Storage {
    fn len(&self) -> usize {
        match self {
            Storage::F32(v) => v.len(),
            Storage::Bf16(v) => v.len(),
        }
    }

    fn dtype(&self) -> Dtype {
        match self {
            Storage::F32(_) => Dtype::F32,
            Storage::Bf16(_) => Dtype::Bf16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedIndex {
    doc_ids: Vec<u64>,
    r_c: usize,
    dim: usize,
    storage: Storage,
}

impl NestedIndex {
    pub(crate) fn from_parts(doc_ids: Vec<u64>, r_c: usize, dim: usize, storage: Storage) -> Result<Self> {
        if r_c == 0 || dim == 0 {
            return Err(Error::Config("index R_c and D must be positive".into()));
        }
        let expected = doc_ids.len() * r_c * dim;
        if storage.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: storage.len(),
            });
        }
        let mut seen = HashSet::with_capacity(doc_ids.len());
        for &id in &doc_ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateDocId(id));
            }
        }
        Ok(Self {
            doc_ids,
            r_c,
            dim,
            storage,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn r_c(&self) -> usize {
        self.r_c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dtype(&self) -> Dtype {
        self.storage.dtype()
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    pub(crate) fn storage(&self) -> &Storage {
        &self.storage
    }

    /// Dequantized rows of candidate `n`.
    pub fn candidate(&self, n: usize) -> Vec<f32> {
        let mut out = Vec::new();
        self.dequantize_prefix_into(n..n + 1, self.r_c, &mut out);
        out
    }

    /// Fill `out` with the first `r_c` rows of each candidate in `range`,
    /// dequantized to f32 and packed contiguously.
    pub fn dequantize_prefix_into(&self, range: Range<usize>, r_c: usize, out: &mut Vec<f32>) {
        assert!(r_c <= self.r_c && range.end <= self.len());
        out.clear();
        out.reserve(range.len() * r_c * self.dim);
        let stride = self.r_c * self.dim;
        let keep = r_c * self.dim;
        for n in range {
            let base = n * stride;
            match &self.storage {
                Storage::F32(v) => out.extend_from_slice(&v[base..base + keep]),
                Storage::Bf16(v) => out.extend(v[base..base + keep].iter().map(|b| b.to_f32())),
            }
        }
    }

    /// Check the stored-row norm invariant.
    pub(crate) fn check_norms(&self) -> Result<()> {
        let mut buf = Vec::new();
        for n in 0..self.len() {
            self.dequantize_prefix_into(n..n + 1, self.r_c, &mut buf);
            for (row, v) in buf.chunks_exact(self.dim).enumerate() {
                let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
                if !norm.is_finite() || (norm - 1.0).abs() > STORED_NORM_TOLERANCE {
                    return Err(Error::Parse(format!(
                        "candidate {} row {row} has norm {norm}, expected unit norm",
                        self.doc_ids[n]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Store the first `r_c` rows of every candidate, quantized per `dtype`, in
/// input order.
pub fn build_index(candidates: &[(u64, MetaEmbeddingSet)], r_c: usize, dtype: Dtype) -> Result<NestedIndex> {
    let first = &candidates.first().ok_or(Error::EmptyIndex)?.1;
    let dim = first.dim();
    if r_c == 0 {
        return Err(Error::OutOfRange {
            requested: 0,
            available: first.rows(),
        });
    }
    let mut raw = Vec::with_capacity(candidates.len() * r_c * dim);
    let mut ids = Vec::with_capacity(candidates.len());
    let mut seen = HashSet::with_capacity(candidates.len());
    for (id, set) in candidates {
        if !seen.insert(*id) {
            return Err(Error::DuplicateDocId(*id));
        }
        if set.dim() != dim {
            return Err(Error::InconsistentDimension {
                expected: dim,
                actual: set.dim(),
            });
        }
        if set.rows() < r_c {
            return Err(Error::BudgetExceedsVectors {
                requested: r_c,
                available: set.rows(),
            });
        }
        raw.extend_from_slice(&set.as_slice()[..r_c * dim]);
        ids.push(*id);
    }
    let storage = match dtype {
        Dtype::F32 => Storage::F32(raw),
        Dtype::Bf16 => Storage::Bf16(
            raw.into_iter()
                .map(quantize_bf16)
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    NestedIndex::from_parts(ids, r_c, dim, storage)
}

/// Keep the first `r_c_new` stored rows per candidate, bit-identically.
pub fn truncate_index(index: &NestedIndex, r_c_new: usize) -> Result<NestedIndex> {
    if r_c_new < 1 || r_c_new > index.r_c {
        return Err(Error::OutOfRange {
            requested: r_c_new,
            available: index.r_c,
        });
    }
    let stride = index.r_c * index.dim;
    let keep = r_c_new * index.dim;
    fn gather<T: Copy>(v: &[T], stride: usize, keep: usize) -> Vec<T> {
        v.chunks_exact(stride)
            .flat_map(|c| c[..keep].iter().copied())
            .collect()
    }
    let storage = match &index.storage {
        Storage::F32(v) => Storage::F32(gather(v, stride, keep)),
        Storage::Bf16(v) => Storage::Bf16(gather(v, stride, keep)),
    };
    Ok(NestedIndex {
        doc_ids: index.doc_ids.clone(),
        r_c: r_c_new,
        dim: index.dim,
        storage,
    })
}

/// Payload size of the data block, ids and header excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryReport {
    pub bytes: u64,
    /// GiB × 100, rounded half-up.
    pub gib_hundredths: u64,
}

impl MemoryReport {
    pub fn from_shape(n: usize, r_c: usize, dim: usize, dtype: Dtype) -> Self {
        let bytes = [n, r_c, dim, dtype.bytes_per_value()]
            .iter()
            .fold(1u64, |acc, &x| acc.saturating_mul(x as u64));
        const GIB: u128 = 1 << 30;
        let gib_hundredths = ((bytes as u128 * 100 + GIB / 2) / GIB) as u64;
        Self {
            bytes,
            gib_hundredths,
        }
    }

    pub fn gib(&self) -> f64 {
        self.gib_hundredths as f64 / 100.0
    }

    /// Two-decimal rendering, e.g. `42.72`.
    pub fn gib_string(&self) -> String {
        format!("{}.{:02}", self.gib_hundredths / 100, self.gib_hundredths % 100)
    }
}

pub fn memory_report(index: &NestedIndex) -> MemoryReport {
    MemoryReport::from_shape(index.len(), index.r_c, index.dim, index.dtype())
}

/// Exhaustive search: score everything, keep the top `k` per query.
pub fn search(
    index: &NestedIndex,
    queries: &[MetaEmbeddingSet],
    budget: Budget,
    k: usize,
    batch_size: usize,
) -> Result<Vec<RankedList>> {
    Searcher::new(index).batch_size(batch_size).search(queries, budget, k)
}

/// Configurable front for [`search`]: kernel, shard size and query ids.
pub struct Searcher<'a> {
    index: &'a NestedIndex,
    kernel: &'a dyn ScoringKernel,
    batch_size: usize,
    query_ids: Option<&'a [u64]>,
}

impl<'a> Searcher<'a> {
    pub fn new(index: &'a NestedIndex) -> Self {
        Self {
            index,
            kernel: &lateint::BlockedKernel,
            batch_size: DEFAULT_BATCH_SIZE,
            query_ids: None,
        }
    }

    pub fn kernel(mut self, kernel: &'a dyn ScoringKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    /// Ids reported in each [`RankedList`]; positional by default.
    pub fn query_ids(mut self, ids: &'a [u64]) -> Self {
        self.query_ids = Some(ids);
        self
    }

    pub fn score(&self, queries: &[MetaEmbeddingSet], budget: Budget) -> Result<lateint::ScoreMatrix> {
        let scores = lateint::score_batch_with(queries, self.index, budget, self.batch_size, self.kernel)?;
        match self.query_ids {
            Some(ids) => scores.with_query_ids(ids.to_vec()),
            None => Ok(scores),
        }
    }

    pub fn search(&self, queries: &[MetaEmbeddingSet], budget: Budget, k: usize) -> Result<Vec<RankedList>> {
        if k > self.index.len() {
            return Err(Error::KTooLarge {
                k,
                n: self.index.len(),
            });
        }
        lateint::top_k(&self.score(queries, budget)?, k)
    }
}
