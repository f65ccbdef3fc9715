//! Single- and few-vector baselines built from token-level hidden states.

use std::sync::OnceLock;

use crate::embedding::{MetaEmbeddingSet, Side};
use crate::error::{Error, Result};
use crate::registry::{count_arg, Registry};

pub trait Pooler: Send + Sync {
    fn name(&self) -> String;

    /// Pool a `T × dim` token matrix into unit-norm rows.
    fn pool(&self, tokens: &[f32], dim: usize, side: Side) -> Result<MetaEmbeddingSet>;
}

fn token_count(tokens: &[f32], dim: usize) -> Result<usize> {
    if dim == 0 || tokens.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: tokens.len(),
        });
    }
    match tokens.len() / dim {
        0 => Err(Error::EmptyInput),
        t => Ok(t),
    }
}

fn mean_rows(rows: &[f32], dim: usize) -> Vec<f32> {
    let count = (rows.len() / dim) as f64;
    let mut acc = vec![0.0f64; dim];
    for row in rows.chunks_exact(dim) {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x as f64;
        }
    }
    acc.into_iter().map(|a| (a / count) as f32).collect()
}

pub fn pool_single_last(tokens: &[f32], dim: usize, side: Side) -> Result<MetaEmbeddingSet> {
    let t = token_count(tokens, dim)?;
    MetaEmbeddingSet::normalized(&tokens[(t - 1) * dim..], dim, side)
}

pub fn pool_single_mean(tokens: &[f32], dim: usize, side: Side) -> Result<MetaEmbeddingSet> {
    pool_split(tokens, dim, 1, side)
}

/// Contiguous chunk lengths for `tokens` split into `segments`; the first
/// `tokens % segments` chunks take one extra row.
pub fn split_sizes(tokens: usize, segments: usize) -> Vec<usize> {
    let base = tokens / segments;
    let extra = tokens % segments;
    (0..segments).map(|i| base + usize::from(i < extra)).collect()
}

pub fn pool_split(tokens: &[f32], dim: usize, segments: usize, side: Side) -> Result<MetaEmbeddingSet> {
    let t = token_count(tokens, dim)?;
    if segments == 0 || t < segments {
        return Err(Error::TooFewTokens { tokens: t, segments });
    }
    let mut pooled = Vec::with_capacity(segments * dim);
    let mut start = 0;
    for size in split_sizes(t, segments) {
        pooled.extend(mean_rows(&tokens[start * dim..(start + size) * dim], dim));
        start += size;
    }
    MetaEmbeddingSet::normalized(&pooled, dim, side)
}

#[derive(Debug, Clone, Copy)]
pub struct SingleLast;

impl Pooler for SingleLast {
    fn name(&self) -> String {
        "single-last".into()
    }

    fn pool(&self, tokens: &[f32], dim: usize, side: Side) -> Result<MetaEmbeddingSet> {
        pool_single_last(tokens, dim, side)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SingleMean;

impl Pooler for SingleMean {
    fn name(&self) -> String {
        "single-mean".into()
    }

    fn pool(&self, tokens: &[f32], dim: usize, side: Side) -> Result<MetaEmbeddingSet> {
        pool_single_mean(tokens, dim, side)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Split {
    pub segments: usize,
}

impl Pooler for Split {
    fn name(&self) -> String {
        format!("split@{}", self.segments)
    }

    fn pool(&self, tokens: &[f32], dim: usize, side: Side) -> Result<MetaEmbeddingSet> {
        pool_split(tokens, dim, self.segments, side)
    }
}

pub fn pooler_registry() -> &'static Registry<dyn Pooler> {
    static REGISTRY: OnceLock<Registry<dyn Pooler>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn Pooler> = Registry::new("pooler");
        r.register(&["single-last", "last"], "last token, normalized", |_| Ok(Box::new(SingleLast)));
        r.register(&["single-mean", "mean"], "mean over tokens, normalized", |_| Ok(Box::new(SingleMean)));
        r.register(&["split"], "mean over N contiguous segments (default 16)", |arg| {
            Ok(Box::new(Split {
                segments: count_arg("split", arg, Some(16))?,
            }))
        });
        r
    })
}
