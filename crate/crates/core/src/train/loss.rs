use num_traits::Float;
use serde::Serialize;

use crate::budget::{Budget, BudgetLadder};
use crate::embedding::MetaEmbeddingSet;
use crate::error::{Error, Result};
use crate::lateint::group_score;

/// Per-group InfoNCE values and their weighted total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub per_group: Vec<f64>,
    pub total: f64,
    pub tau: f64,
    pub weights: Vec<f64>,
}

impl LossBreakdown {
    pub(crate) fn from_groups(per_group: Vec<f64>, tau: f64, weights: &[f64]) -> Self {
        let total = per_group.iter().zip(weights).map(|(l, w)| l * w).sum();
        Self {
            per_group,
            total,
            tau,
            weights: weights.to_vec(),
        }
    }
}

/// Encoded minibatch: per row `u`, a query, its positive and its hard negative.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEmbeddings<T = f64> {
    pub queries: Vec<MetaEmbeddingSet<T>>,
    pub positives: Vec<MetaEmbeddingSet<T>>,
    pub negatives: Vec<MetaEmbeddingSet<T>>,
}

impl<T: Float> BatchEmbeddings<T> {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    fn check(&self) -> Result<()> {
        let b = self.queries.len();
        if b == 0 {
            return Err(Error::EmptyInput);
        }
        for len in [self.positives.len(), self.negatives.len()] {
            if len != b {
                return Err(Error::DimensionMismatch {
                    expected: b,
                    actual: len,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTemperature(tau))
    }
}

/// `S[u][v] = s_g(q_u, c_v) / tau`.
pub fn similarity_matrix<T: Float>(
    queries: &[MetaEmbeddingSet<T>],
    candidates: &[MetaEmbeddingSet<T>],
    group: Budget,
    tau: f64,
) -> Result<Vec<Vec<f64>>> {
    check_tau(tau)?;
    queries
        .iter()
        .map(|q| {
            candidates
                .iter()
                .map(|c| Ok(to_f64(group_score(q, c, group)?) / tau))
                .collect()
        })
        .collect()
}

fn to_f64<T: Float>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Log-softmax denominator of one row: in-batch scores plus the hard negative,
/// shifted by the row maximum.
pub(crate) fn log_sum_exp(row: &[f64], extra: f64) -> f64 {
    let max = row.iter().copied().fold(extra, f64::max);
    let sum: f64 = row.iter().map(|&s| (s - max).exp()).sum::<f64>() + (extra - max).exp();
    max + sum.ln()
}

/// Mean over rows of `-log softmax(S[u])[u]`, where each row's denominator
/// also contains that row's hard-negative score (already divided by tau).
pub fn infonce_group_loss(s: &[Vec<f64>], hard_neg: &[f64]) -> Result<f64> {
    let b = s.len();
    if b == 0 {
        return Err(Error::EmptyInput);
    }
    if hard_neg.len() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            actual: hard_neg.len(),
        });
    }
    if let Some(row) = s.iter().find(|r| r.len() != b) {
        return Err(Error::DimensionMismatch {
            expected: b,
            actual: row.len(),
        });
    }
    if s.iter().flatten().chain(hard_neg).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "infonce_group_loss",
        });
    }
    let total: f64 = s
        .iter()
        .zip(hard_neg)
        .enumerate()
        .map(|(u, (row, &hn))| log_sum_exp(row, hn) - row[u])
        .sum();
    // rounding can leave a tiny negative when the positive dominates
    Ok((total / b as f64).max(0.0))
}

pub(crate) fn check_weights(ladder: &BudgetLadder, weights: &[f64]) -> Result<()> {
    if weights.len() != ladder.len() {
        return Err(Error::Config(format!(
            "{} loss weights given for a ladder of {} groups",
            weights.len(),
            ladder.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite { context: "loss weights" });
    }
    Ok(())
}

/// Weighted sum of per-group InfoNCE losses over the ladder.
pub fn mmr_loss<T: Float>(
    batch: &BatchEmbeddings<T>,
    ladder: &BudgetLadder,
    tau: f64,
    weights: &[f64],
) -> Result<LossBreakdown> {
    batch.check()?;
    check_tau(tau)?;
    check_weights(ladder, weights)?;
    let per_group = ladder
        .groups()
        .iter()
        .map(|&g| {
            let s = similarity_matrix(&batch.queries, &batch.positives, g, tau)?;
            let hard = batch
                .queries
                .iter()
                .zip(&batch.negatives)
                .map(|(q, n)| Ok(to_f64(group_score(q, n, g)?) / tau))
                .collect::<Result<Vec<f64>>>()?;
            infonce_group_loss(&s, &hard)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(LossBreakdown::from_groups(per_group, tau, weights))
}
