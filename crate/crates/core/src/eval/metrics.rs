use std::sync::OnceLock;

use super::Qrels;
use crate::error::{Error, Result};
use crate::lateint::RankedList;
use crate::registry::{count_arg, Registry};

/// A ranking-quality metric averaged over queries.
pub trait Metric: Send + Sync {
    fn name(&self) -> String;

    /// How many ranked entries per query the metric looks at.
    fn depth(&self) -> usize;

    fn evaluate(&self, rankings: &[RankedList], qrels: &Qrels) -> Result<f64>;
}

/// Mean of per-query values, summed in ascending query-id order so the result
/// does not depend on the order of `rankings`.
fn mean_by_query(mut per_query: Vec<(u64, f64)>) -> Result<f64> {
    if per_query.is_empty() {
        return Err(Error::EmptyInput);
    }
    per_query.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = per_query.len() as f64;
    Ok(per_query.iter().map(|&(_, v)| v).sum::<f64>() / n)
}

/// Fraction of queries whose top-ranked doc has positive relevance.
pub fn precision_at_1(rankings: &[RankedList], qrels: &Qrels) -> Result<f64> {
    let per_query = rankings
        .iter()
        .map(|r| {
            let judged = qrels.judgments(r.query_id).ok_or(Error::UnknownQuery(r.query_id))?;
            let hit = r
                .top()
                .is_some_and(|e| judged.get(&e.doc_id).copied().unwrap_or(0) > 0);
            Ok((r.query_id, if hit { 1.0 } else { 0.0 }))
        })
        .collect::<Result<Vec<_>>>()?;
    mean_by_query(per_query)
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// NDCG@k with gain `2^rel − 1` and discount `log2(rank + 1)`. Queries whose
/// ideal DCG is zero are left out of the average.
pub fn ndcg_at_k(rankings: &[RankedList], qrels: &Qrels, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("ndcg cutoff must be at least 1".into()));
    }
    let mut per_query = Vec::with_capacity(rankings.len());
    for r in rankings {
        let judged = qrels.judgments(r.query_id).ok_or(Error::UnknownQuery(r.query_id))?;
        let dcg: f64 = r
            .entries
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, e)| gain(judged.get(&e.doc_id).copied().unwrap_or(0)) / discount(i + 1))
            .sum();
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&x| x > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &rel)| gain(rel) / discount(i + 1))
            .sum();
        if idcg > 0.0 {
            per_query.push((r.query_id, dcg / idcg));
        }
    }
    mean_by_query(per_query)
}

#[derive(Debug, Clone, Copy)]
pub struct PrecisionAt1;

impl Metric for PrecisionAt1 {
    fn name(&self) -> String {
        "precision@1".into()
    }

    fn depth(&self) -> usize {
        1
    }

    fn evaluate(&self, rankings: &[RankedList], qrels: &Qrels) -> Result<f64> {
        precision_at_1(rankings, qrels)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NdcgAtK(pub usize);

impl Metric for NdcgAtK {
    fn name(&self) -> String {
        format!("ndcg@{}", self.0)
    }

    fn depth(&self) -> usize {
        self.0
    }

    fn evaluate(&self, rankings: &[RankedList], qrels: &Qrels) -> Result<f64> {
        ndcg_at_k(rankings, qrels, self.0)
    }
}

pub fn metric_registry() -> &'static Registry<dyn Metric> {
    static REGISTRY: OnceLock<Registry<dyn Metric>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn Metric> = Registry::new("metric");
        r.register(&["precision", "p"], "Precision@1 (only @1 supported)", |arg| {
            match count_arg("precision", arg, Some(1))? {
                1 => Ok(Box::new(PrecisionAt1)),
                k => Err(Error::Config(format!("precision@{k} is not supported; use precision@1"))),
            }
        });
        r.register(&["ndcg"], "NDCG@k, gain 2^rel-1, log2 discount (default k=5)", |arg| {
            Ok(Box::new(NdcgAtK(count_arg("ndcg", arg, Some(5))?)))
        });
        r
    })
}
