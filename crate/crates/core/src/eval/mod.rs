//! Retrieval metrics, budget sweeps and pooling baselines.

mod metrics;
mod pool;
mod qrels;

use std::fmt::Write as _;

use serde::Serialize;

pub use metrics::{metric_registry, ndcg_at_k, precision_at_1, Metric, NdcgAtK, PrecisionAt1};
pub use pool::{
    pool_single_last, pool_single_mean, pool_split, pooler_registry, split_sizes, Pooler, SingleLast, SingleMean,
    Split,
};
pub use qrels::Qrels;

use crate::budget::{Budget, BudgetLadder};
use crate::embedding::MetaEmbeddingSet;
use crate::error::{Error, Result};
use crate::index::{memory_report, truncate_index, NestedIndex, Searcher};
use crate::lateint::{scoring_flops, BlockedKernel, ScoringKernel, DEFAULT_BATCH_SIZE};

/// One point on an accuracy/cost curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    #[serde(flatten)]
    pub budget: Budget,
    pub metric: String,
    pub value: f64,
    pub flops: u64,
    pub index_bytes: u64,
}

pub struct SweepOptions<'a> {
    pub kernel: &'a dyn ScoringKernel,
    pub batch_size: usize,
}

impl Default for SweepOptions<'_> {
    fn default() -> Self {
        Self {
            kernel: &BlockedKernel,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

/// Evaluate `metric` at every ladder budget: truncate the index to the group's
/// `r_c`, search at `(r_q, r_c)` and attach the analytic cost columns.
pub fn budget_sweep(
    index: &NestedIndex,
    queries: &[MetaEmbeddingSet],
    query_ids: &[u64],
    qrels: &Qrels,
    ladder: &BudgetLadder,
    metric: &dyn Metric,
    options: &SweepOptions<'_>,
) -> Result<Vec<SweepPoint>> {
    if queries.len() != query_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            actual: query_ids.len(),
        });
    }
    let min_query_rows = queries.iter().map(|q| q.rows()).min().ok_or(Error::EmptyInput)?;
    for b in ladder.groups() {
        if b.r_c() > index.r_c() {
            return Err(Error::BudgetExceedsVectors {
                requested: b.r_c(),
                available: index.r_c(),
            });
        }
        if b.r_q() > min_query_rows {
            return Err(Error::BudgetExceedsVectors {
                requested: b.r_q(),
                available: min_query_rows,
            });
        }
    }
    let depth = metric.depth().min(index.len());
    ladder
        .groups()
        .iter()
        .map(|&budget| {
            let truncated = truncate_index(index, budget.r_c())?;
            let rankings = Searcher::new(&truncated)
                .kernel(options.kernel)
                .batch_size(options.batch_size)
                .query_ids(query_ids)
                .search(queries, budget, depth)?;
            let value = metric.evaluate(&rankings, qrels)?;
            Ok(SweepPoint {
                budget,
                metric: metric.name(),
                value,
                flops: scoring_flops(budget, truncated.dim(), truncated.len()),
                index_bytes: memory_report(&truncated).bytes,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "r_q,r_c,metric,value,flops,index_bytes";

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{},{}",
            p.budget.r_q(),
            p.budget.r_c(),
            p.metric,
            p.value,
            p.flops,
            p.index_bytes
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Side;
    use crate::index::{build_index, search, Dtype, MemoryReport};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (NestedIndex, Vec<MetaEmbeddingSet>, Vec<u64>, Qrels) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 8;
        let mut unit = |rows: usize, side| {
            let raw: Vec<f32> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            MetaEmbeddingSet::normalized(&raw, dim, side).unwrap()
        };
        let cands: Vec<(u64, MetaEmbeddingSet)> = (0..30u64).map(|i| (100 + i, unit(64, Side::Candidate))).collect();
        let queries: Vec<MetaEmbeddingSet> = (0..6).map(|_| unit(16, Side::Query)).collect();
        let ids: Vec<u64> = (0..6).collect();
        let qrels = Qrels::from_triples((0..6u64).map(|q| (q, 100 + q * 3, 1))).unwrap();
        (build_index(&cands, 64, Dtype::Bf16).unwrap(), queries, ids, qrels)
    }

    #[test]
    fn single_group_matches_direct_search() {
        let (idx, queries, ids, qrels) = setup();
        let b = Budget::new(4, 8).unwrap();
        let ladder = BudgetLadder::new(vec![b]).unwrap();
        let points = budget_sweep(&idx, &queries, &ids, &qrels, &ladder, &NdcgAtK(5), &SweepOptions::default()).unwrap();
        assert_eq!(points.len(), 1);
        let direct = search(&truncate_index(&idx, 8).unwrap(), &queries, b, 5, 1000).unwrap();
        assert_eq!(points[0].value, ndcg_at_k(&direct, &qrels, 5).unwrap());
    }

    #[test]
    fn cost_columns_match_independent_accounting() {
        let (idx, queries, ids, qrels) = setup();
        let ladder = BudgetLadder::default_ladder();
        let points = budget_sweep(&idx, &queries, &ids, &qrels, &ladder, &PrecisionAt1, &SweepOptions::default()).unwrap();
        assert_eq!(points.len(), 5);
        for (p, b) in points.iter().zip(ladder.groups()) {
            assert_eq!(p.budget, *b);
            assert_eq!(p.flops, scoring_flops(*b, 8, 30));
            assert_eq!(p.index_bytes, MemoryReport::from_shape(30, b.r_c(), 8, Dtype::Bf16).bytes);
            assert!((0.0..=1.0).contains(&p.value));
        }
        assert!(points.windows(2).all(|w| w[0].flops < w[1].flops));
    }

    #[test]
    fn ladder_beyond_index_rejected() {
        let (idx, queries, ids, qrels) = setup();
        let small = truncate_index(&idx, 8).unwrap();
        let err = budget_sweep(
            &small,
            &queries,
            &ids,
            &qrels,
            &BudgetLadder::default_ladder(),
            &PrecisionAt1,
            &SweepOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::BudgetExceedsVectors { .. }));
    }

    #[test]
    fn csv_layout() {
        let p = SweepPoint {
            budget: Budget::new(1, 1).unwrap(),
            metric: "precision@1".into(),
            value: 0.5,
            flops: 10,
            index_bytes: 20,
        };
        assert_eq!(sweep_to_csv(&[p]), "r_q,r_c,metric,value,flops,index_bytes\n1,1,precision@1,0.500000,10,20\n");
    }
}
