//! Desk-scale training of nested multi-vector embeddings.
//!
//! A linear toy encoder with learnable meta-token rows is trained with one
//! InfoNCE loss per ladder group, all groups optimized together, so that
//! every prefix of the output rows is a usable retrieval representation.
//! Training math runs in f64; evaluation goes through the f32/bf16 retrieval
//! path like any other embeddings.

mod config;
mod data;
mod encoder;
mod grad;
mod loss;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::TrainConfig;
pub use data::{make_synthetic_dataset, make_synthetic_dataset_with, DatasetSpec, EvalSet, SyntheticDataset, Triple};
pub use encoder::ToyEncoderParams;
pub use grad::{loss_gradient, loss_gradient_with, GradientOptions, Gradients, ParamGradient, TIE_EPSILON};
pub use loss::{infonce_group_loss, mmr_loss, similarity_matrix, BatchEmbeddings, LossBreakdown};

use crate::embedding::{MetaEmbeddingSet, Side};
use crate::error::{Error, Result};
use crate::eval::{budget_sweep, NdcgAtK, PrecisionAt1, SweepOptions, SweepPoint};
use crate::index::{build_index, Dtype};

/// `B` (query, positive, hard negative) feature triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl TrainingBatch {
    pub fn new(queries: Vec<Vec<f64>>, positives: Vec<Vec<f64>>, negatives: Vec<Vec<f64>>) -> Result<Self> {
        let b = queries.len();
        if b == 0 {
            return Err(Error::EmptyInput);
        }
        if positives.len() != b || negatives.len() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                actual: positives.len().min(negatives.len()),
            });
        }
        if queries
            .iter()
            .chain(&positives)
            .chain(&negatives)
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite {
                context: "training batch",
            });
        }
        Ok(Self {
            queries,
            positives,
            negatives,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Encode every feature vector with the matching side's encoder.
    pub fn encode(&self, params_q: &ToyEncoderParams, params_c: &ToyEncoderParams) -> Result<BatchEmbeddings<f64>> {
        let enc = |p: &ToyEncoderParams, xs: &[Vec<f64>]| xs.iter().map(|x| p.encode(x)).collect::<Result<Vec<_>>>();
        Ok(BatchEmbeddings {
            queries: enc(params_q, &self.queries)?,
            positives: enc(params_c, &self.positives)?,
            negatives: enc(params_c, &self.negatives)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params_q: ToyEncoderParams,
    pub params_c: ToyEncoderParams,
    /// Loss on the fixed monitor batch after `step` updates, for
    /// `step = 0..=steps`.
    pub history: Vec<LossRecord>,
    pub precision: Vec<SweepPoint>,
    pub ndcg: Vec<SweepPoint>,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |r| r.loss.total)
    }

    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.loss.total)
    }
}

/// `step,total,g0,g1,...`
pub fn history_to_csv(history: &[LossRecord]) -> String {
    let groups = history.first().map_or(0, |r| r.loss.per_group.len());
    let mut out = String::from("step,total");
    for g in 0..groups {
        out.push_str(&format!(",g{g}"));
    }
    out.push('\n');
    for r in history {
        out.push_str(&format!("{},{:.10}", r.step, r.loss.total));
        for l in &r.loss.per_group {
            out.push_str(&format!(",{l:.10}"));
        }
        out.push('\n');
    }
    out
}

fn sgd_step(p: &mut ToyEncoderParams, g: &ParamGradient, lr: f64) {
    for (w, gw) in p.w.iter_mut().zip(&g.w) {
        *w -= lr * gw;
    }
    for (m, gm) in p.m.iter_mut().zip(&g.m) {
        *m -= lr * gm;
    }
}

fn encode_f32(p: &ToyEncoderParams, x: &[f64]) -> Result<MetaEmbeddingSet> {
    let pre: Vec<f32> = p.pre_activation(x)?.into_iter().map(|v| v as f32).collect();
    MetaEmbeddingSet::normalized(&pre, p.dim, p.side)
}

/// Evaluate trained encoders on the held-out set at every ladder budget.
pub fn evaluate_encoders(
    params_q: &ToyEncoderParams,
    params_c: &ToyEncoderParams,
    eval: &EvalSet,
    ladder: &crate::budget::BudgetLadder,
) -> Result<(Vec<SweepPoint>, Vec<SweepPoint>)> {
    let corpus = eval
        .corpus
        .iter()
        .enumerate()
        .map(|(i, x)| Ok((i as u64, encode_f32(params_c, x)?)))
        .collect::<Result<Vec<_>>>()?;
    let queries = eval
        .queries
        .iter()
        .map(|x| encode_f32(params_q, x))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<u64> = (0..queries.len() as u64).collect();
    let index = build_index(&corpus, params_c.rows, Dtype::Bf16)?;
    let opts = SweepOptions::default();
    let precision = budget_sweep(&index, &queries, &ids, &eval.qrels, ladder, &PrecisionAt1, &opts)?;
    let ndcg = budget_sweep(&index, &queries, &ids, &eval.qrels, ladder, &NdcgAtK(5), &opts)?;
    Ok((precision, ndcg))
}

/// Plain constant-step SGD on the weighted multi-group loss.
///
/// All randomness (data, initialization, minibatches) comes from one ChaCha8
/// stream seeded with `config.seed`.
pub fn train_toy(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let data = make_synthetic_dataset_with(&mut rng, config.dataset_spec())?;
    let mut params_q = ToyEncoderParams::random(Side::Query, config.r_q, config.dim, config.features, &mut rng);
    let mut params_c = ToyEncoderParams::random(Side::Candidate, config.r_c, config.dim, config.features, &mut rng);
    let monitor = data.sample_batch(&mut rng, config.batch_size)?;
    // minibatch near-ties are routine at R_c = 64, so the guard is off here
    let options = GradientOptions { tie_epsilon: None };

    let monitor_loss = |q: &ToyEncoderParams, c: &ToyEncoderParams, step: usize| -> Result<LossRecord> {
        let loss = mmr_loss(&monitor.encode(q, c)?, &config.ladder, config.tau, &config.weights)?;
        if !loss.total.is_finite() {
            return Err(Error::Divergence { step, loss: loss.total });
        }
        Ok(LossRecord { step, loss })
    };

    let mut history = Vec::with_capacity(config.steps + 1);
    history.push(monitor_loss(&params_q, &params_c, 0)?);
    for step in 0..config.steps {
        let batch = data.sample_batch(&mut rng, config.batch_size)?;
        let (loss, grads) =
            loss_gradient_with(&params_q, &params_c, &batch, &config.ladder, config.tau, &config.weights, options)
                .map_err(|e| match e {
                    Error::NonFinite { .. } | Error::ZeroRow { .. } => Error::Divergence {
                        step,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
        if !loss.total.is_finite() {
            return Err(Error::Divergence { step, loss: loss.total });
        }
        sgd_step(&mut params_q, &grads.query, config.lr);
        sgd_step(&mut params_c, &grads.candidate, config.lr);
        history.push(monitor_loss(&params_q, &params_c, step + 1)?);
    }

    let (precision, ndcg) = evaluate_encoders(&params_q, &params_c, &data.eval, &config.ladder)?;
    Ok(TrainOutcome {
        params_q,
        params_c,
        history,
        precision,
        ndcg,
    })
}
