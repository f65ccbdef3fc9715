use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::TrainingBatch;
use crate::error::{Error, Result};
use crate::eval::Qrels;

/// One training example: a query, its positive and a hard negative drawn
/// from the nearest other class.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub class: usize,
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Held-out retrieval task: each query should retrieve corpus items of its
/// own class.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub queries: Vec<Vec<f64>>,
    pub query_classes: Vec<usize>,
    pub corpus: Vec<Vec<f64>>,
    pub corpus_classes: Vec<usize>,
    pub qrels: Qrels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub centroids: Vec<Vec<f64>>,
    pub train: Vec<Triple>,
    pub eval: EvalSet,
}

impl SyntheticDataset {
    /// `b` distinct training triples, uniformly without replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R, b: usize) -> Result<TrainingBatch> {
        if b == 0 || b > self.train.len() {
            return Err(Error::Config(format!(
                "batch size {b} must be in 1..={}",
                self.train.len()
            )));
        }
        let picked: Vec<&Triple> = sample(rng, self.train.len(), b).into_iter().map(|i| &self.train[i]).collect();
        TrainingBatch::new(
            picked.iter().map(|t| t.query.clone()).collect(),
            picked.iter().map(|t| t.positive.clone()).collect(),
            picked.iter().map(|t| t.negative.clone()).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub classes: usize,
    pub features: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub noise_sigma: f64,
}

pub fn make_synthetic_dataset(seed: u64, spec: DatasetSpec) -> Result<SyntheticDataset> {
    make_synthetic_dataset_with(&mut ChaCha8Rng::seed_from_u64(seed), spec)
}

/// Sample `i` belongs to class `i mod C`, so counts per class differ by at
/// most one.
pub fn make_synthetic_dataset_with<R: Rng + ?Sized>(rng: &mut R, spec: DatasetSpec) -> Result<SyntheticDataset> {
    let DatasetSpec {
        classes,
        features,
        n_train,
        n_eval,
        noise_sigma,
    } = spec;
    if classes < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    if features == 0 {
        return Err(Error::Config("synthetic data needs at least 1 feature".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma {noise_sigma} must be finite and >= 0")));
    }

    let centroids: Vec<Vec<f64>> = (0..classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..features).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();

    let nearest_other: Vec<usize> = (0..classes)
        .map(|c| {
            (0..classes)
                .filter(|&o| o != c)
                .map(|o| (o, centroids[c].iter().zip(&centroids[o]).map(|(a, b)| a * b).sum::<f64>()))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, (o, s)| if s > best.1 { (o, s) } else { best })
                .0
        })
        .collect();

    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let noisy = |c: usize, rng: &mut R| -> Vec<f64> {
        centroids[c]
            .iter()
            .map(|&x| if noise_sigma > 0.0 { x + noise.sample(rng) } else { x })
            .collect()
    };

    let train = (0..n_train)
        .map(|i| {
            let class = i % classes;
            Triple {
                class,
                query: noisy(class, rng),
                positive: noisy(class, rng),
                negative: noisy(nearest_other[class], rng),
            }
        })
        .collect();

    let mut queries = Vec::with_capacity(n_eval);
    let mut corpus = Vec::with_capacity(n_eval);
    let mut classes_of = Vec::with_capacity(n_eval);
    for i in 0..n_eval {
        let class = i % classes;
        queries.push(noisy(class, rng));
        corpus.push(noisy(class, rng));
        classes_of.push(class);
    }
    let qrels = Qrels::from_triples((0..n_eval).flat_map(|q| {
        let classes_of = &classes_of;
        (0..n_eval)
            .filter(move |&d| classes_of[d] == classes_of[q])
            .map(move |d| (q as u64, d as u64, 1))
    }))?;

    Ok(SyntheticDataset {
        centroids,
        train,
        eval: EvalSet {
            queries,
            query_classes: classes_of.clone(),
            corpus,
            corpus_classes: classes_of,
            qrels,
        },
    })
}
