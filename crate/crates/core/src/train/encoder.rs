use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{MetaEmbeddingSet, Side};
use crate::error::{Error, Result};

/// Linear toy encoder with learnable meta-token rows:
/// `encode(x) = normalize_rows(reshape(W·x) + M)`.
///
/// `w` is `(rows·dim) × features` row-major; `m` is `rows × dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoderParams {
    pub side: Side,
    pub rows: usize,
    pub dim: usize,
    pub features: usize,
    pub w: Vec<f64>,
    pub m: Vec<f64>,
}

/// Unnormalized rows plus what backpropagation through normalization needs.
pub(crate) struct Encoded {
    /// Unit rows.
    pub unit: Vec<f64>,
    /// Pre-normalization row norms.
    pub norms: Vec<f64>,
}

impl ToyEncoderParams {
    pub fn zeros(side: Side, rows: usize, dim: usize, features: usize) -> Self {
        Self {
            side,
            rows,
            dim,
            features,
            w: vec![0.0; rows * dim * features],
            m: vec![0.0; rows * dim],
        }
    }

    /// Entries i.i.d. uniform in `[-0.1, 0.1]`.
    pub fn random<R: Rng + ?Sized>(side: Side, rows: usize, dim: usize, features: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(side, rows, dim, features);
        for x in p.w.iter_mut().chain(p.m.iter_mut()) {
            *x = rng.random_range(-0.1..=0.1);
        }
        p
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.m.len()
    }

    fn check(&self) -> Result<()> {
        if self.w.len() != self.rows * self.dim * self.features || self.m.len() != self.rows * self.dim {
            return Err(Error::Config("encoder parameter shapes do not match rows/dim/features".into()));
        }
        if self.w.iter().chain(&self.m).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "encoder parameters",
            });
        }
        Ok(())
    }

    /// `reshape(W·x) + M`.
    pub fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.features {
            return Err(Error::DimensionMismatch {
                expected: self.features,
                actual: x.len(),
            });
        }
        self.check()?;
        Ok(self
            .w
            .chunks_exact(self.features)
            .zip(&self.m)
            .map(|(w_row, &m)| w_row.iter().zip(x).fold(m, |acc, (&w, &xi)| acc + w * xi))
            .collect())
    }

    pub(crate) fn encode_raw(&self, x: &[f64]) -> Result<Encoded> {
        let pre = self.pre_activation(x)?;
        let mut unit = Vec::with_capacity(pre.len());
        let mut norms = Vec::with_capacity(self.rows);
        for (row, v) in pre.chunks_exact(self.dim).enumerate() {
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite { context: "encode" });
            }
            if norm < crate::embedding::ZERO_NORM {
                return Err(Error::ZeroRow { row });
            }
            unit.extend(v.iter().map(|a| a / norm));
            norms.push(norm);
        }
        Ok(Encoded { unit, norms })
    }

    pub fn encode(&self, x: &[f64]) -> Result<MetaEmbeddingSet<f64>> {
        let pre = self.pre_activation(x)?;
        MetaEmbeddingSet::normalized(&pre, self.dim, self.side)
    }
}
