//! Meta-embedding sets: small stacks of unit-norm vectors per query or candidate.
//!
//! Rows are normalized once, at construction. Everything downstream (scoring,
//! indexing, pooling) assumes unit rows and uses plain dot products as cosines.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows whose norm falls below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Accepted deviation of a stored row norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Query,
    Candidate,
}

/// An `R × D` row-major stack of unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaEmbeddingSet<T = f32> {
    data: Vec<T>,
    rows: usize,
    dim: usize,
    side: Side,
}

/// Divide each `dim`-wide row of `data` by its Euclidean norm.
pub fn l2_normalize_rows<T: Float>(data: &[T], dim: usize) -> Result<Vec<T>> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: data.len(),
        });
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "l2_normalize_rows",
        });
    }
    let mut out = Vec::with_capacity(data.len());
    for (row, chunk) in data.chunks_exact(dim).enumerate() {
        let norm = chunk.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
        if norm.to_f64().unwrap_or(0.0) < ZERO_NORM {
            return Err(Error::ZeroRow { row });
        }
        out.extend(chunk.iter().map(|&x| x / norm));
    }
    Ok(out)
}

impl<T: Float> MetaEmbeddingSet<T> {
    /// Build a set from raw rows, normalizing each one.
    pub fn normalized(data: &[T], dim: usize, side: Side) -> Result<Self> {
        let data = l2_normalize_rows(data, dim)?;
        let rows = data.len() / dim;
        if rows == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            data,
            rows,
            dim,
            side,
        })
    }

    /// Wrap rows that are already unit-norm; rejects anything off by more
    /// than [`UNIT_TOLERANCE`].
    pub fn from_unit_rows(data: Vec<T>, dim: usize, side: Side) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len(),
            });
        }
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "from_unit_rows",
            });
        }
        for (row, chunk) in data.chunks_exact(dim).enumerate() {
            let norm = chunk
                .iter()
                .fold(0.0f64, |acc, &x| {
                    let x = x.to_f64().unwrap_or(f64::NAN);
                    acc + x * x
                })
                .sqrt();
            if norm < ZERO_NORM {
                return Err(Error::ZeroRow { row });
            }
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Config(format!(
                    "row {row} has norm {norm}, expected unit norm"
                )));
            }
        }
        let rows = data.len() / dim;
        Ok(Self {
            data,
            rows,
            dim,
            side,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// The first `r` rows, bit-identical.
    pub fn prefix(&self, r: usize) -> Result<Self> {
        if r < 1 || r > self.rows {
            return Err(Error::OutOfRange {
                requested: r,
                available: self.rows,
            });
        }
        Ok(Self {
            data: self.data[..r * self.dim].to_vec(),
            rows: r,
            dim: self.dim,
            side: self.side,
        })
    }

    /// Borrowing variant of [`prefix`](Self::prefix).
    pub fn prefix_slice(&self, r: usize) -> Result<&[T]> {
        if r < 1 || r > self.rows {
            return Err(Error::OutOfRange {
                requested: r,
                available: self.rows,
            });
        }
        Ok(&self.data[..r * self.dim])
    }

    /// Convert element precision without renormalizing.
    pub fn cast<U: Float>(&self) -> MetaEmbeddingSet<U> {
        MetaEmbeddingSet {
            data: self
                .data
                .iter()
                .map(|&x| U::from(x).unwrap_or_else(U::nan))
                .collect(),
            rows: self.rows,
            dim: self.dim,
            side: self.side,
        }
    }
}
