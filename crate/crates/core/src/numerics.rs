//! Dense kernels the merging engine is built on: token storage, windowed
//! cosine-similarity matrices, leave-one-out row means and a deterministic
//! descending argsort.
//!
//! Everything here is a pure function of its inputs and accumulates in `f64`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a token is treated as "dead": its cosine similarity with
/// anything (itself included) is defined as 0.
pub const NORM_EPSILON: f64 = 1e-12;

/// `n_tokens × dim` row-major matrix of finite latent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenMatrix {
    n_tokens: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn new(n_tokens: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n_tokens == 0 {
            return Err(Error::invalid("n_tokens", "must be positive"));
        }
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if data.len() != n_tokens * dim {
            return Err(Error::ShapeMismatch {
                what: "token data length",
                expected: n_tokens * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("token matrix"));
        }
        Ok(Self {
            n_tokens,
            dim,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch {
                what: "row width",
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn zeros(n_tokens: usize, dim: usize) -> Result<Self> {
        Self::new(n_tokens, dim, vec![0.0; n_tokens * dim])
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Mutable row access. Writers must keep entries finite.
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mean squared difference over all entries.
    pub fn mse(&self, other: &TokenMatrix) -> Result<f64> {
        if self.n_tokens != other.n_tokens || self.dim != other.dim {
            return Err(Error::ShapeMismatch {
                what: "mse operands",
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Symmetric `size × size` cosine-similarity matrix over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMatrix {
    size: usize,
    values: Vec<f64>,
}

impl SimMatrix {
    /// Builds a matrix from row-major values. The input must be square and finite;
    /// symmetry is not enforced here.
    pub fn from_values(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::ShapeMismatch {
                what: "similarity matrix",
                expected: size * size,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity matrix"));
        }
        Ok(Self { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size * self.size.saturating_sub(1) / 2);
        for i in 0..self.size {
            out.extend_from_slice(&self.row(i)[i + 1..]);
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn validate_indices(indices: &[usize], n_tokens: usize) -> Result<()> {
    let mut seen = vec![false; n_tokens];
    for &i in indices {
        if i >= n_tokens {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: n_tokens,
            });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// Pairwise cosine similarity between the tokens at `indices`, in the order given.
///
/// Only the upper triangle is computed; the lower triangle is mirrored so the
/// result is exactly symmetric. Tokens with norm below [`NORM_EPSILON`] have
/// similarity 0 with everything, including a 0 diagonal entry.
pub fn cosine_similarity_matrix(tokens: &TokenMatrix, indices: &[usize]) -> Result<SimMatrix> {
    if indices.is_empty() {
        return Err(Error::invalid("indices", "must be non-empty"));
    }
    validate_indices(indices, tokens.n_tokens())?;

    let rows: Vec<&[f64]> = indices.iter().map(|&i| tokens.row(i)).collect();
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("window tokens"));
    }
    let norms: Vec<f64> = rows.iter().map(|r| dot(r, r).sqrt()).collect();

    let n = indices.len();
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        if norms[a] < NORM_EPSILON {
            continue;
        }
        values[a * n + a] = 1.0;
        for b in a + 1..n {
            if norms[b] < NORM_EPSILON {
                continue;
            }
            let s = dot(rows[a], rows[b]) / (norms[a] * norms[b]);
            values[a * n + b] = s;
            values[b * n + a] = s;
        }
    }
    SimMatrix::from_values(n, values)
}

/// Average similarity of each token to every *other* token of the window.
pub fn row_mean_excluding_self(sim: &SimMatrix) -> Result<Vec<f64>> {
    let n = sim.size();
    if n < 2 {
        return Err(Error::DegenerateWindow(n));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let row = sim.row(i);
            let total: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum();
            total / denom
        })
        .collect())
}

/// Indices of `values` ordered by value, largest first. Equal values keep
/// their original relative order (smaller index first).
pub fn argsort_descending(values: &[f64]) -> Result<Vec<usize>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("argsort input"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order)
}
