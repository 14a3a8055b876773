//! Per-language centroid embeddings and column standardization.
//!
//! A language centroid is the mean over clips of each clip's time-averaged
//! hidden state, so every clip counts equally no matter how many frames it
//! has.

use crate::corpus::{EmbeddingFragment, EmbeddingSet};
use crate::error::{Error, Result};

/// Columns whose population std falls below this are frozen to zero.
pub const ZERO_VARIANCE_EPS: f64 = 1e-12;

/// Mean of a set of equal-length rows, summed in iteration order.
pub(crate) fn mean_rows<'a, I>(rows: I, dim: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("cannot average an empty list"));
    }
    let inv = n as f64;
    acc.iter_mut().for_each(|a| *a /= inv);
    Ok(acc)
}

/// Centroid from per-clip vectors (each already the clip's frame mean).
pub fn language_centroid(clips: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = clips
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("language has no clips"))?;
    mean_rows(clips.iter().map(Vec::as_slice), dim)
}

/// Centroid from raw frame sequences: frames are averaged within each clip
/// first, then clip means are averaged.
pub fn language_centroid_from_frames(clips: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let dim = clips
        .first()
        .and_then(|c| c.first())
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("language has no clips or an empty frame sequence"))?;
    let means = clips
        .iter()
        .map(|frames| {
            if frames.is_empty() {
                return Err(Error::invalid("clip has an empty frame sequence"));
            }
            mean_rows(frames.iter().map(Vec::as_slice), dim)
        })
        .collect::<Result<Vec<_>>>()?;
    language_centroid(&means)
}

/// L×D matrix of language centroids, rows in `lang_ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidMatrix {
    lang_ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
    standardized: bool,
    col_mean: Vec<f64>,
    col_std: Vec<f64>,
    zero_variance: Vec<usize>,
}

impl CentroidMatrix {
    /// Wraps raw rows as an unstandardized matrix.
    pub fn from_rows(lang_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if lang_ids.len() != rows.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} rows",
                lang_ids.len(),
                rows.len()
            )));
        }
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("centroid matrix needs at least one row"))?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            lang_ids,
            dim,
            values,
            standardized: false,
            col_mean: Vec::new(),
            col_std: Vec::new(),
            zero_variance: Vec::new(),
        })
    }

    pub fn lang_ids(&self) -> &[String] {
        &self.lang_ids
    }

    pub fn n_rows(&self) -> usize {
        self.lang_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.dim + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, c)).collect()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Column means before standardization (empty when unstandardized).
    pub fn col_mean(&self) -> &[f64] {
        &self.col_mean
    }

    /// Population column stds before standardization (empty when unstandardized).
    pub fn col_std(&self) -> &[f64] {
        &self.col_std
    }

    /// Columns frozen to zero because their variance vanished.
    pub fn zero_variance_columns(&self) -> &[usize] {
        &self.zero_variance
    }

    pub fn row_index(&self, lang_id: &str) -> Option<usize> {
        self.lang_ids.iter().position(|l| l == lang_id)
    }

    pub fn to_fragment(&self) -> EmbeddingFragment {
        EmbeddingFragment {
            dim: self.dim,
            rows: self.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

/// One centroid row per language in `lang_order`.
pub fn build_matrix(set: &EmbeddingSet, lang_order: &[String]) -> Result<CentroidMatrix> {
    let rows = lang_order
        .iter()
        .map(|id| {
            let clips = set
                .get(id)
                .ok_or_else(|| Error::MissingLanguage(id.clone()))?;
            language_centroid(clips)
        })
        .collect::<Result<Vec<_>>>()?;
    CentroidMatrix::from_rows(lang_order.to_vec(), rows)
}

/// Z-scores every column with the population std (divisor L).
pub fn standardize(matrix: &CentroidMatrix) -> Result<CentroidMatrix> {
    if matrix.standardized {
        return Err(Error::invalid("matrix is already standardized"));
    }
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::invalid("standardization needs at least two rows"));
    }
    let dim = matrix.dim;
    let nf = n as f64;
    let mut col_mean = vec![0.0; dim];
    for row in matrix.rows() {
        for (m, v) in col_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    col_mean.iter_mut().for_each(|m| *m /= nf);
    let mut col_std = vec![0.0; dim];
    for row in matrix.rows() {
        for ((s, v), m) in col_std.iter_mut().zip(row).zip(&col_mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    col_std.iter_mut().for_each(|s| *s = (*s / nf).sqrt());

    let zero_variance: Vec<usize> = (0..dim)
        .filter(|&c| col_std[c] < ZERO_VARIANCE_EPS)
        .collect();
    let mut values = matrix.values.clone();
    for row in values.chunks_exact_mut(dim) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = if col_std[c] < ZERO_VARIANCE_EPS {
                0.0
            } else {
                (*v - col_mean[c]) / col_std[c]
            };
        }
    }
    Ok(CentroidMatrix {
        lang_ids: matrix.lang_ids.clone(),
        dim,
        values,
        standardized: true,
        col_mean,
        col_std,
        zero_variance,
    })
}
