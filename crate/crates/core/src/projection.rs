//! PCA of a centroid matrix via the SVD of the column-centered data.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::centroid::CentroidMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `q` orthonormal rows of length D.
    pub components: Vec<Vec<f64>>,
    /// Share of total variance per component, descending.
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    /// Projects one row onto the components.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(row)
                    .zip(&self.mean)
                    .map(|((w, x), m)| w * (x - m))
                    .sum()
            })
            .collect()
    }
}

/// Fits `q` principal components and returns them with the L×q scores.
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca_fit_project(matrix: &CentroidMatrix, q: usize) -> Result<(PcaModel, Vec<Vec<f64>>)> {
    let (l, d) = (matrix.n_rows(), matrix.dim());
    if l < 2 {
        return Err(Error::invalid("PCA needs at least two rows"));
    }
    if q == 0 || q > (l - 1).min(d) {
        return Err(Error::invalid(format!(
            "q={q} outside 1..={}",
            (l - 1).min(d)
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| matrix.rows().map(|r| r[c]).sum::<f64>() / l as f64)
        .collect();
    let centered = DMatrix::from_fn(l, d, |r, c| matrix.get(r, c) - mean[c]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();

    let mut components = Vec::with_capacity(q);
    let mut ratios = Vec::with_capacity(q);
    for &k in order.iter().take(q) {
        let mut row: Vec<f64> = v_t.row(k).iter().copied().collect();
        let pivot =
            row.iter().enumerate().fold(
                0,
                |best, (i, v)| if v.abs() > row[best].abs() { i } else { best },
            );
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(row);
        let s = svd.singular_values[k];
        ratios.push(if total > 0.0 { s * s / total } else { 0.0 });
    }
    let model = PcaModel {
        mean,
        components,
        explained_variance_ratio: ratios,
    };
    let scores = matrix.rows().map(|r| model.project(r)).collect();
    Ok((model, scores))
}

/// Scores as TSV: `lang_id, family, pc1, pc2, ...`.
pub fn scores_tsv(lang_ids: &[String], families: &[String], scores: &[Vec<f64>]) -> String {
    let q = scores.first().map_or(0, Vec::len);
    let mut out = String::from("lang_id\tfamily");
    for k in 1..=q {
        write!(out, "\tpc{k}").unwrap();
    }
    out.push('\n');
    for ((id, fam), row) in lang_ids.iter().zip(families).zip(scores) {
        write!(out, "{id}\t{fam}").unwrap();
        for v in row {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}
