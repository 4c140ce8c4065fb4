use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::EmbedError;
use crate::lang::LanguageCode;

/// Largest projection dimension accepted by [`lda_fit`].
pub const MAX_LDA_DIM: usize = 250;

/// Linear discriminant projection `x -> Wᵀx`. Columns of `W` have unit
/// norm and are ordered by decreasing discriminant ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaProjection {
    pub basis: DMatrix<f64>,
    /// Generalized eigenvalue of each column.
    pub ratios: Vec<f64>,
    /// Whether the within-class scatter needed a ridge.
    pub regularized: bool,
}

impl LdaProjection {
    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (self.basis.transpose() * DVector::from_column_slice(x)).as_slice().to_vec()
    }
}

/// Fits the projection maximizing between-class over within-class scatter.
/// The output dimension is clamped to `min(out_dim, d, classes - 1)`.
pub fn lda_fit<L: Ord + Clone>(
    embeddings: &[Vec<f64>],
    labels: &[L],
    out_dim: usize,
) -> Result<LdaProjection, EmbedError> {
    if embeddings.len() != labels.len() {
        return Err(EmbedError::LengthMismatch(embeddings.len(), labels.len()));
    }
    if out_dim == 0 || out_dim > MAX_LDA_DIM {
        return Err(EmbedError::OutputDim(out_dim));
    }
    let d = embeddings.first().map_or(0, Vec::len);
    if let Some(bad) = embeddings.iter().find(|v| v.len() != d) {
        return Err(EmbedError::Dimension {
            expected: d,
            found: bad.len(),
        });
    }
    let mut classes: BTreeMap<&L, Vec<&Vec<f64>>> = BTreeMap::new();
    for (x, l) in embeddings.iter().zip(labels) {
        classes.entry(l).or_default().push(x);
    }
    if classes.len() < 2 {
        return Err(EmbedError::TooFewClasses(classes.len()));
    }
    let n = embeddings.len() as f64;
    let overall = embeddings.iter().fold(DVector::zeros(d), |acc, x| acc + DVector::from_column_slice(x)) / n;
    let mut within = DMatrix::<f64>::zeros(d, d);
    let mut between = DMatrix::<f64>::zeros(d, d);
    for members in classes.values() {
        let mean = members.iter().fold(DVector::zeros(d), |acc, x| acc + DVector::from_column_slice(x))
            / members.len() as f64;
        for x in members {
            let dev = DVector::from_column_slice(x) - &mean;
            within += &dev * dev.transpose();
        }
        let shift = &mean - &overall;
        between += members.len() as f64 * &shift * shift.transpose();
    }

    let trace = within.trace();
    let eig_w = SymmetricEigen::new(within.clone());
    let max_eig = eig_w.eigenvalues.max();
    let min_eig = eig_w.eigenvalues.min();
    let regularized = !(max_eig > 0.0) || min_eig <= 1e-12 * max_eig;
    if regularized {
        let ridge = if trace > 0.0 { 1e-6 * trace / d as f64 } else { 1e-6 };
        tracing::warn!(ridge, "within-class scatter is singular; adding ridge");
        within += DMatrix::identity(d, d) * ridge;
    }
    let chol = within.cholesky().expect("ridge makes scatter positive definite");
    let l_inv = chol.l().try_inverse().expect("triangular factor is invertible");
    let m = &l_inv * &between * l_inv.transpose();
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let k = out_dim.min(d).min(classes.len() - 1);
    let l_inv_t = l_inv.transpose();
    let mut basis = DMatrix::zeros(d, k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let mut w = &l_inv_t * eig.eigenvectors.column(idx);
        w /= w.norm();
        let lead = w.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        if lead < 0.0 {
            w = -w;
        }
        basis.set_column(j, &w);
    }
    Ok(LdaProjection {
        basis,
        ratios: order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect(),
        regularized,
    })
}

/// Mean of the raw vectors, projected and scaled to unit length.
pub fn language_embedding(
    language: &LanguageCode,
    embeddings: &[&[f64]],
    projection: &LdaProjection,
) -> Result<Vec<f64>, EmbedError> {
    if embeddings.is_empty() {
        return Err(EmbedError::Empty(language.to_string()));
    }
    let d = projection.input_dim();
    let mut mean = vec![0.0; d];
    for v in embeddings {
        if v.len() != d {
            return Err(EmbedError::Dimension { expected: d, found: v.len() });
        }
        mean.iter_mut().zip(v.iter()).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= embeddings.len() as f64);
    let projected = projection.project(&mean);
    let norm = projected.iter().map(|x| x * x).sum::<f64>().sqrt();
    let magnitude = embeddings.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, x| a.max(x.abs()));
    if !(norm > 1e-12 * magnitude * (d as f64).sqrt()) {
        return Err(EmbedError::ZeroNorm(language.to_string()));
    }
    Ok(projected.into_iter().map(|x| x / norm).collect())
}

/// Pairwise `1 - cos` between language embeddings, in key order.
pub fn cosine_distances(embeddings: &BTreeMap<LanguageCode, Vec<f64>>) -> Vec<Vec<f64>> {
    let vs: Vec<&Vec<f64>> = embeddings.values().collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    vs.iter()
        .map(|a| {
            vs.iter()
                .map(|b| {
                    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                    1.0 - dot / (norm(a) * norm(b))
                })
                .collect()
        })
        .collect()
}
