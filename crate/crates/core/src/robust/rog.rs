use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::mcd::{default_support, mcd_estimate, McdConfig};
use super::RobustError;
use crate::embed::{lda_fit, LdaProjection, MAX_LDA_DIM};
use crate::lang::LanguageCode;

#[derive(Debug, Clone, PartialEq)]
pub struct RogConfig {
    /// Project with LDA before fitting the class Gaussians.
    pub project: bool,
    pub lda_dim: usize,
    pub mcd: McdConfig,
}

impl Default for RogConfig {
    fn default() -> Self {
        Self {
            project: true,
            lda_dim: MAX_LDA_DIM,
            mcd: McdConfig::default(),
        }
    }
}

/// Class-conditional Gaussians with a shared covariance, parameters
/// estimated per class by MCD.
#[derive(Debug, Clone, PartialEq)]
pub struct RogModel {
    pub classes: Vec<LanguageCode>,
    pub means: Vec<DVector<f64>>,
    pub pooled_scatter: DMatrix<f64>,
    pub priors: Vec<f64>,
    pub threshold: Option<f64>,
    pub projection: Option<LdaProjection>,
}

pub fn fit_rog(
    embeddings: &[Vec<f64>],
    labels: &[LanguageCode],
    config: &RogConfig,
) -> Result<RogModel, RobustError> {
    if embeddings.len() != labels.len() {
        return Err(RobustError::LengthMismatch(embeddings.len(), labels.len()));
    }
    let projection = if config.project {
        Some(lda_fit(embeddings, labels, config.lda_dim)?)
    } else {
        None
    };
    let features: Vec<Vec<f64>> = match &projection {
        Some(p) => embeddings.iter().map(|x| p.project(x)).collect(),
        None => embeddings.to_vec(),
    };
    let mut by_class: BTreeMap<&LanguageCode, Vec<Vec<f64>>> = BTreeMap::new();
    for (x, l) in features.into_iter().zip(labels) {
        by_class.entry(l).or_default().push(x);
    }
    if by_class.len() < 2 {
        return Err(RobustError::TooFewClasses(by_class.len()));
    }
    let d = by_class.values().next().and_then(|v| v.first()).map_or(0, Vec::len);
    let n = labels.len() as f64;
    let mut classes = Vec::new();
    let mut means = Vec::new();
    let mut priors = Vec::new();
    let mut pooled = DMatrix::zeros(d, d);
    let mut support_total = 0usize;
    for (class, points) in by_class {
        if points.len() <= d {
            return Err(RobustError::ClassTooSmall {
                class: class.to_string(),
                n: points.len(),
                d,
            });
        }
        let est = mcd_estimate(&points, default_support(points.len(), d), &config.mcd)?;
        pooled += &est.scatter * est.h as f64;
        support_total += est.h;
        classes.push(class.clone());
        means.push(est.location);
        priors.push(points.len() as f64 / n);
    }
    Ok(RogModel {
        classes,
        means,
        pooled_scatter: pooled / support_total as f64,
        priors,
        threshold: None,
        projection,
    })
}

impl RogModel {
    pub fn class_index(&self, class: &LanguageCode) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Dimension of raw inputs accepted by [`RogModel::posterior`].
    pub fn input_dim(&self) -> usize {
        match &self.projection {
            Some(p) => p.input_dim(),
            None => self.pooled_scatter.nrows(),
        }
    }

    /// Linear discriminants `xᵀΣ⁻¹μ_c − ½μ_cᵀΣ⁻¹μ_c + ln π_c` of a raw input.
    pub fn discriminants(&self, x: &[f64]) -> Result<Vec<f64>, RobustError> {
        if x.len() != self.input_dim() {
            return Err(RobustError::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let z = match &self.projection {
            Some(p) => DVector::from_vec(p.project(x)),
            None => DVector::from_column_slice(x),
        };
        let chol = self
            .pooled_scatter
            .clone()
            .cholesky()
            .ok_or(RobustError::NotPositiveDefinite)?;
        Ok(self
            .means
            .iter()
            .zip(&self.priors)
            .map(|(mu, prior)| {
                let a = chol.solve(mu);
                z.dot(&a) - 0.5 * mu.dot(&a) + prior.ln()
            })
            .collect())
    }

    /// Class posteriors, a softmax over the discriminants.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>, RobustError> {
        Ok(softmax(&self.discriminants(x)?))
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}
