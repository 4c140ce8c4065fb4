//! Label-noise filtering: a class-conditional Gaussian classifier with
//! robust (MCD) parameters scores how plausible each segment's language
//! label is, and segments under a calibrated posterior threshold are dropped.

mod filter;
mod mcd;
mod model_io;
mod rog;

pub use filter::{filter, select_threshold, FilterReport};
pub use mcd::{cstep_violations, default_support, mcd_estimate, McdConfig, McdEstimate};
pub use model_io::{read_model, write_model};
pub use rog::{fit_rog, softmax, RogConfig, RogModel};

use crate::embed::EmbedError;

#[derive(Debug, thiserror::Error)]
pub enum RobustError {
    #[error("need more points than dimensions, got n={n} d={d}")]
    TooFewPoints { n: usize, d: usize },
    #[error("support size h={h} outside [⌈(n+d+1)/2⌉, n] for n={n} d={d}")]
    SupportSize { h: usize, n: usize, d: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("{0} embeddings but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {class} has {n} points, needs more than {d}")]
    ClassTooSmall { class: String, n: usize, d: usize },
    #[error("pooled scatter is not positive definite")]
    NotPositiveDefinite,
    #[error("threshold selection needs both correct and incorrect labels")]
    OneSidedLabels,
    #[error("{count} segment(s) without embeddings: {ids}")]
    MissingEmbeddings { count: usize, ids: String },
    #[error("segment {segment} has label {label} unknown to the model")]
    UnknownClass { segment: String, label: String },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
