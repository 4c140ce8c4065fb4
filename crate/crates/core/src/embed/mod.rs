//! Fixed-dimension segment embeddings, language-discriminant projections and
//! per-language mean embeddings.

mod features;
mod io;
mod lda;

pub use features::{embed_segment, MelConfig, LOG_FLOOR};
pub use io::{load_embeddings, write_distance_matrix, write_embeddings, Embeddings};
pub use lda::{cosine_distances, language_embedding, lda_fit, LdaProjection, MAX_LDA_DIM};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("segment has {samples} samples, shorter than one {frame}-sample frame")]
    TooShort { samples: usize, frame: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("{0} embeddings but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("output dimension must be in 1..={MAX_LDA_DIM}, got {0}")]
    OutputDim(usize),
    #[error("no embeddings for language {0}")]
    Empty(String),
    #[error("mean embedding of {0} projects to the zero vector")]
    ZeroNorm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
