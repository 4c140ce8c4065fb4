//! Metrics for crowd label purity, annotator agreement and language
//! classifier evaluation.

mod detection;
mod files;
mod labels;

pub use detection::{cavg, eer, error_rate, BucketError, ErrorRates, LanguageTrial, DEFAULT_BUCKETS};
pub use files::{read_labels, read_trials, write_labels};
pub use labels::{agreement, label_distribution, Agreement, CrowdLabel, LabelDistribution, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no labels")]
    NoLabels,
    #[error("no trials")]
    NoTrials,
    #[error("no segment has two or more definite labels")]
    NoPairs,
    #[error("need both target and non-target trials")]
    SingleClass,
    #[error("trial {trial}: duration {duration_s} s is outside every bucket")]
    OutsideBuckets { trial: String, duration_s: f64 },
    #[error("trial {trial}: no score for language {language}")]
    MissingScore { trial: String, language: String },
    #[error("trial {trial}: {message}")]
    BadTrial { trial: String, message: String },
    #[error("need at least 2 languages, got {0}")]
    TooFewLanguages(usize),
    #[error("language {0} has no trials of its own")]
    NoTrialsFor(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
