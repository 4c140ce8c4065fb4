//! Crowd validation service: hands out batches of speech clips to
//! annotators, records one verdict per clip and annotator, and reports label
//! statistics per language.
//!
//! State lives in an append-only newline-delimited JSON log that is replayed
//! on start. All writes go through one writer; readers work on immutable
//! snapshots.

mod catalog;
mod http;
mod service;
mod store;
mod tokens;

pub use catalog::{Catalog, Clip};
pub use http::{router, serve};
pub use service::{Batch, LanguageStats, ServiceConfig, Session, ValidationService};
pub use store::{LabelStore, Snapshot};
pub use tokens::TokenRegistry;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("missing or unknown bearer token")]
    Unauthorized,
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("segment {0} was not issued to this session")]
    NotIssued(String),
    #[error("segment {segment_id} is already labeled by {annotator_id}")]
    Conflict { segment_id: String, annotator_id: String },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Audio(#[from] voxcrawl_core::audio::AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
