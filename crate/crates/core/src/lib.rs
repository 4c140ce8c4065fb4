//! Building blocks for assembling language-labeled speech corpora from web
//! media: phrase mining from text dumps, metadata language filtering, speech
//! segmentation, robust label cleaning and leakage-safe dataset assembly.

pub mod assembly;
pub mod audio;
pub mod config;
pub mod embed;
pub mod evalkit;
pub mod ingest;
pub mod lang;
pub mod lid;
pub mod phrases;
pub mod pipeline;
pub mod retrieval;
pub mod robust;
pub mod synth;
pub mod textio;

pub use lang::LanguageCode;
