//! Text-corpus ingestion: stream-parse page dumps, strip markup and keep
//! articles long enough to mine search phrases from.

pub mod corpus;
pub mod dump;
pub mod markup;

pub use corpus::{
    filter_articles, language_eligible, ArticleRecord, CorpusError, LanguageCorpus, DEFAULT_MIN_ARTICLES,
    DEFAULT_MIN_CHARS,
};
pub use dump::{parse_dump, DumpError, DumpPages, RawPage};
pub use markup::strip_markup;
