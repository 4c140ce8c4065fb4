//! Cleaned articles and per-language corpora.

use std::io::{self, BufRead, Write};

use crate::ingest::dump::RawPage;
use crate::ingest::markup::strip_markup;
use crate::lang::LanguageCode;
use crate::textio::{data_lines, escape_field, unescape_field};

/// Default minimum body length, in characters, for an article to be kept.
pub const DEFAULT_MIN_CHARS: usize = 3000;
/// A language needs strictly more articles than this to be used.
pub const DEFAULT_MIN_ARTICLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleRecord {
    language: LanguageCode,
    title: String,
    body: String,
    char_count: usize,
}

impl ArticleRecord {
    pub fn new(language: LanguageCode, title: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let char_count = body.chars().count();
        Self {
            language,
            title: title.into(),
            body,
            char_count,
        }
    }

    /// Strips the page markup. Redirect pages yield `None`.
    pub fn from_page(page: &RawPage) -> Option<Self> {
        if page.redirect {
            return None;
        }
        Some(Self::new(page.language.clone(), page.title.clone(), strip_markup(&page.text)))
    }

    pub fn language(&self) -> &LanguageCode {
        &self.language
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Length of the body in Unicode scalar values.
    pub fn char_count(&self) -> usize {
        self.char_count
    }

    fn is_title_only(&self) -> bool {
        let body = self.body.trim();
        body.is_empty() || body == self.title.trim()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageCorpus {
    language: LanguageCode,
    articles: Vec<ArticleRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("article {title:?} is in {found}, expected {expected}")]
    MixedLanguages {
        expected: LanguageCode,
        found: LanguageCode,
        title: String,
    },
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LanguageCorpus {
    pub fn new(language: LanguageCode, articles: Vec<ArticleRecord>) -> Result<Self, CorpusError> {
        if let Some(bad) = articles.iter().find(|a| a.language != language) {
            return Err(CorpusError::MixedLanguages {
                expected: language,
                found: bad.language.clone(),
                title: bad.title.clone(),
            });
        }
        Ok(Self { language, articles })
    }

    pub fn language(&self) -> &LanguageCode {
        &self.language
    }

    pub fn articles(&self) -> &[ArticleRecord] {
        &self.articles
    }

    pub fn article_count(&self) -> usize {
        self.articles.len()
    }

    pub fn into_articles(self) -> Vec<ArticleRecord> {
        self.articles
    }

    /// Writes one `title<TAB>body` record per line.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for article in &self.articles {
            writeln!(out, "{}\t{}", escape_field(&article.title), escape_field(&article.body))?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(language: LanguageCode, input: R) -> Result<Self, CorpusError> {
        let mut articles = Vec::new();
        for item in data_lines(input) {
            let (line, text) = item?;
            let (title, body) = text.split_once('\t').ok_or_else(|| CorpusError::Parse {
                line,
                message: "expected title<TAB>body".into(),
            })?;
            articles.push(ArticleRecord::new(
                language.clone(),
                unescape_field(title),
                unescape_field(body),
            ));
        }
        Ok(Self { language, articles })
    }
}

/// Keeps articles whose body has at least `min_chars` characters and is not
/// just a repetition of the title.
///
/// The language of the corpus is taken from the first article; an empty input
/// needs it spelled out, hence the explicit `language` argument.
pub fn filter_articles(
    language: &LanguageCode,
    articles: impl IntoIterator<Item = ArticleRecord>,
    min_chars: usize,
) -> Result<LanguageCorpus, CorpusError> {
    let mut kept = Vec::new();
    for article in articles {
        if &article.language != language {
            return Err(CorpusError::MixedLanguages {
                expected: language.clone(),
                found: article.language,
                title: article.title,
            });
        }
        if article.char_count >= min_chars && !article.is_title_only() {
            kept.push(article);
        }
    }
    Ok(LanguageCorpus {
        language: language.clone(),
        articles: kept,
    })
}

/// Whether a language has strictly more than `min_articles` usable articles.
pub fn language_eligible(corpus: &LanguageCorpus, min_articles: usize) -> bool {
    corpus.article_count() > min_articles
}
