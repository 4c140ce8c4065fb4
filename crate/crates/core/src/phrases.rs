//! Search phrase mining: every in-sentence word trigram of a corpus is a
//! TF-IDF term; the highest scoring trigrams that survive lexical and
//! language checks become search phrases.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;

use crate::ingest::LanguageCorpus;
use crate::lang::LanguageCode;
use crate::lid::{LidError, LidModel};
use crate::textio::{data_lines, fmt_f64};

pub type Trigram = [String; 3];

/// Characters that end a sentence when followed by whitespace or the end of
/// the text. Newlines always end a sentence.
const SENTENCE_TERMINATORS: &[char] = &['.', '!', '?', '។', '。', '॥'];

#[derive(Debug, thiserror::Error)]
pub enum PhraseError {
    #[error("corpus for {0} has no articles")]
    EmptyCorpus(LanguageCode),
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error(transparent)]
    Lid(#[from] LidError),
    #[error("phrase file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Splits text into sentences and each sentence into lowercase word tokens
/// with surrounding punctuation removed.
pub fn tokenize_sentences(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let boundary = c == '\n'
            || (SENTENCE_TERMINATORS.contains(&c) && chars.peek().is_none_or(|n| n.is_whitespace()));
        if boundary {
            if c != '\n' {
                current.push(c);
            }
            sentences.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    sentences.push(current);
    sentences
        .iter()
        .map(|s| {
            s.split_whitespace()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|tokens| !tokens.is_empty())
        .collect()
}

/// Per-document trigram counts of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigramCounts {
    per_doc: Vec<HashMap<Trigram, u64>>,
}

impl TrigramCounts {
    pub fn from_documents(per_doc: Vec<HashMap<Trigram, u64>>) -> Self {
        Self { per_doc }
    }

    pub fn n_docs(&self) -> usize {
        self.per_doc.len()
    }

    pub fn documents(&self) -> &[HashMap<Trigram, u64>] {
        &self.per_doc
    }

    /// Total count of `trigram` over all documents.
    pub fn total(&self, trigram: &Trigram) -> u64 {
        self.per_doc.iter().filter_map(|d| d.get(trigram)).sum()
    }

    /// Multiplies every count by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            per_doc: self
                .per_doc
                .iter()
                .map(|d| d.iter().map(|(t, c)| (t.clone(), c * k)).collect())
                .collect(),
        }
    }
}

fn document_trigrams(text: &str) -> HashMap<Trigram, u64> {
    let mut counts = HashMap::new();
    for sentence in tokenize_sentences(text) {
        for w in sentence.windows(3) {
            *counts.entry([w[0].clone(), w[1].clone(), w[2].clone()]).or_insert(0) += 1;
        }
    }
    counts
}

/// Counts every contiguous in-sentence word trigram of every article.
/// Articles are processed in parallel; document order is preserved.
pub fn extract_candidates(corpus: &LanguageCorpus) -> Result<TrigramCounts, PhraseError> {
    if corpus.article_count() == 0 {
        return Err(PhraseError::EmptyCorpus(corpus.language().clone()));
    }
    let per_doc = corpus.articles().par_iter().map(|a| document_trigrams(a.body())).collect();
    Ok(TrigramCounts { per_doc })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrigram {
    pub tokens: Trigram,
    pub score: f64,
    pub doc_freq: usize,
}

impl ScoredTrigram {
    pub fn phrase(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Scores each trigram `t` as `max_d tf(t, d) * ln(N / df(t))`, sorted by
/// descending score with ties broken by the phrase text.
pub fn score_tfidf(candidates: &TrigramCounts) -> Vec<ScoredTrigram> {
    let n_docs = candidates.n_docs() as f64;
    let mut stats: HashMap<&Trigram, (usize, u64)> = HashMap::new();
    for doc in &candidates.per_doc {
        for (trigram, &count) in doc {
            if count == 0 {
                continue;
            }
            let entry = stats.entry(trigram).or_insert((0, 0));
            entry.0 += 1;
            entry.1 = entry.1.max(count);
        }
    }
    let mut scored: Vec<ScoredTrigram> = stats
        .into_iter()
        .map(|(tokens, (df, max_tf))| ScoredTrigram {
            tokens: tokens.clone(),
            score: max_tf as f64 * (n_docs / df as f64).ln(),
            doc_freq: df,
        })
        .collect();
    scored.sort_by(compare_ranked);
    scored
}

fn compare_ranked(a: &ScoredTrigram, b: &ScoredTrigram) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.phrase().cmp(&b.phrase()))
}

/// A three-word search query in a given language.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPhrase {
    pub language: LanguageCode,
    pub tokens: Trigram,
    pub score: f64,
    pub source_doc_count: usize,
}

impl SearchPhrase {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn has_digit(token: &str) -> bool {
    token.chars().any(char::is_numeric)
}

/// Drops phrases with stop-words or digits and phrases the identifier does
/// not attribute to `language`, then keeps the `top_k` best.
pub fn filter_phrases(
    scored: &[ScoredTrigram],
    lid: &LidModel,
    language: &LanguageCode,
    stopwords: &HashSet<String>,
    top_k: usize,
) -> Result<Vec<SearchPhrase>, PhraseError> {
    if top_k == 0 {
        return Err(PhraseError::ZeroTopK);
    }
    let mut out = Vec::with_capacity(top_k.min(scored.len()));
    for candidate in scored {
        if out.len() == top_k {
            break;
        }
        if candidate.tokens.iter().any(|t| has_digit(t) || stopwords.contains(t)) {
            continue;
        }
        if !lid.matches(&candidate.phrase(), language)? {
            continue;
        }
        out.push(SearchPhrase {
            language: language.clone(),
            tokens: candidate.tokens.clone(),
            score: candidate.score,
            source_doc_count: candidate.doc_freq,
        });
    }
    Ok(out)
}

/// Reads a stop-word list: one word per line, `#` comments, case-folded.
pub fn read_stopwords<R: BufRead>(input: R) -> io::Result<HashSet<String>> {
    let mut words = HashSet::new();
    for item in data_lines(input) {
        let (_, line) = item?;
        words.insert(line.trim().to_lowercase());
    }
    Ok(words)
}

/// Writes `language<TAB>score<TAB>token1 token2 token3` lines.
pub fn write_phrases<W: Write>(phrases: &[SearchPhrase], mut out: W) -> io::Result<()> {
    for p in phrases {
        writeln!(out, "{}\t{}\t{}", p.language, fmt_f64(p.score, 6), p.text())?;
    }
    Ok(())
}

pub fn read_phrases<R: BufRead>(input: R) -> Result<Vec<SearchPhrase>, PhraseError> {
    let mut phrases = Vec::new();
    for item in data_lines(input) {
        let (line, text) = item?;
        let err = |message: &str| PhraseError::Parse {
            line,
            message: message.to_owned(),
        };
        let fields: Vec<&str> = text.split('\t').collect();
        let [lang, score, phrase] = fields.as_slice() else {
            return Err(err("expected language<TAB>score<TAB>phrase"));
        };
        let language = LanguageCode::new(lang).map_err(|e| err(&e.to_string()))?;
        let score: f64 = score.parse().map_err(|_| err("bad score"))?;
        let tokens: Vec<&str> = phrase.split(' ').collect();
        let [a, b, c] = tokens.as_slice() else {
            return Err(err("phrase must have exactly three tokens"));
        };
        phrases.push(SearchPhrase {
            language,
            tokens: [a.to_string(), b.to_string(), c.to_string()],
            score,
            source_doc_count: 0,
        });
    }
    Ok(phrases)
}
