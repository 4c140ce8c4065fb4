//! Character n-gram text language identification.
//!
//! Each language gets an additive-smoothed distribution over character
//! n-grams for every order `1..=ngram_order`, all sharing one support: every
//! n-gram seen in any training language plus a single out-of-vocabulary
//! bucket. A text is scored against a language by summing the log
//! probabilities of all its n-grams and dividing by its length in
//! characters. The verdict is the best-scoring language, or unknown when the
//! per-character margin over the runner-up is below the decision threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::lang::LanguageCode;
use crate::textio::{escape_field, unescape_field};

const FORMAT_MAGIC: &str = "voxcrawl-lid";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidConfig {
    pub ngram_order: usize,
    /// Additive smoothing constant.
    pub alpha: f64,
    /// Minimum margin, in nats per character, for a confident verdict.
    pub threshold: f64,
    /// Texts shorter than this (after normalization) are always unknown.
    pub min_chars: usize,
}

impl Default for LidConfig {
    fn default() -> Self {
        Self {
            ngram_order: 3,
            alpha: 0.5,
            threshold: 0.05,
            min_chars: 10,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LidError {
    #[error("at least two languages are needed, got {0}")]
    TooFewLanguages(usize),
    #[error("training text for {0} is empty")]
    EmptyCorpus(LanguageCode),
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("language {0} is not covered by the model")]
    UnknownLanguage(LanguageCode),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Outcome of classifying one text.
#[derive(Debug, Clone, PartialEq)]
pub struct LidVerdict {
    /// `None` means unknown.
    pub language: Option<LanguageCode>,
    /// Best minus second-best length-normalized log-likelihood.
    pub margin: f64,
}

impl LidVerdict {
    pub fn is_unknown(&self) -> bool {
        self.language.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct OrderTable {
    log_probs: HashMap<String, f64>,
    unseen_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidModel {
    config: LidConfig,
    languages: Vec<LanguageCode>,
    /// `tables[lang][n - 1]`
    tables: Vec<Vec<OrderTable>>,
}

/// Lowercases, maps every digit to `0` and collapses whitespace runs to a
/// single space.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        if c.is_numeric() {
            out.push('0');
        } else {
            out.extend(c.to_lowercase());
        }
    }
    out
}

fn padded_chars(normalized: &str) -> Vec<char> {
    let mut chars = Vec::with_capacity(normalized.len() + 2);
    chars.push(' ');
    chars.extend(normalized.chars());
    chars.push(' ');
    chars
}

fn for_each_ngram(chars: &[char], n: usize, mut f: impl FnMut(&str)) {
    let mut gram = String::new();
    for window in chars.windows(n) {
        gram.clear();
        gram.extend(window.iter());
        f(&gram);
    }
}

/// Trains a model from raw training texts per language.
pub fn train_lid<S: AsRef<str>>(
    corpora: &BTreeMap<LanguageCode, Vec<S>>,
    config: &LidConfig,
) -> Result<LidModel, LidError> {
    if corpora.len() < 2 {
        return Err(LidError::TooFewLanguages(corpora.len()));
    }
    if config.ngram_order == 0 {
        return Err(LidError::ZeroOrder);
    }
    let order = config.ngram_order;
    let mut counts: Vec<Vec<HashMap<String, u64>>> = Vec::with_capacity(corpora.len());
    for (language, texts) in corpora {
        let mut per_order = vec![HashMap::new(); order];
        let mut any = false;
        for text in texts {
            let normalized = normalize_text(text.as_ref());
            if normalized.is_empty() {
                continue;
            }
            any = true;
            let chars = padded_chars(&normalized);
            for (idx, table) in per_order.iter_mut().enumerate() {
                for_each_ngram(&chars, idx + 1, |g| *table.entry(g.to_owned()).or_insert(0) += 1);
            }
        }
        if !any {
            return Err(LidError::EmptyCorpus(language.clone()));
        }
        counts.push(per_order);
    }

    // Shared support per order: every n-gram seen anywhere plus one OOV bucket.
    let support: Vec<f64> = (0..order)
        .map(|idx| {
            let union: BTreeSet<&String> = counts.iter().flat_map(|c| c[idx].keys()).collect();
            (union.len() + 1) as f64
        })
        .collect();

    let tables = counts
        .into_iter()
        .map(|per_order| {
            per_order
                .into_iter()
                .enumerate()
                .map(|(idx, table)| {
                    let total: u64 = table.values().sum();
                    let denom = (total as f64 + config.alpha * support[idx]).ln();
                    let log_probs = table
                        .into_iter()
                        .map(|(g, c)| (g, (c as f64 + config.alpha).ln() - denom))
                        .collect();
                    OrderTable {
                        log_probs,
                        unseen_log_prob: config.alpha.ln() - denom,
                    }
                })
                .collect()
        })
        .collect();

    Ok(LidModel {
        config: config.clone(),
        languages: corpora.keys().cloned().collect(),
        tables,
    })
}

impl LidModel {
    pub fn languages(&self) -> &[LanguageCode] {
        &self.languages
    }

    pub fn config(&self) -> &LidConfig {
        &self.config
    }

    pub fn ngram_order(&self) -> usize {
        self.config.ngram_order
    }

    /// Returns a copy with a different decision threshold and minimum length.
    pub fn with_decision(mut self, threshold: f64, min_chars: usize) -> Self {
        self.config.threshold = threshold;
        self.config.min_chars = min_chars;
        self
    }

    /// Probability mass of the n-grams of order `n` observed for `language`,
    /// and the mass left for everything else in the shared support.
    pub fn mass_split(&self, language: &LanguageCode, n: usize, support: usize) -> Option<(f64, f64)> {
        let li = self.languages.binary_search(language).ok()?;
        let table = self.tables[li].get(n.checked_sub(1)?)?;
        let observed: f64 = table.log_probs.values().map(|lp| lp.exp()).sum();
        let unseen = (support - table.log_probs.len()) as f64 * table.unseen_log_prob.exp();
        Some((observed, unseen))
    }

    /// Size of the shared support of order `n` (union of observed n-grams
    /// plus the out-of-vocabulary bucket).
    pub fn support_size(&self, n: usize) -> usize {
        let union: BTreeSet<&String> = self.tables.iter().flat_map(|t| t[n - 1].log_probs.keys()).collect();
        union.len() + 1
    }

    /// Per-language length-normalized log-likelihoods, in `languages()`
    /// order, and the normalized character count.
    pub fn scores(&self, text: &str) -> (Vec<f64>, usize) {
        let normalized = normalize_text(text);
        let char_count = normalized.chars().count();
        if char_count == 0 {
            return (vec![0.0; self.languages.len()], 0);
        }
        let chars = padded_chars(&normalized);
        let mut totals = vec![0.0; self.languages.len()];
        for n in 1..=self.config.ngram_order {
            for_each_ngram(&chars, n, |g| {
                for (total, tables) in totals.iter_mut().zip(&self.tables) {
                    let table = &tables[n - 1];
                    *total += table.log_probs.get(g).copied().unwrap_or(table.unseen_log_prob);
                }
            });
        }
        let norm = char_count as f64;
        (totals.into_iter().map(|t| t / norm).collect(), char_count)
    }

    pub fn classify(&self, text: &str) -> LidVerdict {
        let (scores, char_count) = self.scores(text);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        // Ties resolve to the lexicographically smaller code.
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let margin = if char_count == 0 {
            0.0
        } else {
            (scores[order[0]] - scores[order[1]]).max(0.0)
        };
        let confident = char_count >= self.config.min_chars && margin >= self.config.threshold;
        LidVerdict {
            language: confident.then(|| self.languages[order[0]].clone()),
            margin,
        }
    }

    /// Whether `text` is confidently identified as `expected`.
    pub fn matches(&self, text: &str, expected: &LanguageCode) -> Result<bool, LidError> {
        if self.languages.binary_search(expected).is_err() {
            return Err(LidError::UnknownLanguage(expected.clone()));
        }
        Ok(self.classify(text).language.as_ref() == Some(expected))
    }

    /// Writes the line-based model format:
    ///
    /// ```text
    /// voxcrawl-lid 1
    /// order<TAB>3
    /// alpha<TAB>0.5
    /// threshold<TAB>0.05
    /// min_chars<TAB>10
    /// languages<TAB>aa,bb
    /// unseen<TAB>lang<TAB>n<TAB>log_prob
    /// gram<TAB>lang<TAB>n<TAB>escaped n-gram<TAB>log_prob
    /// ```
    ///
    /// Records are sorted, floats use the shortest round-trip representation.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}")?;
        writeln!(out, "order\t{}", self.config.ngram_order)?;
        writeln!(out, "alpha\t{}", self.config.alpha)?;
        writeln!(out, "threshold\t{}", self.config.threshold)?;
        writeln!(out, "min_chars\t{}", self.config.min_chars)?;
        let langs: Vec<&str> = self.languages.iter().map(LanguageCode::as_str).collect();
        writeln!(out, "languages\t{}", langs.join(","))?;
        for (lang, tables) in self.languages.iter().zip(&self.tables) {
            for (idx, table) in tables.iter().enumerate() {
                writeln!(out, "unseen\t{lang}\t{}\t{}", idx + 1, table.unseen_log_prob)?;
                let sorted: BTreeMap<&String, &f64> = table.log_probs.iter().collect();
                for (gram, lp) in sorted {
                    writeln!(out, "gram\t{lang}\t{}\t{}\t{lp}", idx + 1, escape_field(gram))?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, LidError> {
        let fmt_err = |line: usize, message: &str| LidError::Format {
            line,
            message: message.to_owned(),
        };
        // Leading `#` lines carry provenance and are skipped.
        let mut lines = input
            .lines()
            .enumerate()
            .filter(|(_, l)| !matches!(l, Ok(text) if text.starts_with('#')));
        let (idx, header) = lines.next().ok_or_else(|| fmt_err(1, "empty file"))?;
        let header = header?;
        if header != format!("{FORMAT_MAGIC} {FORMAT_VERSION}") {
            return Err(fmt_err(idx + 1, "unsupported header"));
        }
        let mut config = LidConfig::default();
        let mut languages: Vec<LanguageCode> = Vec::new();
        let mut tables: Vec<Vec<OrderTable>> = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let float = |s: &str| s.parse::<f64>().map_err(|_| fmt_err(line_no, "bad number"));
            let int = |s: &str| s.parse::<usize>().map_err(|_| fmt_err(line_no, "bad integer"));
            match fields.as_slice() {
                ["order", v] => config.ngram_order = int(v)?,
                ["alpha", v] => config.alpha = float(v)?,
                ["threshold", v] => config.threshold = float(v)?,
                ["min_chars", v] => config.min_chars = int(v)?,
                ["languages", v] => {
                    languages = v
                        .split(',')
                        .map(LanguageCode::new)
                        .collect::<Result<_, _>>()
                        .map_err(|e| fmt_err(line_no, &e.to_string()))?;
                    if languages.len() < 2 || !languages.windows(2).all(|w| w[0] < w[1]) {
                        return Err(fmt_err(line_no, "languages must be sorted, unique and at least two"));
                    }
                    if config.ngram_order == 0 {
                        return Err(fmt_err(line_no, "order must precede languages and be positive"));
                    }
                    tables = vec![
                        vec![
                            OrderTable {
                                log_probs: HashMap::new(),
                                unseen_log_prob: f64::NEG_INFINITY,
                            };
                            config.ngram_order
                        ];
                        languages.len()
                    ];
                }
                ["unseen", lang, n, lp] | ["gram", lang, n, _, lp] => {
                    let code = LanguageCode::new(lang).map_err(|e| fmt_err(line_no, &e.to_string()))?;
                    let li = languages
                        .binary_search(&code)
                        .map_err(|_| fmt_err(line_no, "language not declared"))?;
                    let n = int(n)?;
                    if n == 0 || n > config.ngram_order {
                        return Err(fmt_err(line_no, "n-gram order out of range"));
                    }
                    let table = &mut tables[li][n - 1];
                    let lp = float(lp)?;
                    if fields[0] == "unseen" {
                        table.unseen_log_prob = lp;
                    } else {
                        table.log_probs.insert(unescape_field(fields[3]).into_owned(), lp);
                    }
                }
                _ => return Err(fmt_err(line_no, "unrecognized record")),
            }
        }
        if languages.is_empty() {
            return Err(fmt_err(0, "missing languages record"));
        }
        Ok(Self {
            config,
            languages,
            tables,
        })
    }
}
