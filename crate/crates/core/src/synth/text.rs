//! Artificial languages with their own scripts, for exercising the text side
//! of the pipeline without real corpora.
//!
//! A language is a seeded lexicon of CV(C) syllable words over a private
//! consonant/vowel inventory. Words are drawn with Zipf-like frequencies,
//! and documents mix the global lexicon with a document-specific topic
//! vocabulary so that phrase statistics look like those of real articles.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::lang::LanguageCode;

struct Script {
    consonants: &'static str,
    vowels: &'static str,
}

const SCRIPTS: &[Script] = &[
    Script {
        consonants: "bdfgklmnprstvz",
        vowels: "aeiou",
    },
    Script {
        consonants: "βγδζθκλμνξπρστφχ",
        vowels: "αεηιουω",
    },
    Script {
        consonants: "бвгджзклмнпрстфхцчш",
        vowels: "аеиоуыэюя",
    },
    Script {
        consonants: "բգդզթժլխծկհձղմյնշչպջռսվտրցփք",
        vowels: "աեէըիոօ",
    },
    Script {
        consonants: "ბგდვზთკლმნპჟრსტფქღყშჩცძწჭხ",
        vowels: "აეიოუ",
    },
    Script {
        consonants: "בגדהוזחטכלמנסעפצקרשת",
        vowels: "אי",
    },
];

/// Maximum number of distinct synthetic languages.
pub const MAX_LANGUAGES: usize = 6;

#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    code: LanguageCode,
    lexicon: Vec<String>,
    word_weights: WeightedIndex<f64>,
}

fn weighted_chars(chars: &str, rng: &mut ChaCha8Rng) -> (Vec<char>, WeightedIndex<f64>) {
    let mut chars: Vec<char> = chars.chars().collect();
    chars.shuffle(rng);
    let weights: Vec<f64> = (0..chars.len()).map(|i| 1.0 / (i as f64 + 3.0)).collect();
    (chars, WeightedIndex::new(weights).expect("non-empty inventory"))
}

impl SyntheticLanguage {
    /// Builds language number `index` (0-based) of a family. Codes are
    /// `qaa`, `qab`, ... from the ISO-639 local-use range.
    pub fn new(index: usize, seed: u64) -> Self {
        assert!(index < MAX_LANGUAGES, "at most {MAX_LANGUAGES} synthetic languages");
        let script = &SCRIPTS[index];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((index as u64 + 1) << 32));
        let (consonants, c_weights) = weighted_chars(script.consonants, &mut rng);
        let (vowels, v_weights) = weighted_chars(script.vowels, &mut rng);
        let coda_prob = rng.random_range(0.1..0.4);
        let mut lexicon = Vec::new();
        let mut seen = std::collections::HashSet::new();
        while lexicon.len() < 1500 {
            let syllables = rng.random_range(1..=3);
            let mut word = String::new();
            for _ in 0..syllables {
                word.push(consonants[c_weights.sample(&mut rng)]);
                word.push(vowels[v_weights.sample(&mut rng)]);
                if rng.random_bool(coda_prob) {
                    word.push(consonants[c_weights.sample(&mut rng)]);
                }
            }
            if seen.insert(word.clone()) {
                lexicon.push(word);
            }
        }
        let weights: Vec<f64> = (0..lexicon.len()).map(|r| 1.0 / (r as f64 + 2.0)).collect();
        let code = LanguageCode::new(&format!("qa{}", (b'a' + index as u8) as char)).unwrap();
        Self {
            code,
            lexicon,
            word_weights: WeightedIndex::new(weights).unwrap(),
        }
    }

    /// The first `count` languages of the family generated from `seed`.
    pub fn family(count: usize, seed: u64) -> Vec<Self> {
        (0..count).map(|i| Self::new(i, seed)).collect()
    }

    pub fn code(&self) -> &LanguageCode {
        &self.code
    }

    pub fn word<R: Rng>(&self, rng: &mut R) -> &str {
        &self.lexicon[self.word_weights.sample(rng)]
    }

    /// A sentence of 5..15 words ending with a period.
    pub fn sentence<R: Rng>(&self, rng: &mut R) -> String {
        let n = rng.random_range(5..15);
        let words: Vec<&str> = (0..n).map(|_| self.word(rng)).collect();
        format!("{}.", words.join(" "))
    }

    /// Sentences until at least `min_chars` characters.
    pub fn paragraph<R: Rng>(&self, rng: &mut R, min_chars: usize) -> String {
        let mut out = String::new();
        let mut count = 0;
        while count < min_chars {
            if !out.is_empty() {
                out.push(' ');
                count += 1;
            }
            let s = self.sentence(rng);
            count += s.chars().count();
            out.push_str(&s);
        }
        out
    }

    /// Exactly `n_chars` characters of running text.
    pub fn sample_chars<R: Rng>(&self, rng: &mut R, n_chars: usize) -> String {
        self.paragraph(rng, n_chars).chars().take(n_chars).collect()
    }

    /// A document whose sentences draw a third of their words from a small
    /// topic vocabulary, giving topic-specific recurring phrases.
    pub fn document<R: Rng>(&self, rng: &mut R, min_chars: usize) -> String {
        let topic: Vec<&str> = (0..12)
            .map(|_| self.lexicon[rng.random_range(200..self.lexicon.len())].as_str())
            .collect();
        let phrases: Vec<[&str; 3]> = (0..4)
            .map(|_| [topic[rng.random_range(0..12)], topic[rng.random_range(0..12)], topic[rng.random_range(0..12)]])
            .collect();
        let mut out = String::new();
        while out.chars().count() < min_chars {
            let n = rng.random_range(6..16);
            let mut words: Vec<&str> = Vec::with_capacity(n + 3);
            while words.len() < n {
                match rng.random_range(0..6) {
                    0 => words.extend(phrases[rng.random_range(0..phrases.len())]),
                    1 => words.push(topic[rng.random_range(0..topic.len())]),
                    _ => words.push(self.word(rng)),
                }
            }
            if !out.is_empty() {
                out.push(if rng.random_bool(0.2) { '\n' } else { ' ' });
            }
            out.push_str(&words.join(" "));
            out.push('.');
        }
        out
    }
}
