use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// Speech in the expected language.
    TargetSpeech,
    /// Speech in some other language.
    OtherLanguage,
    NonSpeech,
    Unsure,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [Verdict::TargetSpeech, Verdict::OtherLanguage, Verdict::NonSpeech, Verdict::Unsure];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::TargetSpeech => "TARGET_SPEECH",
            Verdict::OtherLanguage => "OTHER_LANGUAGE",
            Verdict::NonSpeech => "NON_SPEECH",
            Verdict::Unsure => "UNSURE",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown verdict {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrowdLabel {
    pub segment_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    /// Self-reported proficiency, 1 to 5.
    pub proficiency: u8,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelDistribution {
    pub total: u64,
    /// Counts in [`Verdict::ALL`] order.
    pub counts: [u64; 4],
    pub proportions: [f64; 4],
    /// TARGET / (TARGET + OTHER); `None` when neither occurs.
    pub speech_purity: Option<f64>,
}

impl LabelDistribution {
    pub fn count(&self, v: Verdict) -> u64 {
        self.counts[v.index()]
    }

    pub fn proportion(&self, v: Verdict) -> f64 {
        self.proportions[v.index()]
    }
}

pub fn label_distribution<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Result<LabelDistribution, EvalError> {
    let mut counts = [0u64; 4];
    for v in verdicts {
        counts[v.index()] += 1;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(EvalError::NoLabels);
    }
    let speech = counts[0] + counts[1];
    Ok(LabelDistribution {
        total,
        counts,
        proportions: counts.map(|c| c as f64 / total as f64),
        speech_purity: (speech > 0).then(|| counts[0] as f64 / speech as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub pairs: u64,
    pub agreeing: u64,
    pub rate: f64,
}

/// Share of agreeing verdict pairs over all unordered pairs of labels on the
/// same segment, ignoring UNSURE labels.
pub fn agreement(labels: &[CrowdLabel]) -> Result<Agreement, EvalError> {
    let mut by_segment: BTreeMap<&str, [u64; 3]> = BTreeMap::new();
    for l in labels.iter().filter(|l| l.verdict != Verdict::Unsure) {
        by_segment.entry(&l.segment_id).or_default()[l.verdict.index()] += 1;
    }
    let pairs_of = |k: u64| k * k.saturating_sub(1) / 2;
    let (mut pairs, mut agreeing) = (0, 0);
    for counts in by_segment.values() {
        pairs += pairs_of(counts.iter().sum());
        agreeing += counts.iter().map(|&c| pairs_of(c)).sum::<u64>();
    }
    if pairs == 0 {
        return Err(EvalError::NoPairs);
    }
    Ok(Agreement {
        pairs,
        agreeing,
        rate: agreeing as f64 / pairs as f64,
    })
}
