//! Train/eval split construction with video-level leakage removal, and
//! per-language duration statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::evalkit::{CrowdLabel, Verdict};
use crate::lang::LanguageCode;
use crate::textio::{data_lines, fmt_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub segment_id: String,
    pub video_id: String,
    pub channel_id: String,
    pub language: LanguageCode,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub segment: SegmentRecord,
    pub split: Split,
}

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate segment id {0}")]
    DuplicateSegment(String),
    #[error("video {0} appears in both splits")]
    VideoInBothSplits(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSelection {
    pub per_language_cap: usize,
    pub min_confirmations: usize,
    pub seed: u64,
}

impl Default for EvalSelection {
    fn default() -> Self {
        Self {
            per_language_cap: 100,
            min_confirmations: 2,
            seed: 0,
        }
    }
}

/// Segments confirmed as target-language speech by at least
/// `min_confirmations` distinct annotators and given no other verdict by
/// anyone (UNSURE included).
pub fn qualifying_segments(labels: &[CrowdLabel], min_confirmations: usize) -> BTreeSet<String> {
    let mut confirmations: HashMap<&str, HashSet<&str>> = HashMap::new();
    let mut contradicted: HashSet<&str> = HashSet::new();
    for l in labels {
        if l.verdict == Verdict::TargetSpeech {
            confirmations.entry(&l.segment_id).or_default().insert(&l.annotator_id);
        } else {
            contradicted.insert(&l.segment_id);
        }
    }
    confirmations
        .into_iter()
        .filter(|(seg, who)| who.len() >= min_confirmations && !contradicted.contains(seg))
        .map(|(seg, _)| seg.to_owned())
        .collect()
}

fn language_stream(language: &LanguageCode) -> u64 {
    language.as_ref().bytes().fold(0u64, |acc, b| (acc << 8) | u64::from(b))
}

/// Per language, at most `per_language_cap` qualifying segments drawn
/// uniformly with a seeded generator. Output is ordered by language, then
/// segment id.
pub fn build_eval(segments: &[SegmentRecord], labels: &[CrowdLabel], config: &EvalSelection) -> Vec<SegmentRecord> {
    let qualifying = qualifying_segments(labels, config.min_confirmations);
    let mut by_language: BTreeMap<&LanguageCode, Vec<&SegmentRecord>> = BTreeMap::new();
    for s in segments.iter().filter(|s| qualifying.contains(&s.segment_id)) {
        by_language.entry(&s.language).or_default().push(s);
    }
    let mut out = Vec::new();
    for (language, mut pool) in by_language {
        pool.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
        let mut chosen: Vec<&SegmentRecord> = if pool.len() <= config.per_language_cap {
            pool
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(language_stream(language));
            sample(&mut rng, pool.len(), config.per_language_cap).into_iter().map(|i| pool[i]).collect()
        };
        chosen.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
        out.extend(chosen.into_iter().cloned());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSplit {
    pub train: Vec<SegmentRecord>,
    /// Non-eval segments dropped because their video (or, when strict,
    /// their channel) has an eval segment.
    pub removed: Vec<SegmentRecord>,
    /// Channels with segments in both train and eval.
    pub leaking_channels: BTreeSet<String>,
}

/// Everything not in eval and not from a video with an eval segment. With
/// `channel_strict`, whole channels with an eval segment are excluded too.
pub fn build_train(segments: &[SegmentRecord], eval: &[SegmentRecord], channel_strict: bool) -> TrainSplit {
    let eval_ids: HashSet<&str> = eval.iter().map(|s| s.segment_id.as_str()).collect();
    let eval_videos: HashSet<&str> = eval.iter().map(|s| s.video_id.as_str()).collect();
    let eval_channels: HashSet<&str> = eval.iter().map(|s| s.channel_id.as_str()).collect();
    let mut split = TrainSplit::default();
    for s in segments.iter().filter(|s| !eval_ids.contains(s.segment_id.as_str())) {
        let channel_hit = eval_channels.contains(s.channel_id.as_str());
        if eval_videos.contains(s.video_id.as_str()) || (channel_strict && channel_hit) {
            split.removed.push(s.clone());
        } else {
            if channel_hit {
                split.leaking_channels.insert(s.channel_id.clone());
            }
            split.train.push(s.clone());
        }
    }
    split
}

/// Joins train and eval into manifest entries, sorted by segment id, and
/// checks id uniqueness and video-level disjointness.
pub fn make_manifest(train: &[SegmentRecord], eval: &[SegmentRecord]) -> Result<Vec<ManifestEntry>, AssemblyError> {
    let mut entries: Vec<ManifestEntry> = train
        .iter()
        .map(|s| (s, Split::Train))
        .chain(eval.iter().map(|s| (s, Split::Eval)))
        .map(|(s, split)| ManifestEntry {
            segment: s.clone(),
            split,
        })
        .collect();
    entries.sort_by(|a, b| a.segment.segment_id.cmp(&b.segment.segment_id));
    check_manifest(&entries)?;
    Ok(entries)
}

pub fn check_manifest(entries: &[ManifestEntry]) -> Result<(), AssemblyError> {
    let mut ids = HashSet::new();
    let mut video_split: HashMap<&str, Split> = HashMap::new();
    for e in entries {
        if !ids.insert(&e.segment.segment_id) {
            return Err(AssemblyError::DuplicateSegment(e.segment.segment_id.clone()));
        }
        if *video_split.entry(&e.segment.video_id).or_insert(e.split) != e.split {
            return Err(AssemblyError::VideoInBothSplits(e.segment.video_id.clone()));
        }
    }
    Ok(())
}

pub const MANIFEST_COLUMNS: &str = "# segment_id\tvideo_id\tchannel_id\tlanguage\tduration_s\tsplit";

pub fn write_manifest<W: Write>(entries: &[ManifestEntry], mut out: W) -> io::Result<()> {
    writeln!(out, "{MANIFEST_COLUMNS}")?;
    for e in entries {
        let s = &e.segment;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.segment_id,
            s.video_id,
            s.channel_id,
            s.language,
            fmt_f64(s.duration_s, 3),
            e.split
        )?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<ManifestEntry>, AssemblyError> {
    let mut entries = Vec::new();
    for item in data_lines(input) {
        let (line, text) = item?;
        let err = |message: String| AssemblyError::Format { line, message };
        let fields: Vec<&str> = text.split('\t').collect();
        let [segment_id, video_id, channel_id, language, duration, split] = fields.as_slice() else {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        };
        entries.push(ManifestEntry {
            segment: SegmentRecord {
                segment_id: segment_id.to_string(),
                video_id: video_id.to_string(),
                channel_id: channel_id.to_string(),
                language: LanguageCode::new(language).map_err(|e| err(e.to_string()))?,
                duration_s: duration
                    .parse()
                    .ok()
                    .filter(|d: &f64| d.is_finite() && *d >= 0.0)
                    .ok_or_else(|| err(format!("bad duration {duration:?}")))?,
            },
            split: split.parse().map_err(err)?,
        });
    }
    check_manifest(&entries)?;
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationStats {
    pub hours: BTreeMap<LanguageCode, f64>,
    pub total_hours: f64,
    /// Mean over languages present; 0 when there are none.
    pub average_hours: f64,
}

/// Hours per language over the given entries.
pub fn stats<'a, I: IntoIterator<Item = &'a SegmentRecord>>(segments: I) -> DurationStats {
    let mut seconds: BTreeMap<LanguageCode, f64> = BTreeMap::new();
    for s in segments {
        *seconds.entry(s.language.clone()).or_default() += s.duration_s;
    }
    let hours: BTreeMap<LanguageCode, f64> = seconds.into_iter().map(|(l, s)| (l, s / 3600.0)).collect();
    let total_hours: f64 = hours.values().sum();
    let average_hours = if hours.is_empty() { 0.0 } else { total_hours / hours.len() as f64 };
    DurationStats {
        hours,
        total_hours,
        average_hours,
    }
}

/// `language<TAB>hours` rows to three decimals, then Total and Average.
pub fn write_stats<W: Write>(stats: &DurationStats, mut out: W) -> io::Result<()> {
    writeln!(out, "language\thours")?;
    for (l, h) in &stats.hours {
        writeln!(out, "{l}\t{}", fmt_f64(*h, 3))?;
    }
    writeln!(out, "Total\t{}", fmt_f64(stats.total_hours, 3))?;
    writeln!(out, "Average\t{}", fmt_f64(stats.average_hours, 3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_names_round_trip() {
        for s in [Split::Train, Split::Eval] {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        assert!("test".parse::<Split>().is_err());
    }

    #[test]
    fn language_streams_differ() {
        let a = language_stream(&LanguageCode::new("qaa").unwrap());
        let b = language_stream(&LanguageCode::new("qab").unwrap());
        assert_ne!(a, b);
    }
}
