//! Video retrieval: run search phrases against a provider, keep results whose
//! metadata is in the expected language and whose duration is acceptable.

mod acquire;
mod fixture;
mod live;

use std::collections::HashSet;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use acquire::{acquire_audio, AcquireOutcome, AudioFetcher};
pub use fixture::FixtureProvider;
pub use live::{LiveProvider, LiveProviderConfig, PROVIDER_KEY_ENV};

use crate::lang::LanguageCode;
use crate::lid::{LidError, LidModel};
use crate::phrases::SearchPhrase;
use crate::textio::{data_lines, escape_field, fmt_f64, unescape_field};

/// Longest accepted video, in seconds.
pub const DEFAULT_MAX_DURATION_S: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub video_id: String,
    pub title: String,
    pub description: String,
    pub duration_s: f64,
    pub channel_id: String,
    /// Text of the phrase that found this video.
    pub query_phrase: String,
    /// Language the video is expected to be in.
    pub language: LanguageCode,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("provider failed for phrase {phrase:?} after {attempts} attempt(s): {message}")]
    Provider {
        phrase: String,
        attempts: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("audio acquisition failed for {video_id}: {message}")]
    Acquire { video_id: String, message: String },
    #[error(transparent)]
    Lid(#[from] LidError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A video search backend.
pub trait SearchProvider: Send + Sync {
    fn search(&self, phrase: &SearchPhrase, max_results: usize) -> Result<Vec<VideoMeta>, RetrievalError>;
}

/// Runs every phrase through `provider` with up to `parallelism` searches in
/// flight. Results come back in phrase order regardless of completion order.
pub fn search_all(
    provider: &dyn SearchProvider,
    phrases: &[SearchPhrase],
    max_results: usize,
    parallelism: usize,
) -> Result<Vec<VideoMeta>, RetrievalError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Vec<VideoMeta>, RetrievalError>>>> =
        Mutex::new((0..phrases.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..parallelism.clamp(1, phrases.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= phrases.len() {
                    break;
                }
                let result = provider.search(&phrases[i], max_results);
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    let mut out = Vec::new();
    for slot in slots.into_inner().expect("result slots poisoned") {
        out.extend(slot.expect("every phrase searched")?);
    }
    Ok(out)
}

/// Keeps videos whose title and description are identified as `language`
/// and whose duration is at most `max_duration_s`. The first occurrence of
/// each video id wins; order is preserved.
pub fn filter_metadata(
    videos: &[VideoMeta],
    lid: &LidModel,
    language: &LanguageCode,
    max_duration_s: f64,
) -> Result<Vec<VideoMeta>, RetrievalError> {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for video in videos {
        if video.duration_s > max_duration_s || seen.contains(&video.video_id) {
            continue;
        }
        let text = format!("{} {}", video.title, video.description);
        if lid.matches(&text, language)? {
            seen.insert(video.video_id.clone());
            kept.push(video.clone());
        }
    }
    Ok(kept)
}

/// Accepted-video manifest: `video_id<TAB>duration_s<TAB>title<TAB>description<TAB>channel_id<TAB>language`.
pub fn write_accepted<W: Write>(videos: &[VideoMeta], mut out: W) -> io::Result<()> {
    for v in videos {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            v.video_id,
            fmt_f64(v.duration_s, 3),
            escape_field(&v.title),
            escape_field(&v.description),
            v.channel_id,
            v.language
        )?;
    }
    Ok(())
}

pub fn read_accepted<R: BufRead>(input: R, path: &str) -> Result<Vec<VideoMeta>, RetrievalError> {
    let mut videos = Vec::new();
    for item in data_lines(input) {
        let (line, text) = item?;
        let err = |message: String| RetrievalError::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let fields: Vec<&str> = text.split('\t').collect();
        let [video_id, duration, title, description, channel_id, language] = fields.as_slice() else {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        };
        videos.push(VideoMeta {
            video_id: video_id.to_string(),
            duration_s: parse_duration(duration).map_err(err)?,
            title: unescape_field(title).into_owned(),
            description: unescape_field(description).into_owned(),
            channel_id: channel_id.to_string(),
            query_phrase: String::new(),
            language: LanguageCode::new(language).map_err(|e| err(e.to_string()))?,
        });
    }
    Ok(videos)
}

fn parse_duration(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(d) if d.is_finite() && d > 0.0 => Ok(d),
        _ => Err(format!("duration must be a positive number, got {s:?}")),
    }
}
