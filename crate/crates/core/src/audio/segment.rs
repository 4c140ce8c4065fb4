use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::vad::EnergyTrack;
use crate::textio::{data_lines, fmt_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub segment_id: String,
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl AudioSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub min_s: f64,
    pub max_s: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { min_s: 2.0, max_s: 20.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("segment bounds need 0 < 2*min <= max, got min={min_s} max={max_s}")]
    Bounds { min_s: f64, max_s: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn to_ms(t: f64) -> i64 {
    (t * 1000.0).round() as i64
}

fn to_s(ms: i64) -> f64 {
    ms as f64 / 1000.0
}

/// Turns speech intervals into segments of `[min_s, max_s]` seconds.
/// Intervals below `min_s` are dropped; longer ones are split recursively at
/// the quietest frame of their middle half (the midpoint without an energy
/// track). Boundaries are quantized to milliseconds. Segment ids are
/// `<video_id>_<index>` with a four-digit index.
pub fn segment(
    video_id: &str,
    intervals: &[(f64, f64)],
    energy: Option<&EnergyTrack>,
    config: &SegmentConfig,
) -> Result<Vec<AudioSegment>, SegmentError> {
    let (min, max) = (to_ms(config.min_s), to_ms(config.max_s));
    if min <= 0 || 2 * min > max {
        return Err(SegmentError::Bounds {
            min_s: config.min_s,
            max_s: config.max_s,
        });
    }
    let mut pieces = Vec::new();
    for &(start, end) in intervals {
        let (a, b) = (to_ms(start), to_ms(end));
        if b - a >= min {
            split(a, b, min, max, energy, &mut pieces);
        }
    }
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| AudioSegment {
            segment_id: format!("{video_id}_{i:04}"),
            video_id: video_id.to_owned(),
            start_s: to_s(a),
            end_s: to_s(b),
        })
        .collect())
}

fn split(a: i64, b: i64, min: i64, max: i64, energy: Option<&EnergyTrack>, out: &mut Vec<(i64, i64)>) {
    let len = b - a;
    if len <= max {
        out.push((a, b));
        return;
    }
    // Both halves must stay >= min; len > max >= 2*min keeps this window non-empty.
    let lo = (a + len / 4).max(a + min);
    let hi = (b - len / 4).min(b - min);
    let mut cut = a + len / 2;
    if let Some(track) = energy {
        let quietest = track
            .frame_db
            .iter()
            .enumerate()
            .map(|(i, &db)| (to_ms(track.frame_center_s(i)), db))
            .filter(|&(t, _)| t >= lo && t <= hi)
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        if let Some((t, _)) = quietest {
            cut = t;
        }
    }
    split(a, cut, min, max, energy, out);
    split(cut, b, min, max, energy, out);
}

/// Segment manifest: `segment_id<TAB>video_id<TAB>start_s<TAB>end_s`.
pub fn write_segments<W: Write>(segments: &[AudioSegment], mut out: W) -> io::Result<()> {
    for s in segments {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            s.segment_id,
            s.video_id,
            fmt_f64(s.start_s, 3),
            fmt_f64(s.end_s, 3)
        )?;
    }
    Ok(())
}

pub fn read_segments<R: BufRead>(input: R) -> Result<Vec<AudioSegment>, SegmentError> {
    let mut out = Vec::new();
    for item in data_lines(input) {
        let (line, text) = item?;
        let err = |message: String| SegmentError::Parse { line, message };
        let fields: Vec<&str> = text.split('\t').collect();
        let [segment_id, video_id, start, end] = fields.as_slice() else {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        };
        let parse = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad time {s:?}: {e}")));
        let (start_s, end_s) = (parse(start)?, parse(end)?);
        if !(start_s >= 0.0 && end_s > start_s) {
            return Err(err(format!("invalid span {start_s}..{end_s}")));
        }
        out.push(AudioSegment {
            segment_id: segment_id.to_string(),
            video_id: video_id.to_string(),
            start_s,
            end_s,
        });
    }
    Ok(out)
}
