//! Speech detection and segmentation of 16 kHz mono audio.

mod segment;
mod vad;
mod wav;

pub use segment::{read_segments, segment, write_segments, AudioSegment, SegmentConfig, SegmentError};
pub use vad::{analyze, detect_speech, EnergyTrack, SpeechAnalysis, VadConfig};
pub use wav::{read_wav, read_wav_from, write_wav, write_wav_to, AudioError, SAMPLE_RATE};

/// Samples covering `[start_s, end_s)`, clamped to the signal.
pub fn slice_seconds(pcm: &[f32], start_s: f64, end_s: f64) -> &[f32] {
    let to_index = |t: f64| ((t * SAMPLE_RATE as f64).round().max(0.0) as usize).min(pcm.len());
    let (a, b) = (to_index(start_s), to_index(end_s));
    &pcm[a..b.max(a)]
}
