use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::SAMPLE_RATE;

/// Energy detector settings. Frames are speech when their log energy clears
/// both an adaptive floor and an absolute minimum, and their spectrum is
/// flat enough not to be a steady tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadConfig {
    pub frame_ms: u32,
    pub hop_ms: u32,
    /// Percentile of frame energies taken as the noise floor.
    pub floor_percentile: f64,
    /// Margin above the noise floor, in dB.
    pub floor_offset_db: f64,
    /// Frames quieter than this, in dBFS, are never speech.
    pub min_energy_db: f64,
    /// Spectral flatness below which a frame is treated as tonal.
    pub min_flatness: f64,
    /// Non-speech gaps up to this length between speech runs are filled.
    pub hangover_ms: u32,
    /// Speech runs shorter than this are discarded after gap filling.
    pub min_run_ms: u32,
    pub fft_size: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25,
            hop_ms: 10,
            floor_percentile: 20.0,
            floor_offset_db: 9.0,
            min_energy_db: -55.0,
            min_flatness: 0.002,
            hangover_ms: 300,
            min_run_ms: 100,
            fft_size: 512,
        }
    }
}

impl VadConfig {
    fn frame_len(&self) -> usize {
        (SAMPLE_RATE * self.frame_ms / 1000) as usize
    }

    fn hop_len(&self) -> usize {
        (SAMPLE_RATE * self.hop_ms / 1000) as usize
    }
}

/// Per-frame log energies, in dBFS, of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrack {
    pub frame_db: Vec<f64>,
    pub frame_s: f64,
    pub hop_s: f64,
}

impl EnergyTrack {
    pub fn frame_center_s(&self, i: usize) -> f64 {
        i as f64 * self.hop_s + self.frame_s / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechAnalysis {
    pub intervals: Vec<(f64, f64)>,
    pub energy: EnergyTrack,
}

fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0 * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Frames the signal, classifies each frame and returns the speech intervals
/// together with the energy track.
pub fn analyze(pcm: &[f32], config: &VadConfig) -> SpeechAnalysis {
    let (frame_len, hop) = (config.frame_len(), config.hop_len());
    let energy = |frame_db| EnergyTrack {
        frame_db,
        frame_s: config.frame_ms as f64 / 1000.0,
        hop_s: config.hop_ms as f64 / 1000.0,
    };
    if pcm.len() < frame_len || frame_len == 0 || hop == 0 {
        return SpeechAnalysis {
            intervals: Vec::new(),
            energy: energy(Vec::new()),
        };
    }
    let n_frames = 1 + (pcm.len() - frame_len) / hop;
    let frames = || (0..n_frames).map(|i| &pcm[i * hop..i * hop + frame_len]);

    let frame_db: Vec<f64> = frames()
        .map(|f| {
            let power = f.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / f.len() as f64;
            10.0 * (power + 1e-10).log10()
        })
        .collect();
    let threshold = (percentile(&frame_db, config.floor_percentile) + config.floor_offset_db).max(config.min_energy_db);

    let fft_size = config.fft_size.max(frame_len).next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let window: Vec<f64> = (0..frame_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (frame_len - 1) as f64).cos())
        .collect();
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];

    let mut speech: Vec<bool> = frames()
        .zip(&frame_db)
        .map(|(frame, &db)| {
            if db <= threshold {
                return false;
            }
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for ((c, &x), w) in buf.iter_mut().zip(frame).zip(&window) {
                c.re = x as f64 * w;
            }
            fft.process(&mut buf);
            spectral_flatness(&buf[1..fft_size / 2]) >= config.min_flatness
        })
        .collect();

    let frames_of = |ms: u32| (ms / config.hop_ms.max(1)) as usize;
    fill_gaps(&mut speech, frames_of(config.hangover_ms));
    let intervals = runs(&speech)
        .into_iter()
        .filter(|&(a, b)| b - a >= frames_of(config.min_run_ms).max(1))
        .map(|(a, b)| {
            let start = (a * hop) as f64 / SAMPLE_RATE as f64;
            let end = ((b - 1) * hop + frame_len) as f64 / SAMPLE_RATE as f64;
            (start, end)
        })
        .collect();
    SpeechAnalysis {
        intervals,
        energy: energy(frame_db),
    }
}

pub fn detect_speech(pcm: &[f32], config: &VadConfig) -> Vec<(f64, f64)> {
    analyze(pcm, config).intervals
}

/// Geometric over arithmetic mean of the power spectrum.
fn spectral_flatness(bins: &[Complex<f64>]) -> f64 {
    let eps = 1e-20;
    let n = bins.len() as f64;
    let (log_sum, sum) = bins.iter().fold((0.0, 0.0), |(l, s), c| {
        let p = c.norm_sqr() + eps;
        (l + p.ln(), s + p)
    });
    (log_sum / n).exp() / (sum / n)
}

fn fill_gaps(speech: &mut [bool], max_gap: usize) {
    let Some(mut last) = speech.iter().position(|&s| s) else {
        return;
    };
    for i in last + 1..speech.len() {
        if speech[i] {
            if i - last - 1 <= max_gap {
                speech[last + 1..i].iter_mut().for_each(|s| *s = true);
            }
            last = i;
        }
    }
}

/// Half-open index ranges of consecutive `true` values.
fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}
