//! Synthetic audio with known structure: speech-like noise bursts whose
//! spectral envelope depends on a seeded voice profile, steady tones and
//! silence.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::SAMPLE_RATE;

/// Spectral envelope of a synthetic speaker group: a set of resonances plus
/// a syllable-rate amplitude modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    /// (center Hz, bandwidth Hz, relative gain)
    pub resonances: Vec<(f64, f64, f64)>,
    pub syllable_hz: f64,
}

impl VoiceProfile {
    /// A profile whose resonances sit in a band specific to `index`, so that
    /// profiles of different indices are acoustically distinguishable.
    pub fn for_language<R: Rng>(index: usize, rng: &mut R) -> Self {
        let base = 300.0 + 450.0 * index as f64;
        let resonances = (0..3)
            .map(|k| {
                let center = base * (1.0 + 1.6 * k as f64) + rng.random_range(-40.0..40.0);
                (center.min(7200.0), 120.0 + 60.0 * k as f64, 1.0 / (k as f64 + 1.0))
            })
            .collect();
        Self {
            resonances,
            syllable_hz: rng.random_range(3.5..5.5),
        }
    }
}

pub fn silence(duration_s: f64) -> Vec<f32> {
    vec![0.0; samples(duration_s)]
}

pub fn tone(freq_hz: f64, duration_s: f64, amplitude: f64) -> Vec<f32> {
    let w = 2.0 * std::f64::consts::PI * freq_hz / SAMPLE_RATE as f64;
    (0..samples(duration_s)).map(|i| (amplitude * (w * i as f64).sin()) as f32).collect()
}

fn samples(duration_s: f64) -> usize {
    (duration_s * SAMPLE_RATE as f64).round() as usize
}

/// Filtered noise through the profile's resonances, amplitude modulated at
/// the syllable rate and scaled to the given RMS.
pub fn speech_like<R: Rng>(rng: &mut R, profile: &VoiceProfile, duration_s: f64, rms: f64) -> Vec<f32> {
    let n = samples(duration_s);
    let fs = SAMPLE_RATE as f64;
    let excitation: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mut mix = vec![0.0f64; n];
    for &(center, bandwidth, gain) in &profile.resonances {
        let r = (-std::f64::consts::PI * bandwidth / fs).exp();
        let c = 2.0 * r * (2.0 * std::f64::consts::PI * center / fs).cos();
        let (mut y1, mut y2) = (0.0, 0.0);
        for (m, &x) in mix.iter_mut().zip(&excitation) {
            let y = (1.0 - r) * x + c * y1 - r * r * y2;
            y2 = y1;
            y1 = y;
            *m += gain * y;
        }
    }
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let w = std::f64::consts::TAU * profile.syllable_hz / fs;
    for (i, m) in mix.iter_mut().enumerate() {
        *m *= 0.65 + 0.35 * (w * i as f64 + phase).sin();
    }
    let current = (mix.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    let scale = if current > 0.0 { rms / current } else { 0.0 };
    mix.into_iter().map(|v| (v * scale).clamp(-1.0, 1.0) as f32).collect()
}

/// Adds white noise of the given RMS in place.
pub fn add_noise<R: Rng>(rng: &mut R, pcm: &mut [f32], rms: f64) {
    for x in pcm {
        let v: f64 = StandardNormal.sample(rng);
        *x = (*x as f64 + rms * v).clamp(-1.0, 1.0) as f32;
    }
}

/// Overwrites `pcm` from `start_s` with `burst`, truncating at the end.
pub fn place(pcm: &mut [f32], start_s: f64, burst: &[f32]) {
    let start = samples(start_s).min(pcm.len());
    let end = (start + burst.len()).min(pcm.len());
    pcm[start..end].copy_from_slice(&burst[..end - start]);
}
