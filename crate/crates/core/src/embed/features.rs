use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::audio::SAMPLE_RATE;

/// Floor added before taking logs of band energies.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub n_bands: usize,
    pub frame_len: usize,
    pub hop_len: usize,
    pub fft_size: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_bands: 40,
            frame_len: 400,
            hop_len: 160,
            fft_size: 512,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters spaced evenly on the mel scale from 0 to Nyquist,
/// as rows of weights over the `fft_size / 2 + 1` power bins.
fn mel_filterbank(n_bands: usize, fft_size: usize) -> Vec<Vec<f64>> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_bands + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / fft_size as f64;
    (0..n_bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..=fft_size / 2)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-band mean and standard deviation of log mel energies over the
/// segment's frames: `[mean_1..mean_B, std_1..std_B]`.
pub fn embed_segment(pcm: &[f32], config: &MelConfig) -> Result<Vec<f64>, EmbedError> {
    if pcm.len() < config.frame_len {
        return Err(EmbedError::TooShort {
            samples: pcm.len(),
            frame: config.frame_len,
        });
    }
    let fft_size = config.fft_size.max(config.frame_len).next_power_of_two();
    let filters = mel_filterbank(config.n_bands, fft_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let window: Vec<f64> = (0..config.frame_len)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (config.frame_len - 1) as f64).cos())
        .collect();
    let n_frames = 1 + (pcm.len() - config.frame_len) / config.hop_len;
    let mut logs = vec![Vec::with_capacity(n_frames); config.n_bands];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut power = vec![0.0; fft_size / 2 + 1];
    for f in 0..n_frames {
        let frame = &pcm[f * config.hop_len..f * config.hop_len + config.frame_len];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for ((c, &x), w) in buf.iter_mut().zip(frame).zip(&window) {
            c.re = x as f64 * w;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr() / fft_size as f64;
        }
        for (b, filter) in filters.iter().enumerate() {
            let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            logs[b].push((e + LOG_FLOOR).ln());
        }
    }
    let n = n_frames as f64;
    // shifted by the first frame so constant bands give exactly zero spread
    let shifts: Vec<f64> = logs.iter().map(|v| v.iter().map(|x| x - v[0]).sum::<f64>() / n).collect();
    let means = logs.iter().zip(&shifts).map(|(v, s)| v[0] + s);
    let stds = logs
        .iter()
        .zip(&shifts)
        .map(|(v, s)| (v.iter().map(|x| (x - v[0] - s).powi(2)).sum::<f64>() / n).sqrt());
    Ok(means.chain(stds).collect())
}
