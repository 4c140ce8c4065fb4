use std::io::{Read, Seek, Write};
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error("audio too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },
}

fn spec() -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

/// Reads a mono 16 kHz 16-bit PCM WAV as samples in [-1, 1).
pub fn read_wav(path: &Path) -> Result<Vec<f32>, AudioError> {
    let reader = WavReader::open(path).map_err(|source| AudioError::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    decode(reader, path)
}

pub fn read_wav_from<R: Read>(input: R, origin: &Path) -> Result<Vec<f32>, AudioError> {
    let reader = WavReader::new(input).map_err(|source| AudioError::Wav {
        path: origin.to_path_buf(),
        source,
    })?;
    decode(reader, origin)
}

fn decode<R: Read>(reader: WavReader<R>, path: &Path) -> Result<Vec<f32>, AudioError> {
    let s = reader.spec();
    if s != spec() {
        return Err(AudioError::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected mono 16 kHz 16-bit PCM, got {} channel(s), {} Hz, {}-bit {:?}",
                s.channels, s.sample_rate, s.bits_per_sample, s.sample_format
            ),
        });
    }
    reader
        .into_samples::<i16>()
        .map(|r| {
            r.map(|v| v as f32 / 32768.0).map_err(|source| AudioError::Wav {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// Writes a WAV file, creating missing parent directories.
pub fn write_wav(path: &Path, pcm: &[f32]) -> Result<(), AudioError> {
    let io_err = |e| AudioError::Wav {
        path: path.to_path_buf(),
        source: hound::Error::IoError(e),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_wav_to(std::io::BufWriter::new(file), pcm).map_err(|source| AudioError::Wav {
        path: path.to_path_buf(),
        source,
    })
}

/// Encodes samples as 16-bit PCM, clipping to the representable range.
pub fn write_wav_to<W: Write + Seek>(out: W, pcm: &[f32]) -> Result<(), hound::Error> {
    let mut writer = WavWriter::new(out, spec())?;
    for &x in pcm {
        writer.write_sample((x * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()
}
