use std::path::{Path, PathBuf};
use std::process::Command;

use super::{RetrievalError, VideoMeta};

/// Downloads audio by running an external command through `sh -c`.
/// `{video_id}` and `{output}` in the template are replaced by shell-quoted
/// values; the command must leave a WAV file at `{output}`.
#[derive(Debug, Clone)]
pub struct AudioFetcher {
    pub command_template: String,
}

#[derive(Debug)]
pub struct AcquireOutcome {
    pub video_id: String,
    pub result: Result<PathBuf, RetrievalError>,
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

impl AudioFetcher {
    pub fn fetch(&self, video_id: &str, output: &Path) -> Result<PathBuf, RetrievalError> {
        let fail = |message: String| RetrievalError::Acquire {
            video_id: video_id.to_owned(),
            message,
        };
        let command = self
            .command_template
            .replace("{video_id}", &shell_quote(video_id))
            .replace("{output}", &shell_quote(&output.display().to_string()));
        let result = Command::new("sh").arg("-c").arg(&command).output().map_err(|e| fail(e.to_string()))?;
        if !result.status.success() {
            let stderr = String::from_utf8_lossy(&result.stderr);
            return Err(fail(format!("command exited with {}: {}", result.status, stderr.trim())));
        }
        if !output.is_file() {
            return Err(fail(format!("command produced no file at {}", output.display())));
        }
        Ok(output.to_path_buf())
    }
}

/// Fetches `<wav_dir>/<video_id>.wav` for every video, skipping files that
/// already exist. Failures are reported per video.
pub fn acquire_audio(videos: &[VideoMeta], fetcher: &AudioFetcher, wav_dir: &Path) -> Vec<AcquireOutcome> {
    videos
        .iter()
        .map(|v| {
            let path = wav_dir.join(format!("{}.wav", v.video_id));
            let result = if path.is_file() {
                Ok(path)
            } else {
                fetcher.fetch(&v.video_id, &path)
            };
            AcquireOutcome {
                video_id: v.video_id.clone(),
                result,
            }
        })
        .collect()
}
