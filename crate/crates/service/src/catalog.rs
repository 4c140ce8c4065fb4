use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};

use voxcrawl_core::audio::{read_segments, read_wav, slice_seconds, write_wav_to};
use voxcrawl_core::retrieval::read_accepted;
use voxcrawl_core::LanguageCode;

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub segment_id: String,
    pub video_id: String,
    pub language: LanguageCode,
    pub start_s: f64,
    pub end_s: f64,
}

/// The clips available for validation and where their audio lives.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    clips: BTreeMap<String, Clip>,
    by_language: BTreeMap<LanguageCode, Vec<String>>,
    wav_dir: PathBuf,
}

impl Catalog {
    pub fn new(clips: Vec<Clip>, wav_dir: PathBuf) -> Self {
        let mut by_language: BTreeMap<LanguageCode, Vec<String>> = BTreeMap::new();
        let mut map = BTreeMap::new();
        for clip in clips {
            by_language.entry(clip.language.clone()).or_default().push(clip.segment_id.clone());
            map.insert(clip.segment_id.clone(), clip);
        }
        for ids in by_language.values_mut() {
            ids.sort();
            ids.dedup();
        }
        Self {
            clips: map,
            by_language,
            wav_dir,
        }
    }

    /// Builds the catalog from a segment manifest and the accepted-video
    /// manifest that gives each segment its language.
    pub fn from_manifests(segments: &Path, videos: &Path, wav_dir: &Path) -> Result<Self, ServiceError> {
        let invalid = |path: &Path, e: &dyn std::fmt::Display| ServiceError::Format {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        };
        let videos_list = read_accepted(BufReader::new(File::open(videos)?), &videos.display().to_string())
            .map_err(|e| invalid(videos, &e))?;
        let languages: BTreeMap<String, LanguageCode> =
            videos_list.into_iter().map(|v| (v.video_id, v.language)).collect();
        let segs = read_segments(BufReader::new(File::open(segments)?)).map_err(|e| invalid(segments, &e))?;
        let mut clips = Vec::with_capacity(segs.len());
        for s in segs {
            let language = languages
                .get(&s.video_id)
                .ok_or_else(|| invalid(segments, &format!("segment {} has unknown video {}", s.segment_id, s.video_id)))?;
            clips.push(Clip {
                language: language.clone(),
                segment_id: s.segment_id,
                video_id: s.video_id,
                start_s: s.start_s,
                end_s: s.end_s,
            });
        }
        Ok(Self::new(clips, wav_dir.to_path_buf()))
    }

    pub fn languages(&self) -> impl Iterator<Item = (&LanguageCode, &[String])> {
        self.by_language.iter().map(|(l, ids)| (l, ids.as_slice()))
    }

    pub fn clips_in(&self, language: &LanguageCode) -> Option<&[String]> {
        self.by_language.get(language).map(Vec::as_slice)
    }

    pub fn get(&self, segment_id: &str) -> Option<&Clip> {
        self.clips.get(segment_id)
    }

    /// The clip as a standalone WAV file.
    pub fn audio(&self, segment_id: &str) -> Result<Vec<u8>, ServiceError> {
        let clip = self.get(segment_id).ok_or_else(|| ServiceError::NotFound(format!("clip {segment_id}")))?;
        let pcm = read_wav(&self.wav_dir.join(format!("{}.wav", clip.video_id)))?;
        let mut out = Cursor::new(Vec::new());
        write_wav_to(&mut out, slice_seconds(&pcm, clip.start_s, clip.end_s))
            .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?;
        Ok(out.into_inner())
    }
}
