//! End-to-end orchestration of the stages over a work directory.
//!
//! Stages run in a fixed order and communicate only through files in the
//! work directory, so any contiguous range can be rerun. Every output is
//! written atomically and starts with a provenance comment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::assembly::{
    build_eval, build_train, check_manifest, make_manifest, stats, write_manifest, write_stats, EvalSelection,
    SegmentRecord,
};
use crate::audio::{analyze, read_segments, read_wav, segment, slice_seconds, write_segments, write_wav, AudioSegment};
use crate::config::{Config, EmbedSource, ProviderSpec};
use crate::embed::{embed_segment, load_embeddings, write_embeddings, Embeddings};
use crate::evalkit::{read_labels, CrowdLabel, Verdict};
use crate::ingest::{filter_articles, language_eligible, parse_dump, ArticleRecord, LanguageCorpus};
use crate::lang::LanguageCode;
use crate::lid::{train_lid, LidModel};
use crate::phrases::{extract_candidates, filter_phrases, read_phrases, read_stopwords, score_tfidf, write_phrases};
use crate::retrieval::{
    acquire_audio, filter_metadata, read_accepted, search_all, write_accepted, AudioFetcher, FixtureProvider,
    LiveProvider, RetrievalError, SearchProvider, VideoMeta,
};
use crate::robust::{filter, fit_rog, read_model, select_threshold, write_model, RogConfig};
use crate::textio::{data_lines, fmt_f64, write_atomic, Provenance};

pub const INGEST_REPORT: &str = "ingest.tsv";
pub const CORPUS_DIR: &str = "corpus";
pub const LID_MODEL: &str = "lid.model";
pub const PHRASES: &str = "phrases.tsv";
pub const VIDEOS: &str = "videos.tsv";
pub const ACQUIRE_REPORT: &str = "acquire.tsv";
pub const AUDIO_REPORT: &str = "audio.tsv";
pub const SEGMENTS: &str = "segments.tsv";
pub const CLIPS_DIR: &str = "clips";
pub const EMBEDDINGS: &str = "embeddings.tsv";
pub const ROG_MODEL: &str = "rog.model";
pub const FILTER_REPORT: &str = "filter.tsv";
pub const FILTER_SUMMARY: &str = "filter_summary.tsv";
pub const MANIFEST: &str = "manifest.tsv";
pub const STATS: &str = "stats.tsv";
pub const LEAKAGE: &str = "leakage.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Phrases,
    Retrieve,
    Segment,
    Embed,
    Filter,
    Assemble,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Phrases,
        Stage::Retrieve,
        Stage::Segment,
        Stage::Embed,
        Stage::Filter,
        Stage::Assemble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Phrases => "phrases",
            Stage::Retrieve => "retrieve",
            Stage::Segment => "segment",
            Stage::Embed => "embed",
            Stage::Filter => "filter",
            Stage::Assemble => "assemble",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// What went wrong, which also decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Provider,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Provider => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputDigest {
    pub path: PathBuf,
    /// `None` when the file does not exist.
    pub sha256: Option<String>,
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
    pub inputs: Vec<InputDigest>,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.message)?;
        for input in &self.inputs {
            match &input.sha256 {
                Some(d) => write!(f, "\n  input {} sha256={d}", input.path.display())?,
                None => write!(f, "\n  input {} (missing)", input.path.display())?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for PipelineError {}

/// Stage failure before the input digests are attached.
#[derive(Debug)]
struct Failure {
    kind: ErrorKind,
    message: String,
}

impl Failure {
    fn data(message: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::data(e)
    }
}

type StageResult<T> = Result<T, Failure>;

/// Short summary of what a stage produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub summary: String,
    pub outputs: Vec<PathBuf>,
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn digest_inputs(paths: &[PathBuf]) -> Vec<InputDigest> {
    paths
        .iter()
        .map(|p| InputDigest {
            path: p.clone(),
            sha256: if p.is_file() { file_digest(p).ok() } else { None },
        })
        .collect()
}

/// Runs a contiguous stage range over one configuration.
pub struct Pipeline {
    config: Config,
    work: PathBuf,
    provenance: Provenance,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: Config) -> Result<Self, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError {
                stage: Stage::Ingest,
                kind: ErrorKind::Usage,
                message: format!("cannot start worker pool: {e}"),
                inputs: Vec::new(),
            })?;
        Ok(Self {
            work: config.work_dir(),
            provenance: config.provenance(),
            config,
            pool,
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn work_path(&self, name: &str) -> PathBuf {
        self.work.join(name)
    }

    /// Runs `from..=to` in order, stopping at the first failure. Outputs of
    /// stages that completed are left in place.
    pub fn run(&self, from: Stage, to: Stage) -> Result<Vec<StageReport>, PipelineError> {
        if from > to {
            return Err(PipelineError {
                stage: from,
                kind: ErrorKind::Usage,
                message: format!("--from {from} comes after --to {to}"),
                inputs: Vec::new(),
            });
        }
        let mut reports = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|s| (from..=to).contains(s)) {
            tracing::info!(%stage, "starting");
            reports.push(self.run_stage(stage)?);
        }
        Ok(reports)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageReport, PipelineError> {
        let inputs = self.stage_inputs(stage);
        let fail = |f: Failure| PipelineError {
            stage,
            kind: f.kind,
            message: f.message,
            inputs: digest_inputs(&inputs),
        };
        if let Some(missing) = inputs.iter().find(|p| !p.exists()) {
            return Err(fail(Failure::data(format!("missing input file {}", missing.display()))));
        }
        self.pool
            .install(|| match stage {
                Stage::Ingest => self.ingest(),
                Stage::Phrases => self.phrases(),
                Stage::Retrieve => self.retrieve(),
                Stage::Segment => self.segment(),
                Stage::Embed => self.embed(),
                Stage::Filter => self.filter(),
                Stage::Assemble => self.assemble(),
            })
            .map_err(fail)
    }

    /// Files a stage reads; all must exist before it starts.
    pub fn stage_inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let c = &self.config;
        let mut inputs = match stage {
            Stage::Ingest => vec![c.resolve(&c.paths.dumps)],
            Stage::Phrases => {
                let mut v = vec![self.work_path(INGEST_REPORT)];
                if let Ok(langs) = self.eligible_languages() {
                    v.extend(langs.iter().map(|l| self.corpus_path(l)));
                }
                v
            }
            Stage::Retrieve => {
                let mut v = vec![self.work_path(PHRASES), self.work_path(LID_MODEL)];
                if let Ok(ProviderSpec::Fixture(p)) = c.provider() {
                    v.push(p);
                }
                v
            }
            Stage::Segment => vec![self.work_path(VIDEOS), c.resolve(&c.paths.wav_dir)],
            Stage::Embed => match c.embed_source() {
                Ok(EmbedSource::File(p)) => vec![self.work_path(SEGMENTS), p],
                _ => vec![self.work_path(SEGMENTS), self.work_path(VIDEOS), c.resolve(&c.paths.wav_dir)],
            },
            Stage::Filter => vec![self.work_path(EMBEDDINGS), self.work_path(SEGMENTS), self.work_path(VIDEOS)],
            Stage::Assemble => vec![self.work_path(SEGMENTS), self.work_path(VIDEOS), self.work_path(FILTER_REPORT)],
        };
        if matches!(stage, Stage::Filter | Stage::Assemble) {
            if let Some(labels) = &c.paths.labels {
                inputs.push(c.resolve(labels));
            }
        }
        inputs
    }

    fn write(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<PathBuf> {
        let path = self.work_path(name);
        write_atomic(&path, |out| {
            writeln!(out, "{}", self.provenance.header_line())?;
            fill(out)
        })?;
        Ok(path)
    }

    fn corpus_path(&self, language: &LanguageCode) -> PathBuf {
        self.work.join(CORPUS_DIR).join(format!("{language}.tsv"))
    }

    fn wav_path(&self, video_id: &str) -> PathBuf {
        self.config.resolve(&self.config.paths.wav_dir).join(format!("{video_id}.wav"))
    }

    fn open(&self, path: &Path) -> StageResult<BufReader<File>> {
        File::open(path)
            .map(BufReader::new)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }

    fn eligible_languages(&self) -> StageResult<Vec<LanguageCode>> {
        let path = self.work_path(INGEST_REPORT);
        let mut out = Vec::new();
        for item in data_lines(self.open(&path)?) {
            let (line, text) = item?;
            let bad = || Failure::data(format!("{}:{line}: malformed ingest report", path.display()));
            let fields: Vec<&str> = text.split('\t').collect();
            let [lang, _, _, eligible] = fields.as_slice() else {
                return Err(bad());
            };
            if *eligible == "yes" {
                out.push(LanguageCode::new(lang).map_err(|_| bad())?);
            }
        }
        Ok(out)
    }

    fn ingest(&self) -> StageResult<StageReport> {
        let c = &self.config;
        let dumps = c.resolve(&c.paths.dumps);
        let mut files: Vec<(LanguageCode, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dumps)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "xml") {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let lang = LanguageCode::new(&stem)
                    .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
                files.push((lang, path));
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(Failure::data(format!("no <language>.xml dumps in {}", dumps.display())));
        }
        let corpora = files
            .par_iter()
            .map(|(lang, path)| -> StageResult<(usize, LanguageCorpus)> {
                let mut pages = 0;
                let mut articles = Vec::new();
                for page in parse_dump(self.open(path)?, lang.clone()) {
                    let page = page.map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
                    pages += 1;
                    articles.extend(ArticleRecord::from_page(&page));
                }
                let corpus = filter_articles(lang, articles, c.ingest.min_chars).map_err(Failure::data)?;
                Ok((pages, corpus))
            })
            .collect::<StageResult<Vec<_>>>()?;
        let mut outputs = Vec::new();
        let mut eligible = 0;
        for (_, corpus) in &corpora {
            let name = format!("{CORPUS_DIR}/{}.tsv", corpus.language());
            outputs.push(self.write(&name, |out| corpus.write_tsv(out))?);
        }
        outputs.push(self.write(INGEST_REPORT, |out| {
            writeln!(out, "# language\tpages\tarticles\teligible")?;
            for (pages, corpus) in &corpora {
                let ok = language_eligible(corpus, c.ingest.min_articles);
                eligible += usize::from(ok);
                let flag = if ok { "yes" } else { "no" };
                writeln!(out, "{}\t{pages}\t{}\t{flag}", corpus.language(), corpus.article_count())?;
            }
            Ok(())
        })?);
        Ok(StageReport {
            stage: Stage::Ingest,
            summary: format!("{} languages read, {eligible} eligible", corpora.len()),
            outputs,
        })
    }

    fn phrases(&self) -> StageResult<StageReport> {
        let c = &self.config;
        let languages = self.eligible_languages()?;
        let mut corpora = Vec::new();
        for lang in &languages {
            let corpus = LanguageCorpus::read_tsv(lang.clone(), self.open(&self.corpus_path(lang))?)
                .map_err(|e| Failure::data(format!("{}: {e}", self.corpus_path(lang).display())))?;
            corpora.push(corpus);
        }
        let training: BTreeMap<LanguageCode, Vec<&str>> = corpora
            .iter()
            .map(|corpus| (corpus.language().clone(), corpus.articles().iter().map(|a| a.body()).collect()))
            .collect();
        let lid = train_lid(&training, &c.lid).map_err(Failure::data)?;
        let mut phrases = Vec::new();
        for corpus in &corpora {
            let lang = corpus.language();
            let stopwords = match &c.paths.stopwords {
                Some(dir) => {
                    let path = c.resolve(dir).join(format!("{lang}.txt"));
                    if path.is_file() {
                        read_stopwords(self.open(&path)?)?
                    } else {
                        Default::default()
                    }
                }
                None => Default::default(),
            };
            let candidates = extract_candidates(corpus).map_err(Failure::data)?;
            let scored = score_tfidf(&candidates);
            let mined = filter_phrases(&scored, &lid, lang, &stopwords, c.phrases.top_k).map_err(Failure::data)?;
            tracing::info!(%lang, phrases = mined.len(), "mined");
            phrases.extend(mined);
        }
        let outputs = vec![
            self.write(LID_MODEL, |out| lid.write_to(out))?,
            self.write(PHRASES, |out| write_phrases(&phrases, out))?,
        ];
        Ok(StageReport {
            stage: Stage::Phrases,
            summary: format!("{} phrases for {} languages", phrases.len(), languages.len()),
            outputs,
        })
    }

    fn read_lid(&self) -> StageResult<LidModel> {
        let path = self.work_path(LID_MODEL);
        LidModel::read_from(self.open(&path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }

    fn read_videos(&self) -> StageResult<Vec<VideoMeta>> {
        let path = self.work_path(VIDEOS);
        read_accepted(self.open(&path)?, &path.display().to_string()).map_err(Failure::data)
    }

    fn retrieve(&self) -> StageResult<StageReport> {
        let c = &self.config;
        let phrases = read_phrases(self.open(&self.work_path(PHRASES))?).map_err(Failure::data)?;
        let lid = self.read_lid()?;
        let provider_failure = |e: RetrievalError| Failure {
            kind: ErrorKind::Provider,
            message: e.to_string(),
        };
        let provider: Box<dyn SearchProvider> = match c.provider().map_err(Failure::data)? {
            ProviderSpec::Fixture(path) => Box::new(FixtureProvider::open(&path).map_err(Failure::data)?),
            ProviderSpec::Live => Box::new(
                LiveProvider::new(c.retrieval.live.provider_config()).map_err(|e| Failure {
                    kind: ErrorKind::Usage,
                    message: e.to_string(),
                })?,
            ),
        };
        let found = search_all(provider.as_ref(), &phrases, c.retrieval.max_results, c.retrieval.parallelism)
            .map_err(provider_failure)?;
        let mut by_language: BTreeMap<&LanguageCode, Vec<VideoMeta>> = BTreeMap::new();
        for v in &found {
            by_language.entry(&v.language).or_default().push(v.clone());
        }
        let mut accepted = Vec::new();
        let mut seen = BTreeSet::new();
        for (lang, videos) in &by_language {
            for v in filter_metadata(videos, &lid, lang, c.retrieval.max_duration_s).map_err(Failure::data)? {
                if seen.insert(v.video_id.clone()) {
                    accepted.push(v);
                } else {
                    tracing::warn!(video = %v.video_id, "accepted for more than one language, keeping the first");
                }
            }
        }
        let mut outputs = vec![self.write(VIDEOS, |out| write_accepted(&accepted, out))?];
        let mut failed = 0;
        if let Some(command) = &c.retrieval.fetch_command {
            let fetcher = AudioFetcher {
                command_template: command.clone(),
            };
            let outcomes = acquire_audio(&accepted, &fetcher, &c.resolve(&c.paths.wav_dir));
            outputs.push(self.write(ACQUIRE_REPORT, |out| {
                for o in &outcomes {
                    match &o.result {
                        Ok(_) => writeln!(out, "{}\tok\t", o.video_id)?,
                        Err(e) => {
                            failed += 1;
                            let msg = e.to_string().replace(['\t', '\n'], " ");
                            writeln!(out, "{}\tfailed\t{msg}", o.video_id)?
                        }
                    }
                }
                Ok(())
            })?);
        }
        Ok(StageReport {
            stage: Stage::Retrieve,
            summary: format!(
                "{} results, {} videos accepted, {failed} downloads failed",
                found.len(),
                accepted.len()
            ),
            outputs,
        })
    }

    fn segment(&self) -> StageResult<StageReport> {
        let c = &self.config;
        let videos = self.read_videos()?;
        let bounds = c.segment.bounds();
        let per_video = videos
            .par_iter()
            .map(|v| -> StageResult<Option<(f64, Vec<AudioSegment>)>> {
                let path = self.wav_path(&v.video_id);
                if !path.is_file() {
                    tracing::warn!(video = %v.video_id, "no audio, skipping");
                    return Ok(None);
                }
                let pcm = read_wav(&path).map_err(Failure::data)?;
                let analysis = analyze(&pcm, &c.vad);
                let segments = segment(&v.video_id, &analysis.intervals, Some(&analysis.energy), &bounds)
                    .map_err(Failure::data)?;
                if c.segment.extract {
                    for s in &segments {
                        let clip = self.work.join(CLIPS_DIR).join(format!("{}.wav", s.segment_id));
                        write_wav(&clip, slice_seconds(&pcm, s.start_s, s.end_s)).map_err(Failure::data)?;
                    }
                }
                let speech: f64 = analysis.intervals.iter().map(|(a, b)| b - a).sum();
                Ok(Some((speech, segments)))
            })
            .collect::<StageResult<Vec<_>>>()?;
        let all: Vec<AudioSegment> = per_video.iter().flatten().flat_map(|(_, s)| s.iter().cloned()).collect();
        let missing = per_video.iter().filter(|r| r.is_none()).count();
        let outputs = vec![
            self.write(AUDIO_REPORT, |out| {
                writeln!(out, "# video_id\tstatus\tspeech_s\tsegments")?;
                for (v, r) in videos.iter().zip(&per_video) {
                    match r {
                        Some((speech, segs)) => {
                            writeln!(out, "{}\tok\t{}\t{}", v.video_id, fmt_f64(*speech, 3), segs.len())?
                        }
                        None => writeln!(out, "{}\tmissing\t0.000\t0", v.video_id)?,
                    }
                }
                Ok(())
            })?,
            self.write(SEGMENTS, |out| write_segments(&all, out))?,
        ];
        Ok(StageReport {
            stage: Stage::Segment,
            summary: format!(
                "{} segments from {} videos ({missing} without audio)",
                all.len(),
                videos.len() - missing
            ),
            outputs,
        })
    }

    fn read_segments(&self) -> StageResult<Vec<AudioSegment>> {
        let path = self.work_path(SEGMENTS);
        read_segments(self.open(&path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }

    fn embed(&self) -> StageResult<StageReport> {
        let c = &self.config;
        let segments = self.read_segments()?;
        let embeddings = match c.embed_source().map_err(Failure::data)? {
            EmbedSource::File(path) => {
                let e = load_embeddings(self.open(&path)?)
                    .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
                let wanted: BTreeSet<&str> = segments.iter().map(|s| s.segment_id.as_str()).collect();
                Embeddings {
                    dim: e.dim,
                    vectors: e.vectors.into_iter().filter(|(id, _)| wanted.contains(id.as_str())).collect(),
                }
            }
            EmbedSource::Builtin => {
                let mut by_video: BTreeMap<&str, Vec<&AudioSegment>> = BTreeMap::new();
                for s in &segments {
                    by_video.entry(&s.video_id).or_default().push(s);
                }
                let groups: Vec<_> = by_video.into_iter().collect();
                let vectors = groups
                    .par_iter()
                    .map(|(video, segs)| -> StageResult<Vec<(String, Vec<f64>)>> {
                        let pcm = read_wav(&self.wav_path(video)).map_err(Failure::data)?;
                        segs.iter()
                            .map(|s| {
                                let v = embed_segment(slice_seconds(&pcm, s.start_s, s.end_s), &c.embed.mel)
                                    .map_err(|e| Failure::data(format!("segment {}: {e}", s.segment_id)))?;
                                Ok((s.segment_id.clone(), v))
                            })
                            .collect()
                    })
                    .collect::<StageResult<Vec<_>>>()?;
                Embeddings {
                    dim: 2 * c.embed.mel.n_bands,
                    vectors: vectors.into_iter().flatten().collect(),
                }
            }
        };
        let outputs = vec![self.write(EMBEDDINGS, |out| write_embeddings(&embeddings, out))?];
        Ok(StageReport {
            stage: Stage::Embed,
            summary: format!("{} embeddings of dimension {}", embeddings.vectors.len(), embeddings.dim),
            outputs,
        })
    }

    fn read_labels(&self) -> StageResult<Vec<CrowdLabel>> {
        match &self.config.paths.labels {
            Some(p) => {
                let path = self.config.resolve(p);
                read_labels(self.open(&path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
            }
            None => Ok(Vec::new()),
        }
    }

    /// Segment language assignments, taken from the video that produced
    /// each segment.
    fn assigned_languages(&self, segments: &[AudioSegment]) -> StageResult<Vec<(String, LanguageCode)>> {
        let videos: HashMap<String, LanguageCode> =
            self.read_videos()?.into_iter().map(|v| (v.video_id, v.language)).collect();
        segments
            .iter()
            .map(|s| match videos.get(&s.video_id) {
                Some(l) => Ok((s.segment_id.clone(), l.clone())),
                None => Err(Failure::data(format!(
                    "segment {} refers to unknown video {}",
                    s.segment_id, s.video_id
                ))),
            })
            .collect()
    }

    fn filter(&self) -> StageResult<StageReport> {
        let c = &self.config;
        let path = self.work_path(EMBEDDINGS);
        let embeddings = load_embeddings(self.open(&path)?)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
            .vectors;
        let assigned = self.assigned_languages(&self.read_segments()?)?;
        let missing: Vec<&str> = assigned
            .iter()
            .filter(|(id, _)| !embeddings.contains_key(id))
            .map(|(id, _)| id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Failure::data(format!(
                "{} segment(s) have no embedding: {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        let xs: Vec<Vec<f64>> = assigned.iter().map(|(id, _)| embeddings[id].clone()).collect();
        let ys: Vec<LanguageCode> = assigned.iter().map(|(_, l)| l.clone()).collect();
        let rog_config = RogConfig {
            project: c.filter.project,
            lda_dim: c.filter.lda_dim,
            mcd: c.mcd(),
        };
        let mut model = fit_rog(&xs, &ys, &rog_config).map_err(Failure::data)?;
        let truth = crowd_truth(&self.read_labels()?);
        let unfiltered = filter(&assigned, &embeddings, &model, 0.0, None).map_err(Failure::data)?;
        let (scores, correct): (Vec<f64>, Vec<bool>) = assigned
            .iter()
            .filter_map(|(id, _)| truth.get(id).map(|&ok| (unfiltered.scores[id], ok)))
            .unzip();
        let tau = match select_threshold(&scores, &correct) {
            Ok(t) => t,
            Err(e) => c.filter.default_threshold.ok_or_else(|| {
                Failure::data(format!(
                    "cannot calibrate the threshold from crowd labels ({e}) and filter.default_threshold is unset"
                ))
            })?,
        };
        model.threshold = Some(tau);
        let report = filter(&assigned, &embeddings, &model, tau, Some(&truth)).map_err(Failure::data)?;
        let rate = |r: Option<f64>| r.map_or("none".to_owned(), |v| fmt_f64(v, 6));
        let outputs = vec![
            self.write(ROG_MODEL, |out| write_model(&model, out))?,
            self.write(FILTER_REPORT, |out| {
                writeln!(out, "# segment_id\tlanguage\tscore\tdecision")?;
                for (id, lang) in &assigned {
                    let decision = if report.kept.contains(id) { "keep" } else { "remove" };
                    writeln!(out, "{id}\t{lang}\t{}\t{decision}", fmt_f64(report.scores[id], 9))?;
                }
                Ok(())
            })?,
            self.write(FILTER_SUMMARY, |out| {
                writeln!(out, "threshold\t{}", fmt_f64(tau, 9))?;
                writeln!(out, "calibration_segments\t{}", scores.len())?;
                writeln!(out, "kept\t{}", report.kept.len())?;
                writeln!(out, "removed\t{}", report.removed.len())?;
                writeln!(out, "est_fpr\t{}", rate(report.est_fpr))?;
                writeln!(out, "est_fnr\t{}", rate(report.est_fnr))?;
                writeln!(out, "noise_before\t{}", rate(report.noise_before))?;
                writeln!(out, "noise_after\t{}", rate(report.noise_after))
            })?,
        ];
        Ok(StageReport {
            stage: Stage::Filter,
            summary: format!(
                "threshold {} from {} labeled segments, kept {} of {}",
                fmt_f64(tau, 4),
                scores.len(),
                report.kept.len(),
                assigned.len()
            ),
            outputs,
        })
    }

    fn kept_segments(&self) -> StageResult<BTreeSet<String>> {
        let path = self.work_path(FILTER_REPORT);
        let mut kept = BTreeSet::new();
        for item in data_lines(self.open(&path)?) {
            let (line, text) = item?;
            let fields: Vec<&str> = text.split('\t').collect();
            match fields.as_slice() {
                [id, _, _, "keep"] => {
                    kept.insert(id.to_string());
                }
                [_, _, _, "remove"] => {}
                _ => return Err(Failure::data(format!("{}:{line}: malformed filter report", path.display()))),
            }
        }
        Ok(kept)
    }

    fn assemble(&self) -> StageResult<StageReport> {
        let c = &self.config;
        let segments = self.read_segments()?;
        let videos: HashMap<String, VideoMeta> =
            self.read_videos()?.into_iter().map(|v| (v.video_id.clone(), v)).collect();
        let records = segments
            .iter()
            .map(|s| {
                let v = videos.get(&s.video_id).ok_or_else(|| {
                    Failure::data(format!("segment {} refers to unknown video {}", s.segment_id, s.video_id))
                })?;
                Ok(SegmentRecord {
                    segment_id: s.segment_id.clone(),
                    video_id: s.video_id.clone(),
                    channel_id: v.channel_id.clone(),
                    language: v.language.clone(),
                    duration_s: s.duration_s(),
                })
            })
            .collect::<StageResult<Vec<_>>>()?;
        let labels = self.read_labels()?;
        let selection = EvalSelection {
            per_language_cap: c.assembly.eval_per_language,
            min_confirmations: c.assembly.min_confirmations,
            seed: c.seed,
        };
        let eval = build_eval(&records, &labels, &selection);
        let kept = self.kept_segments()?;
        let candidates: Vec<SegmentRecord> = records.iter().filter(|r| kept.contains(&r.segment_id)).cloned().collect();
        let split = build_train(&candidates, &eval, c.assembly.channel_strict);
        let manifest = make_manifest(&split.train, &eval).map_err(Failure::data)?;
        check_manifest(&manifest).map_err(Failure::data)?;
        let totals = stats(manifest.iter().map(|e| &e.segment));
        let outputs = vec![
            self.write(MANIFEST, |out| write_manifest(&manifest, out))?,
            self.write(STATS, |out| write_stats(&totals, out))?,
            self.write(LEAKAGE, |out| {
                writeln!(out, "# kind\tid")?;
                for r in &split.removed {
                    writeln!(out, "removed_segment\t{}", r.segment_id)?;
                }
                for ch in &split.leaking_channels {
                    writeln!(out, "shared_channel\t{ch}")?;
                }
                Ok(())
            })?,
        ];
        Ok(StageReport {
            stage: Stage::Assemble,
            summary: format!(
                "{} train and {} eval segments, {} removed for overlap",
                split.train.len(),
                eval.len(),
                split.removed.len()
            ),
            outputs,
        })
    }
}

/// Whether a segment's language label is correct according to the crowd:
/// correct when target-language verdicts outnumber other definite verdicts,
/// incorrect when they are outnumbered. Ties and UNSURE-only segments are
/// left out.
pub fn crowd_truth(labels: &[CrowdLabel]) -> HashMap<String, bool> {
    let mut votes: HashMap<&str, (i64, i64)> = HashMap::new();
    for l in labels {
        let entry = votes.entry(&l.segment_id).or_default();
        match l.verdict {
            Verdict::TargetSpeech => entry.0 += 1,
            Verdict::OtherLanguage | Verdict::NonSpeech => entry.1 += 1,
            Verdict::Unsure => {}
        }
    }
    votes
        .into_iter()
        .filter(|(_, (yes, no))| yes != no)
        .map(|(id, (yes, no))| (id.to_owned(), yes > no))
        .collect()
}

/// Reads back a model written by the filter stage.
pub fn load_rog_model(path: &Path) -> Result<crate::robust::RogModel, crate::robust::RobustError> {
    read_model(BufReader::new(File::open(path)?))
}
