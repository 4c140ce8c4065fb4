//! The run configuration: one TOML file drives every stage.
//!
//! Relative paths are resolved against the directory holding the file. The
//! digest that stamps every output is taken over the canonical
//! re-serialization of the configuration as written (before path
//! resolution), so moving a fixture directory does not change it.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{SegmentConfig, VadConfig};
use crate::embed::MelConfig;
use crate::ingest::{DEFAULT_MIN_ARTICLES, DEFAULT_MIN_CHARS};
use crate::lid::LidConfig;
use crate::retrieval::{LiveProviderConfig, DEFAULT_MAX_DURATION_S};
use crate::robust::McdConfig;
use crate::textio::Provenance;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid override {0:?}, expected section.key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads for parallel stages; 0 uses every core.
    pub workers: usize,
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub lid: LidConfig,
    pub phrases: PhrasesConfig,
    pub retrieval: RetrievalConfig,
    pub vad: VadConfig,
    pub segment: SegmentStageConfig,
    pub embed: EmbedConfig,
    pub filter: FilterConfig,
    pub assembly: AssemblyConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Every stage output goes here.
    pub work_dir: PathBuf,
    /// Directory of `<language>.xml` page dumps.
    pub dumps: PathBuf,
    /// Directory of `<language>.txt` stop-word lists. Languages without a
    /// list are mined without stop-word removal.
    pub stopwords: Option<PathBuf>,
    /// Directory of `<video_id>.wav` files.
    pub wav_dir: PathBuf,
    /// Crowd label export used for filter calibration and eval selection.
    pub labels: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            work_dir: "work".into(),
            dumps: "dumps".into(),
            stopwords: None,
            wav_dir: "wav".into(),
            labels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub min_chars: usize,
    pub min_articles: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_chars: DEFAULT_MIN_CHARS,
            min_articles: DEFAULT_MIN_ARTICLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhrasesConfig {
    pub top_k: usize,
}

impl Default for PhrasesConfig {
    fn default() -> Self {
        Self { top_k: 50 }
    }
}

/// Where search results come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderSpec {
    Live,
    Fixture(PathBuf),
}

impl std::str::FromStr for ProviderSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        if s == "live" {
            Ok(Self::Live)
        } else if let Some(path) = s.strip_prefix("fixture:").filter(|p| !p.is_empty()) {
            Ok(Self::Fixture(path.into()))
        } else {
            Err(ConfigError::Invalid(format!(
                "provider must be `live` or `fixture:<path>`, got {s:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// `live` or `fixture:<path>`.
    pub provider: String,
    pub max_results: usize,
    pub max_duration_s: f64,
    pub parallelism: usize,
    /// Shell command that downloads audio; see `AudioFetcher`. Without it
    /// the WAV directory must already be populated.
    pub fetch_command: Option<String>,
    pub live: LiveSettings,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            provider: "fixture:search.tsv".into(),
            max_results: 50,
            max_duration_s: DEFAULT_MAX_DURATION_S,
            parallelism: 4,
            fetch_command: None,
            live: LiveSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveSettings {
    pub query_template: String,
    pub min_interval_ms: u64,
    pub max_retries: usize,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for LiveSettings {
    fn default() -> Self {
        let d = LiveProviderConfig::default();
        Self {
            query_template: d.query_template,
            min_interval_ms: d.min_interval.as_millis() as u64,
            max_retries: d.max_retries,
            initial_backoff_ms: d.initial_backoff.as_millis() as u64,
            max_backoff_ms: d.max_backoff.as_millis() as u64,
            timeout_ms: d.timeout.as_millis() as u64,
        }
    }
}

impl LiveSettings {
    /// The key is never stored in the file; it comes from the environment.
    pub fn provider_config(&self) -> LiveProviderConfig {
        LiveProviderConfig {
            query_template: self.query_template.clone(),
            key: None,
            min_interval: Duration::from_millis(self.min_interval_ms),
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            max_backoff: Duration::from_millis(self.max_backoff_ms),
            timeout: Duration::from_millis(self.timeout_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentStageConfig {
    pub min_s: f64,
    pub max_s: f64,
    /// Also write every segment as `clips/<segment_id>.wav`.
    pub extract: bool,
}

impl Default for SegmentStageConfig {
    fn default() -> Self {
        let d = SegmentConfig::default();
        Self {
            min_s: d.min_s,
            max_s: d.max_s,
            extract: false,
        }
    }
}

impl SegmentStageConfig {
    pub fn bounds(&self) -> SegmentConfig {
        SegmentConfig {
            min_s: self.min_s,
            max_s: self.max_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// `builtin` computes spectral statistics; `file:<path>` takes
    /// precomputed embeddings from an embedding file.
    pub source: String,
    pub mel: MelConfig,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            source: "builtin".into(),
            mel: MelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedSource {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub project: bool,
    pub lda_dim: usize,
    pub mcd_starts: usize,
    pub mcd_max_csteps: usize,
    /// Used when the crowd labels cannot calibrate a threshold.
    pub default_threshold: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let mcd = McdConfig::default();
        Self {
            project: true,
            lda_dim: crate::embed::MAX_LDA_DIM,
            mcd_starts: mcd.n_starts,
            mcd_max_csteps: mcd.max_csteps,
            default_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblyConfig {
    pub eval_per_language: usize,
    pub min_confirmations: usize,
    /// Also drop train segments from channels that appear in eval.
    pub channel_strict: bool,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            eval_per_language: 100,
            min_confirmations: 2,
            channel_strict: false,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            paths: PathsConfig::default(),
            ingest: IngestConfig::default(),
            lid: LidConfig::default(),
            phrases: PhrasesConfig::default(),
            retrieval: RetrievalConfig::default(),
            vad: VadConfig::default(),
            segment: SegmentStageConfig::default(),
            embed: EmbedConfig::default(),
            filter: FilterConfig::default(),
            assembly: AssemblyConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a bare
/// string so `--set retrieval.provider=live` works unquoted.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key parsed"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::Override(assignment.to_owned());
    let (key, value) = assignment.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut current = table;
    for section in sections {
        current = current
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(bad)?;
    }
    current.insert(last.to_string(), override_value(value.trim()));
    Ok(())
}

impl Config {
    /// Reads a config file and applies `section.key=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_toml(&text, base, overrides)
    }

    pub fn from_toml(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        self.provider()?;
        self.embed_source()?;
        if self.phrases.top_k == 0 {
            return invalid("phrases.top_k must be at least 1");
        }
        if self.retrieval.max_results == 0 {
            return invalid("retrieval.max_results must be at least 1");
        }
        if !(self.retrieval.max_duration_s > 0.0) {
            return invalid("retrieval.max_duration_s must be positive");
        }
        let b = &self.segment;
        if !(b.min_s > 0.0 && 2.0 * b.min_s <= b.max_s) {
            return invalid("segment bounds need 0 < 2*min_s <= max_s");
        }
        if self.filter.mcd_starts == 0 || self.filter.lda_dim == 0 {
            return invalid("filter.mcd_starts and filter.lda_dim must be at least 1");
        }
        if let Some(t) = self.filter.default_threshold {
            if !t.is_finite() {
                return invalid("filter.default_threshold must be finite");
            }
        }
        if self.assembly.min_confirmations == 0 {
            return invalid("assembly.min_confirmations must be at least 1");
        }
        Ok(())
    }

    /// Canonical TOML text of the configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_digest: self.digest(),
            seed: self.seed,
        }
    }

    /// Resolves a configured path against the config file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.paths.work_dir)
    }

    pub fn provider(&self) -> Result<ProviderSpec, ConfigError> {
        Ok(match self.retrieval.provider.parse()? {
            ProviderSpec::Fixture(p) => ProviderSpec::Fixture(self.resolve(&p)),
            ProviderSpec::Live => ProviderSpec::Live,
        })
    }

    pub fn embed_source(&self) -> Result<EmbedSource, ConfigError> {
        match self.embed.source.as_str() {
            "builtin" => Ok(EmbedSource::Builtin),
            s => match s.strip_prefix("file:").filter(|p| !p.is_empty()) {
                Some(p) => Ok(EmbedSource::File(self.resolve(Path::new(p)))),
                None => Err(ConfigError::Invalid(format!(
                    "embed.source must be `builtin` or `file:<path>`, got {s:?}"
                ))),
            },
        }
    }

    pub fn mcd(&self) -> McdConfig {
        McdConfig {
            n_starts: self.filter.mcd_starts,
            max_csteps: self.filter.mcd_max_csteps,
            seed: self.seed,
            ..McdConfig::default()
        }
    }
}
