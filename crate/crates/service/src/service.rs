use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use voxcrawl_core::evalkit::{agreement, label_distribution, write_labels, Agreement, CrowdLabel, Verdict};
use voxcrawl_core::LanguageCode;

use crate::catalog::Catalog;
use crate::store::LabelStore;
use crate::tokens::TokenRegistry;
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub batch_size: usize,
    /// Clips per batch taken, when available, from clips with exactly one
    /// label by someone else.
    pub reannotation_quota: usize,
    pub seed: u64,
    /// Languages with more labels than this are flagged in the statistics.
    pub label_flag_threshold: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            reannotation_quota: 3,
            seed: 0,
            label_flag_threshold: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub session_id: String,
    pub annotator_id: String,
    pub language: LanguageCode,
    pub proficiency: u8,
    pub issued_clips: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Batch {
    pub clips: Vec<String>,
    /// No eligible clip was left for this annotator.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageStats {
    pub language: LanguageCode,
    pub total: u64,
    pub counts: BTreeMap<Verdict, u64>,
    pub proportions: BTreeMap<Verdict, f64>,
    pub speech_purity: Option<f64>,
    pub agreement: Option<Agreement>,
    /// More labels than the flag threshold.
    pub over_label_threshold: bool,
}

/// Deterministic string hash for seeding per-annotator streams.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub struct ValidationService {
    catalog: Catalog,
    tokens: TokenRegistry,
    store: LabelStore,
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Session>>,
}

impl ValidationService {
    pub fn new(catalog: Catalog, tokens: TokenRegistry, store: LabelStore, config: ServiceConfig) -> Self {
        Self {
            catalog,
            tokens,
            store,
            config,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn store(&self) -> &LabelStore {
        &self.store
    }

    pub fn authenticate(&self, token: Option<&str>) -> Result<String, ServiceError> {
        token
            .and_then(|t| self.tokens.annotator(t))
            .map(str::to_owned)
            .ok_or(ServiceError::Unauthorized)
    }

    pub fn create_session(&self, token: Option<&str>, language: &str, proficiency: u8) -> Result<Session, ServiceError> {
        let annotator_id = self.authenticate(token)?;
        if !(1..=5).contains(&proficiency) {
            return Err(ServiceError::Invalid(format!("proficiency must be 1 to 5, got {proficiency}")));
        }
        let language = LanguageCode::new(language)
            .ok()
            .filter(|l| self.catalog.clips_in(l).is_some())
            .ok_or_else(|| ServiceError::NotFound(format!("language {language}")))?;
        let session = Session {
            session_id: format!("{:032x}", rand::rng().random::<u128>()),
            annotator_id,
            language,
            proficiency,
            issued_clips: Vec::new(),
        };
        self.sessions()
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// The session, if it exists and belongs to the token's annotator.
    pub fn session(&self, token: Option<&str>, session_id: &str) -> Result<Session, ServiceError> {
        let annotator_id = self.authenticate(token)?;
        self.sessions()
            .get(session_id)
            .filter(|s| s.annotator_id == annotator_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session {session_id}")))
    }

    /// Issues up to a batch of clips the annotator has never been given.
    /// Clips labeled exactly once by someone else fill the re-annotation
    /// quota first, unlabeled clips the rest; leftovers of either kind and
    /// then more heavily labeled clips top the batch up.
    pub fn next_clips(&self, token: Option<&str>, session_id: &str) -> Result<Batch, ServiceError> {
        let session = self.session(token, session_id)?;
        let annotator = &session.annotator_id;
        let mut writer = self.store.lock();
        let snap = writer.snapshot();
        let (mut once, mut fresh, mut more) = (Vec::new(), Vec::new(), Vec::new());
        for id in self.catalog.clips_in(&session.language).unwrap_or_default() {
            if snap.was_issued(annotator, id) || snap.has_label(id, annotator) {
                continue;
            }
            match snap.label_count(id) {
                0 => fresh.push(id.clone()),
                1 => once.push(id.clone()),
                _ => more.push(id.clone()),
            }
        }
        if once.is_empty() && fresh.is_empty() && more.is_empty() {
            return Ok(Batch {
                clips: Vec::new(),
                exhausted: true,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ fnv1a(annotator));
        rng.set_stream(snap.issued_count(annotator) as u64);
        once.shuffle(&mut rng);
        fresh.shuffle(&mut rng);
        more.shuffle(&mut rng);
        let size = self.config.batch_size;
        let quota = self.config.reannotation_quota.min(size).min(once.len());
        let mut clips: Vec<String> = once.drain(..quota).collect();
        for pool in [fresh, once, more] {
            let take = (size - clips.len()).min(pool.len());
            clips.extend(pool.into_iter().take(take));
        }
        writer.record_issued(annotator, &clips)?;
        drop(writer);
        if let Some(s) = self.sessions().get_mut(session_id) {
            s.issued_clips.extend(clips.iter().cloned());
        }
        Ok(Batch { clips, exhausted: false })
    }

    pub fn submit_label(
        &self,
        token: Option<&str>,
        session_id: &str,
        segment_id: &str,
        verdict: &str,
    ) -> Result<CrowdLabel, ServiceError> {
        let session = self.session(token, session_id)?;
        let verdict: Verdict = verdict.parse().map_err(ServiceError::Invalid)?;
        if !session.issued_clips.iter().any(|c| c == segment_id) {
            return Err(ServiceError::NotIssued(segment_id.to_owned()));
        }
        let label = CrowdLabel {
            segment_id: segment_id.to_owned(),
            annotator_id: session.annotator_id,
            verdict,
            proficiency: session.proficiency,
            timestamp: now_ms(),
        };
        self.store.lock().add_label(label.clone())?;
        Ok(label)
    }

    /// Writes every stored label in the label export format, in log order.
    pub fn export_labels<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        write_labels(self.store.snapshot().labels(), out)
    }

    pub fn languages(&self) -> Vec<(LanguageCode, usize, u64)> {
        let snap = self.store.snapshot();
        let mut labels: BTreeMap<&LanguageCode, u64> = BTreeMap::new();
        for l in snap.labels() {
            if let Some(clip) = self.catalog.get(&l.segment_id) {
                *labels.entry(&clip.language).or_default() += 1;
            }
        }
        self.catalog
            .languages()
            .map(|(lang, ids)| (lang.clone(), ids.len(), labels.get(lang).copied().unwrap_or(0)))
            .collect()
    }

    pub fn language_stats(&self, language: &str) -> Result<LanguageStats, ServiceError> {
        let language = LanguageCode::new(language)
            .ok()
            .filter(|l| self.catalog.clips_in(l).is_some())
            .ok_or_else(|| ServiceError::NotFound(format!("language {language}")))?;
        let snap = self.store.snapshot();
        let labels: Vec<CrowdLabel> = snap
            .labels()
            .iter()
            .filter(|l| self.catalog.get(&l.segment_id).is_some_and(|c| c.language == language))
            .cloned()
            .collect();
        Ok(language_stats(language, &labels, self.config.label_flag_threshold))
    }
}

/// Statistics for one language's labels, delegating the numbers to the
/// metric functions.
pub fn language_stats(language: LanguageCode, labels: &[CrowdLabel], flag_threshold: u64) -> LanguageStats {
    let distribution = label_distribution(labels.iter().map(|l| l.verdict)).ok();
    let counts = Verdict::ALL
        .iter()
        .map(|&v| (v, distribution.as_ref().map_or(0, |d| d.count(v))))
        .collect();
    let proportions = Verdict::ALL
        .iter()
        .map(|&v| (v, distribution.as_ref().map_or(0.0, |d| d.proportion(v))))
        .collect();
    let total = labels.len() as u64;
    LanguageStats {
        language,
        total,
        counts,
        proportions,
        speech_purity: distribution.and_then(|d| d.speech_purity),
        agreement: agreement(labels).ok(),
        over_label_threshold: total > flag_threshold,
    }
}
