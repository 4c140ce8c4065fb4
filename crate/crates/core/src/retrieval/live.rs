use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{RetrievalError, SearchProvider, VideoMeta};
use crate::phrases::SearchPhrase;

/// Environment variable holding the provider key when the config omits it.
pub const PROVIDER_KEY_ENV: &str = "VOXCRAWL_PROVIDER_KEY";

/// Settings for an HTTP search provider.
///
/// `query_template` is a URL containing `{phrase}`, `{max_results}` and
/// optionally `{key}`; substituted values are percent-encoded. The response
/// body must be JSON `{"items": [{"video_id", "title", "description",
/// "duration_s", "channel_id"}]}`.
#[derive(Debug, Clone)]
pub struct LiveProviderConfig {
    pub query_template: String,
    pub key: Option<String>,
    /// Minimum spacing between consecutive requests.
    pub min_interval: Duration,
    pub max_retries: usize,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl Default for LiveProviderConfig {
    fn default() -> Self {
        Self {
            query_template: String::new(),
            key: None,
            min_interval: Duration::from_millis(100),
            max_retries: 4,
            initial_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs(30),
        }
    }
}

pub struct LiveProvider {
    config: LiveProviderConfig,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
}

#[derive(Deserialize)]
struct SearchResponse {
    items: Vec<SearchItem>,
}

#[derive(Deserialize)]
struct SearchItem {
    video_id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    description: String,
    duration_s: f64,
    #[serde(default)]
    channel_id: String,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl LiveProvider {
    pub fn new(mut config: LiveProviderConfig) -> Result<Self, RetrievalError> {
        for placeholder in ["{phrase}", "{max_results}"] {
            if !config.query_template.contains(placeholder) {
                return Err(RetrievalError::Config(format!(
                    "query template must contain {placeholder}"
                )));
            }
        }
        if config.key.is_none() {
            config.key = std::env::var(PROVIDER_KEY_ENV).ok();
        }
        if config.query_template.contains("{key}") && config.key.is_none() {
            return Err(RetrievalError::Config(format!(
                "query template uses {{key}} but no key is configured and {PROVIDER_KEY_ENV} is unset"
            )));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            last_request: Mutex::new(None),
        })
    }

    fn url(&self, phrase: &str, max_results: usize) -> String {
        let enc = |s: &str| url::form_urlencoded::byte_serialize(s.as_bytes()).collect::<String>();
        self.config
            .query_template
            .replace("{phrase}", &enc(phrase))
            .replace("{max_results}", &max_results.to_string())
            .replace("{key}", &enc(self.config.key.as_deref().unwrap_or("")))
    }

    fn pace(&self) {
        let mut last = self.last_request.lock().expect("rate limiter poisoned");
        if let Some(prev) = *last {
            let wait = self.config.min_interval.saturating_sub(prev.elapsed());
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt(&self, url: &str) -> Result<Vec<SearchItem>, Failure> {
        self.pace();
        let mut response = self
            .agent
            .get(url)
            .call()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => response
                .body_mut()
                .read_json::<SearchResponse>()
                .map(|r| r.items)
                .map_err(|e| Failure::Fatal(format!("bad response body: {e}"))),
            429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(format!("HTTP {status}"))),
        }
    }
}

impl SearchProvider for LiveProvider {
    fn search(&self, phrase: &SearchPhrase, max_results: usize) -> Result<Vec<VideoMeta>, RetrievalError> {
        let text = phrase.text();
        let url = self.url(&text, max_results);
        let mut backoff = self.config.initial_backoff;
        let mut attempts = 0;
        let items = loop {
            attempts += 1;
            match self.attempt(&url) {
                Ok(items) => break items,
                Err(Failure::Retryable(msg)) if attempts <= self.config.max_retries => {
                    tracing::warn!(phrase = %text, attempt = attempts, error = %msg, "retrying search");
                    std::thread::sleep(backoff);
                    backoff = (backoff * 2).min(self.config.max_backoff);
                }
                Err(Failure::Retryable(message) | Failure::Fatal(message)) => {
                    return Err(RetrievalError::Provider {
                        phrase: text,
                        attempts,
                        message,
                    })
                }
            }
        };
        Ok(items
            .into_iter()
            .take(max_results)
            .map(|item| VideoMeta {
                video_id: item.video_id,
                title: item.title,
                description: item.description,
                duration_s: item.duration_s,
                channel_id: item.channel_id,
                query_phrase: text.clone(),
                language: phrase.language.clone(),
            })
            .collect())
    }
}
