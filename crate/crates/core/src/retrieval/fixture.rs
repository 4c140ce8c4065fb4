use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{parse_duration, RetrievalError, SearchProvider, VideoMeta};
use crate::phrases::SearchPhrase;
use crate::textio::{data_lines, unescape_field};

#[derive(Debug, Clone)]
struct FixtureRecord {
    video_id: String,
    duration_s: f64,
    title: String,
    description: String,
    channel_id: String,
}

/// Offline provider answering searches from a file of canned results:
/// `phrase<TAB>video_id<TAB>duration_s<TAB>title<TAB>description<TAB>channel_id`,
/// results for a phrase in file order.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    by_phrase: HashMap<String, Vec<FixtureRecord>>,
}

fn phrase_key(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl FixtureProvider {
    pub fn open(path: &Path) -> Result<Self, RetrievalError> {
        let file = File::open(path)?;
        Self::from_reader(BufReader::new(file), &path.display().to_string())
    }

    pub fn from_reader<R: BufRead>(input: R, origin: &str) -> Result<Self, RetrievalError> {
        let mut by_phrase: HashMap<String, Vec<FixtureRecord>> = HashMap::new();
        for item in data_lines(input) {
            let (line, text) = item?;
            let err = |message: String| RetrievalError::Parse {
                path: origin.to_owned(),
                line,
                message,
            };
            let fields: Vec<&str> = text.split('\t').collect();
            let [phrase, video_id, duration, title, description, channel_id] = fields.as_slice() else {
                return Err(err(format!("expected 6 fields, found {}", fields.len())));
            };
            if video_id.is_empty() {
                return Err(err("empty video id".into()));
            }
            by_phrase.entry(phrase_key(phrase)).or_default().push(FixtureRecord {
                video_id: video_id.to_string(),
                duration_s: parse_duration(duration).map_err(err)?,
                title: unescape_field(title).into_owned(),
                description: unescape_field(description).into_owned(),
                channel_id: channel_id.to_string(),
            });
        }
        Ok(Self { by_phrase })
    }
}

impl SearchProvider for FixtureProvider {
    fn search(&self, phrase: &SearchPhrase, max_results: usize) -> Result<Vec<VideoMeta>, RetrievalError> {
        let text = phrase.text();
        let Some(records) = self.by_phrase.get(&phrase_key(&text)) else {
            tracing::debug!(phrase = %text, "no fixture results");
            return Ok(Vec::new());
        };
        Ok(records
            .iter()
            .take(max_results)
            .map(|r| VideoMeta {
                video_id: r.video_id.clone(),
                title: r.title.clone(),
                description: r.description.clone(),
                duration_s: r.duration_s,
                channel_id: r.channel_id.clone(),
                query_phrase: text.clone(),
                language: phrase.language.clone(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::LanguageCode;
    use crate::retrieval::tests::phrase;

    const FIXTURE: &str = "\
# phrase\tvideo_id\tduration_s\ttitle\tdescription\tchannel_id
alpha beta gamma\tv1\t10\tt1\td1\tc1
alpha beta gamma\tv2\t20\tt2\td2\tc1
alpha beta gamma\tv3\t30\tt3\td3\tc2
other words here\tv9\t5\tt9\td9\tc9
";

    fn lang() -> LanguageCode {
        LanguageCode::new("qaa").unwrap()
    }

    #[test]
    fn returns_fixture_entries_tagged_with_phrase() {
        let provider = FixtureProvider::from_reader(FIXTURE.as_bytes(), "mem").unwrap();
        let out = provider.search(&phrase(&lang(), "alpha beta gamma"), 10).unwrap();
        let ids: Vec<_> = out.iter().map(|v| v.video_id.as_str()).collect();
        assert_eq!(ids, ["v1", "v2", "v3"]);
        assert!(out.iter().all(|v| v.query_phrase == "alpha beta gamma" && v.language == lang()));
        assert_eq!(out[1].duration_s, 20.0);
    }

    #[test]
    fn unknown_phrase_gives_empty_list() {
        let provider = FixtureProvider::from_reader(FIXTURE.as_bytes(), "mem").unwrap();
        assert!(provider.search(&phrase(&lang(), "no such phrase"), 10).unwrap().is_empty());
    }

    #[test]
    fn max_results_truncates() {
        let provider = FixtureProvider::from_reader(FIXTURE.as_bytes(), "mem").unwrap();
        let out = provider.search(&phrase(&lang(), "alpha beta gamma"), 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].video_id, "v1");
    }

    #[test]
    fn malformed_lines_are_reported() {
        let err = FixtureProvider::from_reader("a b c\tv1\tnot-a-number\tt\td\tc\n".as_bytes(), "fx.tsv")
            .unwrap_err();
        assert!(err.to_string().starts_with("fx.tsv:1:"), "{err}");
    }
}
