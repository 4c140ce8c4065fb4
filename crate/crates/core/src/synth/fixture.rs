//! A complete offline input set for the pipeline: page dumps, stop-word
//! lists, canned search results, audio for every video and simulated crowd
//! labels, together with the config file that ties them together.
//!
//! Search results are keyed by the phrases the pipeline itself mines from
//! the generated dumps, and crowd labels are keyed by the segment ids the
//! segmenter produces on the written audio, so both are computed by running
//! the corresponding stages rather than guessed.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use quick_xml::escape::escape;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::audio::{add_noise, place, silence, speech_like, VoiceProfile};
use super::text::{SyntheticLanguage, MAX_LANGUAGES};
use crate::audio::{analyze, read_wav, segment, write_wav};
use crate::config::Config;
use crate::evalkit::{write_labels, CrowdLabel, Verdict};
use crate::lang::LanguageCode;
use crate::phrases::{read_phrases, SearchPhrase};
use crate::pipeline::{Pipeline, Stage, PHRASES};
use crate::textio::{escape_field, fmt_f64, write_atomic};

pub const CONFIG_FILE: &str = "config.toml";
pub const SEARCH_FILE: &str = "search.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
const SCRATCH_DIR: &str = ".fixture-scratch";

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub seed: u64,
    /// Languages with enough articles to be used.
    pub languages: usize,
    /// Accepted videos per language, the last of which has audio in another
    /// language than its metadata.
    pub videos_per_language: usize,
    pub articles_per_language: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            languages: 3,
            videos_per_language: 7,
            articles_per_language: 30,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture needs 2 to {} languages and at least 4 videos each", MAX_LANGUAGES - 1)]
    Spec,
    #[error("phrase mining found no phrases for {0}")]
    NoPhrases(LanguageCode),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error(transparent)]
    Other(Box<dyn std::error::Error + Send + Sync>),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSummary {
    pub config_path: PathBuf,
    pub languages: Vec<LanguageCode>,
    /// Videos with audio.
    pub videos: usize,
    pub segments: usize,
    pub labels: usize,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn config_text(spec: &FixtureSpec) -> String {
    format!(
        r#"seed = {seed}
workers = 0

[paths]
work_dir = "work"
dumps = "dumps"
stopwords = "stopwords"
wav_dir = "wav"
labels = "{LABELS_FILE}"

[ingest]
min_chars = 800
min_articles = {min_articles}

[phrases]
top_k = 4

[retrieval]
provider = "fixture:{SEARCH_FILE}"
max_results = 10
max_duration_s = 3600.0

[embed.mel]
n_bands = 20

[filter]
mcd_starts = 100

[assembly]
eval_per_language = 100
min_confirmations = 2
"#,
        seed = spec.seed,
        min_articles = spec.articles_per_language * 2 / 3,
    )
}

fn page_xml(out: &mut String, id: usize, title: &str, ns: i64, text: &str, redirect: Option<&str>) {
    let redirect = redirect.map_or(String::new(), |t| format!("<redirect title=\"{}\" />", escape(t)));
    let _ = write!(
        out,
        "  <page>\n    <title>{}</title>\n    <ns>{ns}</ns>\n    <id>{id}</id>\n    {redirect}\n    \
         <revision>\n      <id>{}</id>\n      <model>wikitext</model>\n      <format>text/x-wiki</format>\n      \
         <text bytes=\"{}\" xml:space=\"preserve\">{}</text>\n    </revision>\n  </page>\n",
        escape(title),
        id + 100_000,
        text.len(),
        escape(text)
    );
}

/// Dresses plain text up as wikitext: an infobox, links, emphasis, a
/// reference and a section heading. Stripping gives back the words.
fn to_wikitext(rng: &mut ChaCha8Rng, lang: &SyntheticLanguage, body: &str) -> String {
    let mut words: Vec<String> = body.split(' ').map(str::to_owned).collect();
    for _ in 0..words.len() / 25 {
        let i = rng.random_range(0..words.len());
        let w = &words[i];
        if w.ends_with('.') || w.contains('\n') {
            continue;
        }
        words[i] = match rng.random_range(0..3) {
            0 => format!("[[{w}]]"),
            1 => format!("[[{}|{w}]]", lang.word(rng)),
            _ => format!("'''{w}'''"),
        };
    }
    let infobox = format!("{{{{Infobox\n| name = {}\n| code = 0{}\n}}}}\n", lang.word(rng), rng.random_range(10..99));
    let reference = format!("<ref>{{{{cite|{}}}}}</ref>", lang.word(rng));
    let heading = format!("\n== {} ==\n", lang.word(rng));
    let text = words.join(" ");
    let mid = text.char_indices().nth(text.chars().count() / 2).map_or(0, |(i, _)| i);
    let cut = text[mid..].find(". ").map_or(text.len(), |p| mid + p + 1);
    format!(
        "{infobox}{}{reference}{heading}{}\n[[Category:{}]]",
        &text[..cut],
        text[cut..].trim_start(),
        lang.word(rng)
    )
}

struct LanguageText {
    dump: String,
    stopwords: Vec<String>,
}

fn language_text(lang: &SyntheticLanguage, rng: &mut ChaCha8Rng, articles: usize) -> LanguageText {
    let mut dump = String::from(
        "<mediawiki xmlns=\"http://www.mediawiki.org/xml/export-0.10/\" version=\"0.10\" xml:lang=\"x\">\n  \
         <siteinfo>\n    <sitename>Synthetic</sitename>\n  </siteinfo>\n",
    );
    let mut freq: HashMap<String, usize> = HashMap::new();
    let mut id = 1;
    for a in 0..articles {
        let body = lang.document(rng, 1000);
        for token in body.split_whitespace() {
            *freq.entry(token.trim_end_matches('.').to_lowercase()).or_default() += 1;
        }
        let title = format!("{} {a}", lang.word(rng));
        page_xml(&mut dump, id, &title, 0, &to_wikitext(rng, lang, &body), None);
        id += 1;
        match a % 5 {
            // too short to keep
            0 => page_xml(&mut dump, id, &format!("{title} stub"), 0, &lang.paragraph(rng, 200), None),
            1 => page_xml(&mut dump, id, &format!("{title} alt"), 0, &format!("#REDIRECT [[{title}]]"), Some(&title)),
            2 => page_xml(&mut dump, id, &format!("Talk:{title}"), 1, &lang.paragraph(rng, 1200), None),
            3 => page_xml(&mut dump, id, &title.repeat(2), 0, &title.repeat(2), None),
            _ => {}
        }
        id += 1;
    }
    dump.push_str("</mediawiki>\n");
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    LanguageText {
        dump,
        stopwords: ranked.into_iter().take(8).map(|(w, _)| w).collect(),
    }
}

/// Speech bursts separated by pauses, with a steady noise floor. Some bursts
/// run past the maximum segment length and some are too short to keep.
fn video_audio(rng: &mut ChaCha8Rng, voice: &VoiceProfile) -> Vec<f32> {
    let mut layout = Vec::new();
    let mut t = rng.random_range(0.5..1.5);
    for i in 0..5 {
        let len = match i {
            0 => rng.random_range(21.0..27.0),
            3 => rng.random_range(0.6..1.2),
            _ => rng.random_range(3.0..12.0),
        };
        layout.push((t, len));
        t += len + rng.random_range(0.8..1.6);
    }
    let mut pcm = silence(t);
    for (start, len) in layout {
        let burst = speech_like(rng, voice, len, 0.1);
        place(&mut pcm, start, &burst);
    }
    add_noise(rng, &mut pcm, 0.001);
    pcm
}

struct PlannedVideo {
    video_id: String,
    channel_id: String,
    language: usize,
    voice: usize,
    title: String,
    description: String,
}

fn video_text(lang: &SyntheticLanguage, rng: &mut ChaCha8Rng) -> (String, String) {
    (lang.sentence(rng), lang.paragraph(rng, 120))
}

fn search_line(out: &mut String, phrase: &str, video_id: &str, duration: f64, title: &str, desc: &str, channel: &str) {
    let _ = writeln!(
        out,
        "{phrase}\t{video_id}\t{}\t{}\t{}\t{channel}",
        fmt_f64(duration, 3),
        escape_field(title),
        escape_field(desc)
    );
}

fn verdict_for(rng: &mut ChaCha8Rng, truth: Verdict) -> Verdict {
    let x: f64 = rng.random();
    if x < 0.9 {
        truth
    } else if x < 0.95 {
        Verdict::Unsure
    } else if truth == Verdict::TargetSpeech {
        Verdict::NonSpeech
    } else {
        Verdict::TargetSpeech
    }
}

/// Writes the fixture set into `dir` (created if needed) and returns where
/// the config file is.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<FixtureSummary, FixtureError> {
    if spec.languages < 2 || spec.languages >= MAX_LANGUAGES || spec.videos_per_language < 4 {
        return Err(FixtureError::Spec);
    }
    fs::create_dir_all(dir)?;
    let family = SyntheticLanguage::family(spec.languages + 1, spec.seed);
    let codes: Vec<LanguageCode> = family.iter().map(|l| l.code().clone()).collect();

    // Text: eligible languages plus one with too few articles.
    for (i, lang) in family.iter().enumerate() {
        let mut rng = rng_for(spec.seed, 100 + i as u64);
        let articles = if i < spec.languages {
            spec.articles_per_language
        } else {
            spec.articles_per_language / 3
        };
        let text = language_text(lang, &mut rng, articles);
        write_atomic(&dir.join("dumps").join(format!("{}.xml", lang.code())), |out| {
            out.write_all(text.dump.as_bytes())
        })?;
        write_atomic(&dir.join("stopwords").join(format!("{}.txt", lang.code())), |out| {
            writeln!(out, "# most frequent words")?;
            text.stopwords.iter().try_for_each(|w| writeln!(out, "{w}"))
        })?;
    }
    let config_path = dir.join(CONFIG_FILE);
    write_atomic(&config_path, |out| out.write_all(config_text(spec).as_bytes()))?;

    // Mine phrases exactly as the pipeline will.
    let scratch = dir.join(SCRATCH_DIR);
    let scratch_config = Config::load(&config_path, &[format!("paths.work_dir=\"{SCRATCH_DIR}\"")])?;
    Pipeline::new(scratch_config.clone())?.run(Stage::Ingest, Stage::Phrases)?;
    let phrases = read_phrases(BufReader::new(fs::File::open(scratch.join(PHRASES))?))
        .map_err(|e| FixtureError::Other(Box::new(e)))?;
    fs::remove_dir_all(&scratch)?;
    let mut by_language: BTreeMap<&LanguageCode, Vec<&SearchPhrase>> = BTreeMap::new();
    for p in &phrases {
        by_language.entry(&p.language).or_default().push(p);
    }

    // Videos and canned search results.
    let mut voice_rng = rng_for(spec.seed, 200);
    let voices: Vec<VoiceProfile> = (0..spec.languages)
        .map(|i| VoiceProfile::for_language(i, &mut voice_rng))
        .collect();
    let mut search = String::from("# phrase\tvideo_id\tduration_s\ttitle\tdescription\tchannel_id\n");
    let mut planned = Vec::new();
    for (li, lang) in family.iter().take(spec.languages).enumerate() {
        let code = lang.code();
        let lang_phrases = by_language.get(code).ok_or_else(|| FixtureError::NoPhrases(code.clone()))?;
        let mut rng = rng_for(spec.seed, 300 + li as u64);
        for vi in 0..spec.videos_per_language {
            let (title, description) = video_text(lang, &mut rng);
            let wrong_audio = vi + 1 == spec.videos_per_language;
            planned.push(PlannedVideo {
                video_id: format!("{code}-v{vi:02}"),
                channel_id: format!("{code}-ch{}", vi / 2),
                language: li,
                voice: if wrong_audio { (li + 1) % spec.languages } else { li },
                title,
                description,
            });
        }
        let foreign = &family[(li + 1) % spec.languages];
        let (f_title, f_desc) = video_text(foreign, &mut rng);
        let (l_title, l_desc) = video_text(lang, &mut rng);
        let first = lang_phrases[0].text();
        search_line(&mut search, &first, &format!("{code}-foreign"), 600.0, &f_title, &f_desc, &format!("{code}-chx"));
        search_line(&mut search, &first, &format!("{code}-long"), 4000.0, &l_title, &l_desc, &format!("{code}-chx"));
    }

    let wav_dir = dir.join("wav");
    let mut segments_by_video: Vec<Vec<String>> = Vec::new();
    for (n, video) in planned.iter().enumerate() {
        let mut rng = rng_for(spec.seed, 1000 + n as u64);
        let pcm = video_audio(&mut rng, &voices[video.voice]);
        let path = wav_dir.join(format!("{}.wav", video.video_id));
        write_wav(&path, &pcm)?;
        // Segment ids come from the stored (quantized) audio, as in the pipeline.
        let stored = read_wav(&path)?;
        let analysis = analyze(&stored, &scratch_config.vad);
        let segs = segment(&video.video_id, &analysis.intervals, Some(&analysis.energy), &scratch_config.segment.bounds())
            .map_err(|e| FixtureError::Other(Box::new(e)))?;
        segments_by_video.push(segs.into_iter().map(|s| s.segment_id).collect());

        let code = &codes[video.language];
        let lang_phrases = &by_language[code];
        let vi = n % spec.videos_per_language;
        let duration = pcm.len() as f64 / crate::audio::SAMPLE_RATE as f64;
        let phrase = lang_phrases[vi % lang_phrases.len()].text();
        search_line(&mut search, &phrase, &video.video_id, duration, &video.title, &video.description, &video.channel_id);
        if vi == 0 && lang_phrases.len() > 1 {
            // The same video found by a second phrase.
            let again = lang_phrases[1].text();
            search_line(&mut search, &again, &video.video_id, duration, &video.title, &video.description, &video.channel_id);
        }
    }
    write_atomic(&dir.join(SEARCH_FILE), |out| out.write_all(search.as_bytes()))?;

    // Crowd labels: the first two videos of each language are labeled by
    // several annotators, the third by one, the wrong-audio video by two.
    let annotators: Vec<(String, u8)> = (1..=6).map(|i| (format!("ann{i:02}"), (i % 5 + 1) as u8)).collect();
    let mut rng = rng_for(spec.seed, 500);
    let mut labels = Vec::new();
    let mut clock = 1_700_000_000_000u64;
    for (n, segment_ids) in segments_by_video.iter().enumerate() {
        let vi = n % spec.videos_per_language;
        let wrong_audio = vi + 1 == spec.videos_per_language;
        let (raters, truth) = match vi {
            _ if wrong_audio => (2, Verdict::OtherLanguage),
            0 | 1 => (rng.random_range(2..=3), Verdict::TargetSpeech),
            2 => (1, Verdict::TargetSpeech),
            _ => continue,
        };
        for segment_id in segment_ids {
            let chosen: Vec<&(String, u8)> = annotators.choose_multiple(&mut rng, raters).collect();
            for (annotator, proficiency) in chosen {
                clock += rng.random_range(1_000..60_000);
                labels.push(CrowdLabel {
                    segment_id: segment_id.clone(),
                    annotator_id: annotator.clone(),
                    verdict: verdict_for(&mut rng, truth),
                    proficiency: *proficiency,
                    timestamp: clock,
                });
            }
        }
    }
    write_atomic(&dir.join(LABELS_FILE), |out| write_labels(&labels, out))?;

    Ok(FixtureSummary {
        config_path,
        languages: codes[..spec.languages].to_vec(),
        videos: planned.len(),
        segments: segments_by_video.iter().map(Vec::len).sum(),
        labels: labels.len(),
    })
}
