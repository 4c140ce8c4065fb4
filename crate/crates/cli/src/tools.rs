//! Commands that work on explicit files rather than a pipeline config.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde_json::json;
use voxcrawl_core::assembly::{read_manifest, stats, write_stats, Split};
use voxcrawl_core::evalkit::{
    agreement, cavg, eer, error_rate, label_distribution, read_labels, read_trials, write_labels, Verdict,
    DEFAULT_BUCKETS,
};
use voxcrawl_core::ingest::LanguageCorpus;
use voxcrawl_core::lid::{train_lid as fit_lid, LidConfig, LidModel};
use voxcrawl_core::phrases::{extract_candidates, filter_phrases, read_stopwords, score_tfidf, write_phrases};
use voxcrawl_core::pipeline::load_rog_model;
use voxcrawl_core::robust::filter;
use voxcrawl_core::textio::{data_lines, fmt_f64, write_atomic};
use voxcrawl_core::embed::load_embeddings;
use voxcrawl_core::LanguageCode;
use voxcrawl_service::LabelStore;

use crate::{CliResult, Failure, Metric};

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> Failure + '_ {
    move |e| Failure::data(format!("{}: {e}", path.display()))
}

/// Output to a file (atomically) or stdout.
fn emit(out: Option<&Path>, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult {
    match out {
        Some(path) => write_atomic(path, fill).map_err(|e| in_file(path)(&e)),
        None => fill(&mut io::stdout().lock()).map_err(Failure::data),
    }
}

/// The language a corpus file belongs to, from its file stem.
fn corpus_language(path: &Path) -> Result<LanguageCode, Failure> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    LanguageCode::new(stem).map_err(|e| Failure::usage(format!("{}: file name must be <language>.tsv: {e}", path.display())))
}

fn read_corpora(paths: &[std::path::PathBuf]) -> Result<Vec<LanguageCorpus>, Failure> {
    paths
        .iter()
        .map(|p| {
            let language = corpus_language(p)?;
            LanguageCorpus::read_tsv(language, open(p)?).map_err(|e| in_file(p)(&e))
        })
        .collect()
}

pub fn train_lid(corpus: &[std::path::PathBuf], out: &Path, config: &LidConfig) -> CliResult {
    let corpora: BTreeMap<LanguageCode, Vec<String>> = read_corpora(corpus)?
        .into_iter()
        .map(|c| {
            let texts = c.articles().iter().map(|a| a.body().to_owned()).collect();
            (c.language().clone(), texts)
        })
        .collect();
    let model = fit_lid(&corpora, config).map_err(Failure::data)?;
    write_atomic(out, |w| model.write_to(w)).map_err(|e| in_file(out)(&e))?;
    println!("trained {} languages into {}", corpora.len(), out.display());
    Ok(())
}

fn load_lid(path: &Path) -> Result<LidModel, Failure> {
    LidModel::read_from(open(path)?).map_err(|e| in_file(path)(&e))
}

pub fn classify(model: &Path, expected: Option<&str>, texts: &[String]) -> CliResult {
    let model = load_lid(model)?;
    let expected = expected
        .map(|l| LanguageCode::new(l).map_err(Failure::usage))
        .transpose()?;
    let texts: Vec<String> = if texts.is_empty() {
        io::stdin().lock().lines().collect::<io::Result<_>>().map_err(Failure::data)?
    } else {
        texts.to_vec()
    };
    let mut out = io::stdout().lock();
    for text in &texts {
        let line = match &expected {
            Some(l) => model.matches(text, l).map_err(Failure::usage)?.to_string(),
            None => {
                let v = model.classify(text);
                let language = v.language.as_ref().map_or("UNKNOWN", |l| l.as_str());
                format!("{language}\t{}", fmt_f64(v.margin, 4))
            }
        };
        writeln!(out, "{line}").map_err(Failure::data)?;
    }
    Ok(())
}

pub fn mine_phrases(
    corpus: &[std::path::PathBuf],
    lid: &Path,
    top_k: usize,
    stopwords: Option<&Path>,
    out: Option<&Path>,
) -> CliResult {
    let lid = load_lid(lid)?;
    let mut phrases = Vec::new();
    for c in read_corpora(corpus)? {
        let stop = match stopwords {
            Some(dir) if dir.is_dir() => {
                let file = dir.join(format!("{}.txt", c.language()));
                if file.exists() {
                    read_stopwords(open(&file)?).map_err(|e| in_file(&file)(&e))?
                } else {
                    HashSet::new()
                }
            }
            Some(file) => read_stopwords(open(file)?).map_err(|e| in_file(file)(&e))?,
            None => HashSet::new(),
        };
        let candidates = extract_candidates(&c).map_err(Failure::data)?;
        let scored = score_tfidf(&candidates);
        let mined = filter_phrases(&scored, &lid, c.language(), &stop, top_k).map_err(Failure::usage)?;
        tracing::info!(language = %c.language(), phrases = mined.len(), "mined");
        phrases.extend(mined);
    }
    emit(out, |w| write_phrases(&phrases, w))
}

pub fn filter_apply(model: &Path, emb: &Path, dataset: &Path, out: &Path, threshold: Option<f64>) -> CliResult {
    let model = load_rog_model(model).map_err(|e| in_file(model)(&e))?;
    let embeddings = load_embeddings(open(emb)?).map_err(|e| in_file(emb)(&e))?;
    let mut segments = Vec::new();
    for item in data_lines(open(dataset)?) {
        let (line, text) = item.map_err(Failure::data)?;
        let bad = |m: &str| Failure::data(format!("{}:{line}: {m}", dataset.display()));
        let mut fields = text.split('\t');
        let (Some(id), Some(language)) = (fields.next(), fields.next()) else {
            return Err(bad("expected segment_id<TAB>language"));
        };
        let language = LanguageCode::new(language).map_err(|e| bad(&e.to_string()))?;
        segments.push((id.to_owned(), language));
    }
    let tau = threshold
        .or(model.threshold)
        .ok_or_else(|| Failure::usage("the model has no threshold; pass --threshold"))?;
    let report = filter(&segments, &embeddings.vectors, &model, tau, None).map_err(Failure::data)?;
    write_atomic(out, |w| {
        writeln!(w, "# segment_id\tlanguage\tscore\tdecision")?;
        for (id, language) in &segments {
            let decision = if report.kept.contains(id) { "keep" } else { "remove" };
            writeln!(w, "{id}\t{language}\t{}\t{decision}", fmt_f64(report.scores[id], 9))?;
        }
        Ok(())
    })
    .map_err(|e| in_file(out)(&e))?;
    println!("kept {} removed {} at threshold {tau}", report.kept.len(), report.removed.len());
    Ok(())
}

pub fn manifest_stats(manifest: &Path, split: Option<&str>) -> CliResult {
    let split: Option<Split> = split.map(|s| s.parse().map_err(Failure::usage)).transpose()?;
    let entries = read_manifest(open(manifest)?).map_err(|e| in_file(manifest)(&e))?;
    let selected = entries
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| &e.segment);
    emit(None, |w| write_stats(&stats(selected), w))
}

pub fn eval(metric: Metric, input: &Path) -> CliResult {
    let value = match metric {
        Metric::Purity | Metric::Agreement => {
            let labels = read_labels(open(input)?).map_err(|e| in_file(input)(&e))?;
            if let Metric::Agreement = metric {
                let a = agreement(&labels).map_err(Failure::data)?;
                json!({ "pairs": a.pairs, "agreeing": a.agreeing, "rate": a.rate })
            } else {
                let d = label_distribution(labels.iter().map(|l| l.verdict)).map_err(Failure::data)?;
                let counts: BTreeMap<&str, u64> = Verdict::ALL.iter().map(|&v| (v.as_str(), d.count(v))).collect();
                let proportions: BTreeMap<&str, f64> =
                    Verdict::ALL.iter().map(|&v| (v.as_str(), d.proportion(v))).collect();
                json!({
                    "total": d.total,
                    "counts": counts,
                    "proportions": proportions,
                    "speech_purity": d.speech_purity,
                })
            }
        }
        Metric::Error | Metric::Eer | Metric::Cavg => {
            let trials = read_trials(open(input)?).map_err(|e| in_file(input)(&e))?;
            match metric {
                Metric::Error => {
                    let mut rows = Vec::with_capacity(trials.len());
                    for t in &trials {
                        let duration = t
                            .duration_s
                            .ok_or_else(|| Failure::data(format!("trial {} has no duration", t.trial_id)))?;
                        rows.push((t.trial_id.clone(), t.predicted() == Some(&t.true_language), duration));
                    }
                    serde_json::to_value(error_rate(&rows, &DEFAULT_BUCKETS).map_err(Failure::data)?)
                        .map_err(Failure::data)?
                }
                Metric::Eer => {
                    let scores: Vec<(f64, bool)> = trials
                        .iter()
                        .flat_map(|t| t.scores.iter().map(|(l, &s)| (s, *l == t.true_language)))
                        .collect();
                    json!({ "eer_percent": eer(&scores).map_err(Failure::data)? })
                }
                _ => json!({ "cavg": cavg(&trials).map_err(Failure::data)? }),
            }
        }
    };
    println!("{}", serde_json::to_string_pretty(&value).map_err(Failure::data)?);
    Ok(())
}

pub fn export_labels(log: &Path, out: Option<&Path>) -> CliResult {
    if !log.exists() {
        return Err(Failure::data(format!("{}: no such label log", log.display())));
    }
    let store = LabelStore::open(log).map_err(Failure::data)?;
    let snapshot = store.snapshot();
    emit(out, |w| write_labels(snapshot.labels(), w))
}
