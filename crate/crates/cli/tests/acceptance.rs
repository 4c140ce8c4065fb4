//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without a browser or a live network.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use voxcrawl_core::assembly::{read_manifest, Split};
use voxcrawl_core::audio::read_segments;
use voxcrawl_core::config::Config;
use voxcrawl_core::evalkit::{cavg, eer, label_distribution, read_labels, LanguageTrial, Verdict};
use voxcrawl_core::ingest::{ArticleRecord, LanguageCorpus};
use voxcrawl_core::lid::{train_lid, LidConfig, LidModel};
use voxcrawl_core::phrases::{extract_candidates, read_phrases, score_tfidf};
use voxcrawl_core::pipeline::{Pipeline, Stage, LID_MODEL, MANIFEST, PHRASES, SEGMENTS, VIDEOS};
use voxcrawl_core::retrieval::read_accepted;
use voxcrawl_core::robust::{cstep_violations, filter, fit_rog, mcd_estimate, select_threshold, McdConfig, RogConfig};
use voxcrawl_core::synth::fixture::{write_fixture, FixtureSpec};
use voxcrawl_core::synth::text::SyntheticLanguage;
use voxcrawl_core::LanguageCode;
use voxcrawl_service::{Catalog, Clip, LabelStore, ServiceConfig, ServiceError, TokenRegistry, ValidationService};

type Check = Result<String, String>;

fn lang(code: &str) -> LanguageCode {
    LanguageCode::new(code).unwrap()
}

fn within(elapsed: Duration, limit_s: u64, detail: String) -> Check {
    if elapsed > Duration::from_secs(limit_s) {
        Err(format!("{detail}; took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
    } else {
        Ok(detail)
    }
}

fn run_fixture(dir: &Path) -> Result<(Config, Pipeline), String> {
    let summary = write_fixture(dir, &FixtureSpec::default()).map_err(|e| e.to_string())?;
    let config = Config::load(&summary.config_path, &[]).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(config.clone()).map_err(|e| e.to_string())?;
    pipeline.run(Stage::Ingest, Stage::Assemble).map_err(|e| e.to_string())?;
    Ok((config, pipeline))
}

fn pipeline_rules(dir: &Path) -> Check {
    let start = Instant::now();
    let (config, pipeline) = run_fixture(dir)?;
    let elapsed = start.elapsed();
    let open = |name: &str| File::open(pipeline.work_path(name)).map(BufReader::new).map_err(|e| e.to_string());
    let mut violations = Vec::new();

    let segments = read_segments(open(SEGMENTS)?).map_err(|e| e.to_string())?;
    for s in &segments {
        if !(2.0..=20.0).contains(&s.duration_s()) {
            violations.push(format!("segment {} lasts {:.3} s", s.segment_id, s.duration_s()));
        }
    }

    let lid = LidModel::read_from(open(LID_MODEL)?).map_err(|e| e.to_string())?;
    let phrases = read_phrases(open(PHRASES)?).map_err(|e| e.to_string())?;
    for p in &phrases {
        if p.tokens.len() != 3 || p.tokens.iter().any(|t| t.is_empty() || t.contains(' ')) {
            violations.push(format!("phrase {:?} is not 3 tokens", p.text()));
        }
        if !lid.matches(&p.text(), &p.language).map_err(|e| e.to_string())? {
            violations.push(format!("phrase {:?} is not identified as {}", p.text(), p.language));
        }
    }

    let videos = read_accepted(open(VIDEOS)?, VIDEOS).map_err(|e| e.to_string())?;
    for v in &videos {
        if v.duration_s > 3600.0 {
            violations.push(format!("video {} lasts {} s", v.video_id, v.duration_s));
        }
    }

    let manifest = read_manifest(open(MANIFEST)?).map_err(|e| e.to_string())?;
    let labels_path = config.resolve(config.paths.labels.as_ref().ok_or("fixture config has no labels")?);
    let labels = read_labels(BufReader::new(File::open(&labels_path).map_err(|e| e.to_string())?))
        .map_err(|e| e.to_string())?;
    let mut confirmations: HashMap<&str, HashSet<&str>> = HashMap::new();
    for l in labels.iter().filter(|l| l.verdict == Verdict::TargetSpeech) {
        confirmations.entry(&l.segment_id).or_default().insert(&l.annotator_id);
    }
    let mut eval_per_language: BTreeMap<&LanguageCode, usize> = BTreeMap::new();
    let (mut train_videos, mut eval_videos) = (HashSet::new(), HashSet::new());
    for e in &manifest {
        let s = &e.segment;
        if !(2.0..=20.0).contains(&s.duration_s) {
            violations.push(format!("manifest segment {} lasts {} s", s.segment_id, s.duration_s));
        }
        match e.split {
            Split::Eval => {
                *eval_per_language.entry(&s.language).or_default() += 1;
                let n = confirmations.get(s.segment_id.as_str()).map_or(0, HashSet::len);
                if n < 2 {
                    violations.push(format!("eval segment {} has {n} confirmations", s.segment_id));
                }
                eval_videos.insert(&s.video_id);
            }
            Split::Train => {
                train_videos.insert(&s.video_id);
            }
        }
    }
    for (l, n) in &eval_per_language {
        if *n > 100 {
            violations.push(format!("{n} eval segments for {l}"));
        }
    }
    for v in train_videos.intersection(&eval_videos) {
        violations.push(format!("video {v} is in train and eval"));
    }
    let n_eval: usize = eval_per_language.values().sum();
    let n_train = manifest.len() - n_eval;
    if n_train == 0 || n_eval == 0 {
        violations.push(format!("{n_train} train and {n_eval} eval segments"));
    }
    if !violations.is_empty() {
        return Err(format!("{} violations: {}", violations.len(), violations.join("; ")));
    }
    within(
        elapsed,
        120,
        format!(
            "{} segments, {} phrases, {} videos, {n_train} train / {n_eval} eval, 0 violations in {:.1} s",
            segments.len(),
            phrases.len(),
            videos.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn determinism(first: &Path, second: &Path) -> Check {
    run_fixture(second)?;
    let a = fs::read(first.join("work").join(MANIFEST)).map_err(|e| e.to_string())?;
    let b = fs::read(second.join("work").join(MANIFEST)).map_err(|e| e.to_string())?;
    if a != b {
        return Err("manifests differ".into());
    }
    Ok(format!("manifests byte-identical ({} bytes)", a.len()))
}

fn gaussian(rng: &mut ChaCha8Rng, mean: &[f64], n: usize) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| mean.iter().map(|m| m + noise.sample(rng)).collect()).collect()
}

/// One seed of the filtering analog: returns (noise_after, retention).
fn filter_trial(seed: u64) -> Result<(f64, f64), String> {
    const N: usize = 2000;
    const DIM: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (lang("qaa"), lang("qab"));
    // unit-variance classes whose means are 4σ apart
    let mut far = vec![0.0; DIM];
    far[0] = 4.0;
    let mut points = gaussian(&mut rng, &[0.0; DIM], N / 2);
    points.extend(gaussian(&mut rng, &far, N / 2));
    let mut labels: Vec<LanguageCode> = (0..N).map(|i| if i < N / 2 { a.clone() } else { b.clone() }).collect();
    let mut order: Vec<usize> = (0..N).collect();
    order.shuffle(&mut rng);
    let mut correct = vec![true; N];
    for &i in &order[..N * 15 / 100] {
        labels[i] = if labels[i] == a { b.clone() } else { a.clone() };
        correct[i] = false;
    }
    let config = RogConfig {
        mcd: McdConfig { seed, ..McdConfig::default() },
        ..RogConfig::default()
    };
    let model = fit_rog(&points, &labels, &config).map_err(|e| e.to_string())?;
    let ids: Vec<String> = (0..N).map(|i| format!("s{i:04}")).collect();
    let segments: Vec<(String, LanguageCode)> = ids.iter().cloned().zip(labels).collect();
    let embeddings: BTreeMap<String, Vec<f64>> = ids.iter().cloned().zip(points).collect();
    let truth: HashMap<String, bool> = ids.iter().cloned().zip(correct.iter().copied()).collect();
    let all = filter(&segments, &embeddings, &model, 0.0, None).map_err(|e| e.to_string())?;
    let scores: Vec<f64> = ids.iter().map(|id| all.scores[id]).collect();
    let tau = select_threshold(&scores, &correct).map_err(|e| e.to_string())?;
    let report = filter(&segments, &embeddings, &model, tau, Some(&truth)).map_err(|e| e.to_string())?;
    let kept_correct = report.kept.iter().filter(|id| truth[*id]).count();
    let n_correct = correct.iter().filter(|&&c| c).count();
    Ok((report.noise_after.unwrap_or(0.0), kept_correct as f64 / n_correct as f64))
}

fn robust_filter() -> Check {
    let start = Instant::now();
    let mut good = 0;
    let mut cells = Vec::new();
    for seed in 0..10 {
        let (noise, retention) = filter_trial(seed)?;
        if noise <= 0.05 && retention >= 0.85 {
            good += 1;
        }
        cells.push(format!("{:.3}/{:.3}", noise, retention));
    }
    let detail = format!("{good}/10 seeds meet noise<=0.05 and retention>=0.85 (noise/retention: {})", cells.join(" "));
    if good < 9 {
        return Err(detail);
    }
    within(start.elapsed(), 30, format!("{detail} in {:.1} s", start.elapsed().as_secs_f64()))
}

fn det2(points: &[Vec<f64>], subset: &[usize]) -> f64 {
    let k = subset.len() as f64;
    let mx = subset.iter().map(|&i| points[i][0]).sum::<f64>() / k;
    let my = subset.iter().map(|&i| points[i][1]).sum::<f64>() / k;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &i in subset {
        let (dx, dy) = (points[i][0] - mx, points[i][1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxx / k) * (syy / k) - (sxy / k).powi(2)
}

fn mcd_oracle() -> Check {
    let start = Instant::now();
    let subsets: Vec<Vec<usize>> = (0u32..1 << 12)
        .filter(|m| m.count_ones() == 8)
        .map(|m| (0..12).filter(|&i| m & (1 << i) != 0).collect())
        .collect();
    if subsets.len() != 495 {
        return Err(format!("{} subsets", subsets.len()));
    }
    let mut worst: f64 = 0.0;
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let mut points = gaussian(&mut rng, &[0.0, 0.0], 12);
        // a few gross outliers
        for p in points.iter_mut().take(3) {
            p[0] += rng.random_range(5.0..15.0);
            p[1] -= rng.random_range(5.0..15.0);
        }
        let exhaustive = subsets.iter().map(|s| det2(&points, s)).fold(f64::INFINITY, f64::min);
        let est = mcd_estimate(&points, 8, &McdConfig { seed: instance, ..McdConfig::default() }).map_err(|e| e.to_string())?;
        let gap = (est.det_value - exhaustive).abs();
        worst = worst.max(gap);
        if gap > 1e-9 {
            return Err(format!("instance {instance}: FastMCD {} vs exhaustive {exhaustive}", est.det_value));
        }
    }
    within(
        start.elapsed(),
        10,
        format!("20/20 instances match the 495-subset minimum, max gap {worst:.1e}"),
    )
}

fn lid_check() -> Check {
    let start = Instant::now();
    let family = SyntheticLanguage::family(5, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let corpora: BTreeMap<LanguageCode, Vec<String>> = family
        .iter()
        .map(|l| (l.code().clone(), (0..50).map(|_| l.paragraph(&mut rng, 1000)).collect()))
        .collect();
    let model = train_lid(&corpora, &LidConfig::default()).map_err(|e| e.to_string())?;
    let mut held_out = ChaCha8Rng::seed_from_u64(12);
    let mut worst = (f64::INFINITY, String::new());
    for l in &family {
        let hits = (0..1000)
            .filter(|_| model.classify(&l.sample_chars(&mut held_out, 200)).language.as_ref() == Some(l.code()))
            .count();
        let acc = hits as f64 / 1000.0;
        if acc < worst.0 {
            worst = (acc, l.code().to_string());
        }
    }
    let (mut unknown, mut mixes) = (0, 0);
    for a in &family {
        for b in family.iter().filter(|b| b.code() != a.code()) {
            for _ in 0..20 {
                let text = format!("{} {}", a.sample_chars(&mut held_out, 100), b.sample_chars(&mut held_out, 100));
                mixes += 1;
                unknown += usize::from(model.classify(&text).is_unknown());
            }
        }
    }
    let mixed_rate = unknown as f64 / mixes as f64;
    let detail = format!(
        "lowest per-language accuracy {:.1}% ({}); UNKNOWN on {unknown}/{mixes} = {:.1}% of 50/50 mixes",
        worst.0 * 100.0,
        worst.1,
        mixed_rate * 100.0
    );
    if worst.0 < 0.99 || mixed_rate < 0.95 {
        return Err(detail);
    }
    within(start.elapsed(), 30, detail)
}

const TOY_CORPUS: [&str; 5] = [
    "the red fox runs far. the red fox runs home. a blue bird sings",
    "the red fox sleeps. a blue bird sings loud. a blue bird sings again",
    "green hills roll on. green hills roll on. green hills roll on",
    "the red fox runs far. old trees stand tall",
    "old trees stand tall. old trees stand tall. the blue bird sings",
];

/// Brute-force TF-IDF over in-sentence word trigrams: tf = raw count,
/// idf = ln(N/df), score = maximum of tf·idf over documents.
fn brute_force_ranking(docs: &[&str]) -> Vec<(String, f64)> {
    let trigrams: Vec<Vec<String>> = docs
        .iter()
        .map(|d| {
            let mut out = Vec::new();
            for sentence in d.split('.') {
                let words: Vec<&str> = sentence.split_whitespace().collect();
                for i in 0..words.len().saturating_sub(2) {
                    out.push(words[i..i + 3].join(" "));
                }
            }
            out
        })
        .collect();
    let vocabulary: HashSet<&String> = trigrams.iter().flatten().collect();
    let n = docs.len() as f64;
    let mut ranking: Vec<(String, f64)> = vocabulary
        .into_iter()
        .map(|t| {
            let df = trigrams.iter().filter(|d| d.contains(t)).count() as f64;
            let idf = (n / df).ln();
            let score = trigrams
                .iter()
                .map(|d| d.iter().filter(|x| *x == t).count() as f64 * idf)
                .fold(0.0, f64::max);
            (t.clone(), score)
        })
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranking
}

fn tfidf_oracle() -> Check {
    let language = lang("qaa");
    let articles = TOY_CORPUS
        .iter()
        .enumerate()
        .map(|(i, body)| ArticleRecord::new(language.clone(), format!("doc {i}"), *body))
        .collect();
    let corpus = LanguageCorpus::new(language, articles).map_err(|e| e.to_string())?;
    let scored = score_tfidf(&extract_candidates(&corpus).map_err(|e| e.to_string())?);
    let ours: Vec<(String, f64)> = scored.iter().map(|s| (s.phrase(), s.score)).collect();
    let oracle = brute_force_ranking(&TOY_CORPUS);
    if ours.len() != oracle.len() {
        return Err(format!("{} ranked trigrams, oracle has {}", ours.len(), oracle.len()));
    }
    for (i, (a, b)) in ours.iter().zip(&oracle).enumerate() {
        if a.0 != b.0 || (a.1 - b.1).abs() > 1e-12 {
            return Err(format!("rank {i}: {a:?} vs oracle {b:?}"));
        }
    }
    Ok(format!("{} trigrams ranked identically to the brute-force computation", ours.len()))
}

fn trial(id: &str, truth: &str, a: f64, b: f64) -> LanguageTrial {
    LanguageTrial {
        trial_id: id.into(),
        true_language: lang(truth),
        scores: [(lang("aa"), a), (lang("bb"), b)].into_iter().collect(),
        duration_s: None,
    }
}

fn metric_oracles() -> Check {
    let verdicts: Vec<Verdict> = Verdict::ALL
        .iter()
        .zip([853, 58, 75, 14])
        .flat_map(|(&v, n)| std::iter::repeat_n(v, n))
        .collect();
    let d = label_distribution(verdicts).map_err(|e| e.to_string())?;
    let pct: Vec<f64> = Verdict::ALL.iter().map(|&v| d.proportion(v) * 100.0).collect();
    let purity = d.speech_purity.ok_or("no speech purity")? * 100.0;
    for (got, want) in pct.iter().zip([85.3, 5.8, 7.5, 1.4]).chain([(&purity, 93.6)]) {
        if (got - want).abs() > 0.05 {
            return Err(format!("label distribution {pct:?}, purity {purity}"));
        }
    }
    let e = eer(&[(0.8, true), (0.2, true), (0.7, false), (0.1, false)]).map_err(|e| e.to_string())?;
    if (e - 25.0).abs() > 1e-9 {
        return Err(format!("eer {e}"));
    }
    // per language: 0.5·P_miss + 0.5·P_fa; aa: 0.5·1/2 + 0.5·1/2, bb: 0 + 0.5·1/2
    let grid = [trial("1", "aa", 1.0, -1.0), trial("2", "aa", -1.0, 1.0), trial("3", "bb", -1.0, 1.0), trial("4", "bb", 1.0, 1.0)];
    let c = cavg(&grid).map_err(|e| e.to_string())?;
    if (c - 0.375).abs() > 1e-9 {
        return Err(format!("cavg {c}"));
    }
    Ok(format!(
        "distribution {:.1}/{:.1}/{:.1}/{:.1}%, purity {purity:.1}%, eer {e:.1}%, cavg {c}",
        pct[0], pct[1], pct[2], pct[3]
    ))
}

fn service_concurrency(dir: &Path) -> Check {
    let clips: Vec<Clip> = (0..40)
        .map(|i| Clip {
            segment_id: format!("qaa-v{:02}_{:04}", i / 4, i % 4),
            video_id: format!("qaa-v{:02}", i / 4),
            language: lang("qaa"),
            start_s: 0.0,
            end_s: 3.0,
        })
        .collect();
    let tokens = || TokenRegistry::from_pairs((0..4).map(|i| (format!("t{i}"), format!("a{i}"))));
    let log = dir.join("labels.ndjson");
    let open = || -> Result<ValidationService, String> {
        let store = LabelStore::open(&log).map_err(|e| e.to_string())?;
        Ok(ValidationService::new(Catalog::new(clips.clone(), dir.to_path_buf()), tokens(), store, ServiceConfig::default()))
    };
    let service = Arc::new(open()?);
    let verdicts = ["TARGET_SPEECH", "OTHER_LANGUAGE", "NON_SPEECH", "UNSURE"];
    for (i, token) in ["t1", "t2", "t3"].iter().enumerate() {
        let s = service.create_session(Some(token), "qaa", 3).map_err(|e| e.to_string())?;
        for (j, c) in service.next_clips(Some(token), &s.session_id).map_err(|e| e.to_string())?.clips.iter().enumerate() {
            service
                .submit_label(Some(token), &s.session_id, c, verdicts[(i + j) % 4])
                .map_err(|e| e.to_string())?;
        }
    }
    let session = service.create_session(Some("t0"), "qaa", 5).map_err(|e| e.to_string())?;
    let clip = service.next_clips(Some("t0"), &session.session_id).map_err(|e| e.to_string())?.clips[0].clone();
    let barrier = Arc::new(Barrier::new(100));
    let handles: Vec<_> = (0..100)
        .map(|_| {
            let (service, barrier, sid, clip) = (service.clone(), barrier.clone(), session.session_id.clone(), clip.clone());
            std::thread::spawn(move || {
                barrier.wait();
                service.submit_label(Some("t0"), &sid, &clip, "TARGET_SPEECH")
            })
        })
        .collect();
    let results: Vec<Result<_, ServiceError>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let accepted = results.iter().filter(|r| r.is_ok()).count();
    let conflicts = results.iter().filter(|r| matches!(r, Err(ServiceError::Conflict { .. }))).count();
    let stored = service
        .store()
        .snapshot()
        .labels()
        .iter()
        .filter(|l| l.segment_id == clip && l.annotator_id == "a0")
        .count();
    let before = service.language_stats("qaa").map_err(|e| e.to_string())?;
    drop(service);
    let after = open()?.language_stats("qaa").map_err(|e| e.to_string())?;
    if accepted != 1 || conflicts != 99 || stored != 1 {
        return Err(format!("{accepted} accepted, {conflicts} conflicts, {stored} stored"));
    }
    if before != after {
        return Err(format!("stats before restart {before:?} differ from replay {after:?}"));
    }
    Ok(format!(
        "100 concurrent duplicates: 1 stored, 99 conflicts; replay of {} labels gives identical stats",
        after.total
    ))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let first = scratch.path().join("fixture-a");
    let second = scratch.path().join("fixture-b");
    let service_dir = scratch.path().join("service");
    fs::create_dir_all(&service_dir).expect("service dir");

    let mut results: Vec<(&str, Check)> = vec![
        ("pipeline rule fidelity on the synthetic fixture", pipeline_rules(&first)),
        ("robust filter reduces 15% label noise", robust_filter()),
        ("FastMCD equals exhaustive MCD (n=12, d=2, h=8)", mcd_oracle()),
        ("text LID accuracy and mixed-text rejection", lid_check()),
        ("TF-IDF ranking equals brute force", tfidf_oracle()),
        ("metric oracles", metric_oracles()),
        ("validation service duplicate submits and replay", service_concurrency(&service_dir)),
        ("pipeline determinism", determinism(&first, &second)),
    ];
    let violations = cstep_violations();
    results.push((
        "no C-step increased the determinant",
        if violations == 0 {
            Ok("0 violations across all runs above".into())
        } else {
            Err(format!("{violations} violating C-steps"))
        },
    ));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
