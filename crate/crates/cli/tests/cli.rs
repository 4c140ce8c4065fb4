use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voxcrawl_core::LanguageCode;
use voxcrawl_service::{Catalog, Clip, LabelStore, ServiceConfig, TokenRegistry, ValidationService};

fn voxcrawl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxcrawl"))
        .args(args)
        .env_remove("VOXCRAWL_CONFIG")
        .env_remove("VOXCRAWL_PROVIDER_KEY")
        .output()
        .expect("run voxcrawl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the synthetic fixture and returns its config path.
fn fixture(dir: &Path) -> PathBuf {
    let out = voxcrawl(&["fixture", "--out", s(dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("config.toml")
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(voxcrawl(&[]).status.code(), Some(1));
    assert_eq!(voxcrawl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(voxcrawl(&["eval", "median", "--in", "x"]).status.code(), Some(1));
    let out = voxcrawl(&["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--config"));
    assert_eq!(voxcrawl(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[ingest]\nmin_chars = \"many\"\n").unwrap();
    assert_eq!(voxcrawl(&["-c", s(&bad), "ingest"]).status.code(), Some(1));
    fs::write(&bad, "").unwrap();
    assert_eq!(voxcrawl(&["-c", s(&bad), "run", "--from", "filter", "--to", "ingest"]).status.code(), Some(1));
}

#[test]
fn pipeline_commands_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let c = s(&config);

    let out = voxcrawl(&["-c", c, "run", "--to", "segment"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("segment: "));

    // filter needs embeddings, which the embed stage has not written yet
    let out = voxcrawl(&["-c", c, "filter", "fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("embeddings.tsv"), "{}", stderr(&out));

    for args in [vec!["embed"], vec!["filter", "fit"], vec!["assemble"]] {
        let mut full = vec!["-c", c];
        full.extend(args);
        let out = voxcrawl(&full);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let work = dir.path().join("work");
    let manifest = work.join("manifest.tsv");
    let first = fs::read(&manifest).unwrap();

    let out = voxcrawl(&["stats", "--manifest", s(&manifest)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("language\thours\n"));
    assert!(text.contains("Total\t") && text.contains("Average\t"));
    assert_eq!(voxcrawl(&["stats", "--manifest", s(&manifest), "--split", "test"]).status.code(), Some(1));

    // rerunning a stage gives the same output
    assert!(voxcrawl(&["-c", c, "assemble"]).status.success());
    assert_eq!(fs::read(&manifest).unwrap(), first);

    // a different seed is recorded in the outputs
    assert!(voxcrawl(&["-c", c, "assemble", "--seed", "8"]).status.success());
    assert!(fs::read_to_string(&manifest).unwrap().starts_with("# config_digest="));
    assert!(fs::read_to_string(&manifest).unwrap().lines().next().unwrap().ends_with("seed=8"));

    // the fitted model scores an explicit dataset
    let dataset = dir.path().join("dataset.tsv");
    let filter_report = fs::read_to_string(work.join("filter.tsv")).unwrap();
    let rows: Vec<String> = filter_report
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').take(2).collect::<Vec<_>>().join("\t"))
        .collect();
    fs::write(&dataset, rows.join("\n")).unwrap();
    let applied = dir.path().join("applied.tsv");
    let out = voxcrawl(&[
        "filter",
        "apply",
        "--model",
        s(&work.join("rog.model")),
        "--emb",
        s(&work.join("embeddings.tsv")),
        "--dataset",
        s(&dataset),
        "--out",
        s(&applied),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let decisions = |text: &str| -> Vec<String> {
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                format!("{} {}", f[0], f[f.len() - 1])
            })
            .collect()
    };
    assert_eq!(decisions(&fs::read_to_string(&applied).unwrap()), decisions(&filter_report));
}

#[test]
fn provider_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let c = s(&config);
    assert!(voxcrawl(&["-c", c, "run", "--to", "phrases"]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_voxcrawl"))
        .args([
            "-c",
            c,
            "retrieve",
            "--provider",
            "live",
            "--set",
            "retrieval.live.query_template=\"http://127.0.0.1:9/s?q={phrase}&n={max_results}&k={key}\"",
            "--set",
            "retrieval.live.max_retries=0",
        ])
        .env("VOXCRAWL_PROVIDER_KEY", "test")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("phrases.tsv sha256="));
}

#[test]
fn lid_and_phrase_tools() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    assert!(voxcrawl(&["-c", s(&config), "ingest"]).status.success());
    let corpus = dir.path().join("work").join("corpus");
    let files: Vec<PathBuf> = ["qaa", "qab", "qac"].iter().map(|l| corpus.join(format!("{l}.tsv"))).collect();
    let model = dir.path().join("lid.model");
    let mut args = vec!["lid", "train", "--out", s(&model)];
    for f in &files {
        args.extend(["--corpus", s(f)]);
    }
    let out = voxcrawl(&args);
    assert!(out.status.success(), "{}", stderr(&out));

    let text = fs::read_to_string(&files[1]).unwrap();
    let sample: String = text.lines().nth(1).unwrap().split('\t').nth(1).unwrap().chars().take(200).collect();
    let out = voxcrawl(&["lid", "classify", "--model", s(&model), &sample, ""]);
    let lines: Vec<String> = stdout(&out).lines().map(str::to_owned).collect();
    assert!(lines[0].starts_with("qab\t"), "{lines:?}");
    assert!(lines[1].starts_with("UNKNOWN\t"));
    let out = voxcrawl(&["lid", "classify", "--model", s(&model), "--expected", "qab", &sample]);
    assert_eq!(stdout(&out), "true\n");
    let out = voxcrawl(&["lid", "classify", "--model", s(&model), "--expected", "qaa", &sample]);
    assert_eq!(stdout(&out), "false\n");

    let phrases = dir.path().join("phrases.tsv");
    let mut args = vec!["phrases", "mine", "--lid", s(&model), "--top-k", "3", "--out", s(&phrases)];
    let stop = dir.path().join("stopwords");
    args.extend(["--stopwords", s(&stop)]);
    for f in &files {
        args.extend(["--corpus", s(f)]);
    }
    let out = voxcrawl(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let mined = fs::read_to_string(&phrases).unwrap();
    assert_eq!(mined.lines().count(), 9);
    for line in mined.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[2].split(' ').count(), 3);
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn eval(metric: &str, file: &Path) -> serde_json::Value {
    let out = voxcrawl(&["eval", metric, "--in", s(file)]);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn eval_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let trials = write(
        dir.path(),
        "trials.tsv",
        "# hand-scanned cases\n1\taa\taa:1,bb:-1\t3.0\n2\taa\taa:-1,bb:1\t4.0\n3\tbb\taa:-1,bb:1\t12.0\n4\tbb\taa:1,bb:1.5\t19.0\n",
    );
    assert!((eval("cavg", &trials)["cavg"].as_f64().unwrap() - 0.375).abs() < 1e-12);
    let error = eval("error", &trials);
    assert_eq!(error["average"].as_f64().unwrap(), 0.25);
    assert_eq!(error["buckets"][0]["wrong"], 1);
    assert_eq!(error["buckets"][1]["wrong"], 0);
    let eer = eval("eer", &trials)["eer_percent"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&eer));

    let labels = write(
        dir.path(),
        "labels.tsv",
        "s1\ta1\tTARGET_SPEECH\t3\t1\ns1\ta2\tTARGET_SPEECH\t2\t2\ns1\ta3\tOTHER_LANGUAGE\t5\t3\ns2\ta1\tUNSURE\t3\t4\n",
    );
    let purity = eval("purity", &labels);
    assert_eq!(purity["total"], 4);
    assert_eq!(purity["counts"]["TARGET_SPEECH"], 2);
    assert!((purity["speech_purity"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let agreement = eval("agreement", &labels);
    assert_eq!(agreement["pairs"], 3);
    assert_eq!(agreement["agreeing"], 1);

    let broken = write(dir.path(), "broken.tsv", "s1\ta1\tMAYBE\t3\t1\n");
    assert_eq!(voxcrawl(&["eval", "purity", "--in", s(&broken)]).status.code(), Some(2));
    assert_eq!(voxcrawl(&["eval", "purity", "--in", "/nonexistent"]).status.code(), Some(2));
}

#[test]
fn label_export_from_service_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("labels.ndjson");
    {
        let clips = (0..12)
            .map(|i| Clip {
                segment_id: format!("qaa-v00_{i:04}"),
                video_id: "qaa-v00".into(),
                language: LanguageCode::new("qaa").unwrap(),
                start_s: 0.0,
                end_s: 2.0,
            })
            .collect();
        let service = ValidationService::new(
            Catalog::new(clips, dir.path().to_path_buf()),
            TokenRegistry::from_pairs([("tok".to_string(), "ann".to_string())]),
            LabelStore::open(&log).unwrap(),
            ServiceConfig::default(),
        );
        let session = service.create_session(Some("tok"), "qaa", 4).unwrap();
        for clip in service.next_clips(Some("tok"), &session.session_id).unwrap().clips {
            service.submit_label(Some("tok"), &session.session_id, &clip, "NON_SPEECH").unwrap();
        }
    }
    let out_file = dir.path().join("export.tsv");
    let out = voxcrawl(&["labels", "export", "--log", s(&log), "--out", s(&out_file)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&out_file).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().all(|l| l.contains("\tann\tNON_SPEECH\t4\t")));
    assert_eq!(eval("purity", &out_file)["counts"]["NON_SPEECH"], 10);
    let missing = dir.path().join("none.ndjson");
    assert_eq!(voxcrawl(&["labels", "export", "--log", s(&missing)]).status.code(), Some(2));
}
