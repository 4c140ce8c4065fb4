use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use voxcrawl_core::assembly::{read_manifest, Split};
use voxcrawl_core::config::Config;
use voxcrawl_core::pipeline::{ErrorKind, Pipeline, Stage, EMBEDDINGS, MANIFEST, SEGMENTS, STATS, VIDEOS};
use voxcrawl_core::synth::fixture::{write_fixture, FixtureSpec};
use voxcrawl_core::textio::Provenance;

fn fixture(dir: &Path) -> Config {
    let summary = write_fixture(dir, &FixtureSpec::default()).unwrap();
    Config::load(&summary.config_path, &[]).unwrap()
}

fn outputs(work: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![work.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    files
}

#[test]
fn full_run_produces_a_valid_stamped_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let digest = config.digest();
    let p = Pipeline::new(config).unwrap();
    let reports = p.run(Stage::Ingest, Stage::Assemble).unwrap();
    assert_eq!(reports.len(), 7);

    let manifest = read_manifest(BufReader::new(fs::File::open(p.work_path(MANIFEST)).unwrap())).unwrap();
    let train = manifest.iter().filter(|e| e.split == Split::Train).count();
    let eval = manifest.len() - train;
    assert!(train > 0 && eval > 0, "train {train} eval {eval}");
    assert!(manifest.iter().all(|e| (2.0..=20.0).contains(&e.segment.duration_s)));

    let files = outputs(&p.work_path(""));
    assert!(files.len() >= 12);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        let header = Provenance::parse_header(text.lines().next().unwrap())
            .unwrap_or_else(|| panic!("{} has no provenance header", f.display()));
        assert_eq!(header.config_digest, digest);
        assert_eq!(header.seed, 7);
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = Pipeline::new(fixture(a.path())).unwrap();
    let pb = Pipeline::new(fixture(b.path())).unwrap();
    pa.run(Stage::Ingest, Stage::Assemble).unwrap();
    pb.run(Stage::Ingest, Stage::Embed).unwrap();
    pb.run(Stage::Filter, Stage::Assemble).unwrap();
    // and an idempotent rerun of the tail
    pb.run(Stage::Segment, Stage::Assemble).unwrap();
    for name in [VIDEOS, SEGMENTS, EMBEDDINGS, MANIFEST, STATS] {
        assert_eq!(
            fs::read(pa.work_path(name)).unwrap(),
            fs::read(pb.work_path(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn missing_input_is_a_precondition_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(fixture(dir.path())).unwrap();
    let err = p.run(Stage::Filter, Stage::Assemble).unwrap_err();
    assert_eq!(err.stage, Stage::Filter);
    assert_eq!(err.kind, ErrorKind::Data);
    assert_eq!(err.kind.exit_code(), 2);
    assert!(err.message.contains(EMBEDDINGS), "{}", err.message);
    assert!(err.to_string().contains("(missing)"));
}

#[test]
fn data_errors_carry_input_digests() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(fixture(dir.path())).unwrap();
    p.run(Stage::Ingest, Stage::Segment).unwrap();
    fs::write(p.work_path(SEGMENTS), "broken line\n").unwrap();
    let err = p.run_stage(Stage::Embed).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Data);
    let seg = err.inputs.iter().find(|i| i.path.ends_with(SEGMENTS)).unwrap();
    assert_eq!(seg.sha256.as_deref().map(str::len), Some(64));
    // outputs of completed stages stay in place
    assert!(p.work_path(VIDEOS).is_file());
}

#[test]
fn reversed_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(fixture(dir.path())).unwrap();
    let err = p.run(Stage::Assemble, Stage::Ingest).unwrap_err();
    assert_eq!(err.kind.exit_code(), 1);
}

#[test]
fn broken_fixture_provider_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    fs::write(dir.path().join("search.tsv"), "only\ttwo\n").unwrap();
    let p = Pipeline::new(config).unwrap();
    p.run(Stage::Ingest, Stage::Phrases).unwrap();
    let err = p.run_stage(Stage::Retrieve).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Data);
    assert!(err.message.contains("search.tsv"), "{}", err.message);
}

#[test]
fn overlapping_videos_never_cross_splits() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(fixture(dir.path())).unwrap();
    p.run(Stage::Ingest, Stage::Assemble).unwrap();
    let manifest = read_manifest(BufReader::new(fs::File::open(p.work_path(MANIFEST)).unwrap())).unwrap();
    let videos = |split| -> BTreeSet<String> {
        manifest.iter().filter(|e| e.split == split).map(|e| e.segment.video_id.clone()).collect()
    };
    assert!(videos(Split::Train).is_disjoint(&videos(Split::Eval)));
}
