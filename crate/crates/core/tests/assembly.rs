use std::collections::HashSet;

use proptest::prelude::*;
use voxcrawl_core::assembly::{
    build_eval, build_train, make_manifest, read_manifest, stats, write_manifest, write_stats, EvalSelection,
    SegmentRecord, Split,
};
use voxcrawl_core::evalkit::{CrowdLabel, Verdict};
use voxcrawl_core::LanguageCode;

fn seg(id: &str, video: &str, channel: &str, lang: &str, dur: f64) -> SegmentRecord {
    SegmentRecord {
        segment_id: id.into(),
        video_id: video.into(),
        channel_id: channel.into(),
        language: LanguageCode::new(lang).unwrap(),
        duration_s: dur,
    }
}

fn label(seg: &str, who: &str, verdict: Verdict) -> CrowdLabel {
    CrowdLabel {
        segment_id: seg.into(),
        annotator_id: who.into(),
        verdict,
        proficiency: 4,
        timestamp: 1,
    }
}

#[test]
fn eligibility_rules() {
    let segments = vec![
        seg("s1", "v1", "c1", "et", 5.0),
        seg("s2", "v2", "c1", "et", 5.0),
        seg("s3", "v3", "c1", "et", 5.0),
        seg("s4", "v4", "c1", "et", 5.0),
        seg("s5", "v5", "c1", "et", 5.0),
    ];
    let labels = vec![
        label("s1", "a", Verdict::TargetSpeech),
        label("s1", "b", Verdict::TargetSpeech),
        label("s2", "a", Verdict::TargetSpeech),
        label("s2", "b", Verdict::OtherLanguage),
        label("s3", "a", Verdict::TargetSpeech),
        label("s3", "a", Verdict::TargetSpeech),
        label("s4", "a", Verdict::TargetSpeech),
        label("s4", "b", Verdict::TargetSpeech),
        label("s4", "c", Verdict::Unsure),
        label("s5", "a", Verdict::TargetSpeech),
        label("s5", "b", Verdict::TargetSpeech),
        label("s5", "c", Verdict::TargetSpeech),
    ];
    let eval = build_eval(&segments, &labels, &EvalSelection::default());
    let ids: Vec<&str> = eval.iter().map(|s| s.segment_id.as_str()).collect();
    assert_eq!(ids, ["s1", "s5"]);
}

fn confirmed_pool(n: usize, lang: &str) -> (Vec<SegmentRecord>, Vec<CrowdLabel>) {
    let segments: Vec<_> = (0..n).map(|i| seg(&format!("{lang}{i:03}"), &format!("{lang}v{i}"), "c", lang, 4.0)).collect();
    let labels = segments
        .iter()
        .flat_map(|s| [label(&s.segment_id, "a", Verdict::TargetSpeech), label(&s.segment_id, "b", Verdict::TargetSpeech)])
        .collect();
    (segments, labels)
}

#[test]
fn cap_selects_exactly_one_hundred_deterministically() {
    let (segments, labels) = confirmed_pool(150, "et");
    let cfg = EvalSelection { seed: 7, ..EvalSelection::default() };
    let eval = build_eval(&segments, &labels, &cfg);
    assert_eq!(eval.len(), 100);
    assert_eq!(eval, build_eval(&segments, &labels, &cfg));
    let other = build_eval(&segments, &labels, &EvalSelection { seed: 8, ..cfg });
    assert_ne!(eval, other);
}

#[test]
fn video_level_removal() {
    let mut segments: Vec<_> = (0..10).map(|i| seg(&format!("v_{i}"), "V", "C", "et", 3.0)).collect();
    segments.push(seg("w_0", "W", "C", "et", 3.0));
    let eval = vec![segments[3].clone()];
    let split = build_train(&segments, &eval, false);
    assert_eq!(split.train.iter().map(|s| s.segment_id.as_str()).collect::<Vec<_>>(), ["w_0"]);
    assert_eq!(split.removed.len(), 9);
    assert!(split.leaking_channels.contains("C"));

    let strict = build_train(&segments, &eval, true);
    assert!(strict.train.is_empty());
    assert!(strict.leaking_channels.is_empty());

    assert_eq!(build_train(&segments, &[], false).train, segments);
    let all_eval: Vec<_> = segments.clone();
    assert!(build_train(&segments, &all_eval, false).train.is_empty());
}

#[test]
fn manifest_round_trip_and_disjointness_check() {
    let (segments, labels) = confirmed_pool(5, "et");
    let mut all = segments.clone();
    all.push(seg("x1", "et0v0", "c", "et", 9.5)); // shares a video with an eval segment
    all.push(seg("x2", "other", "c", "et", 9.5));
    let eval = build_eval(&all, &labels, &EvalSelection::default());
    let split = build_train(&all, &eval, false);
    let manifest = make_manifest(&split.train, &eval).unwrap();
    let mut buf = Vec::new();
    write_manifest(&manifest, &mut buf).unwrap();
    assert_eq!(read_manifest(buf.as_slice()).unwrap(), manifest);
    assert!(make_manifest(&[seg("a", "V", "c", "et", 3.0)], &[seg("b", "V", "c", "et", 3.0)]).is_err());
    assert!(make_manifest(&[seg("a", "V", "c", "et", 3.0)], &[seg("a", "W", "c", "et", 3.0)]).is_err());
}

#[test]
fn stats_cases() {
    let s = stats(&[seg("a", "v", "c", "et", 1800.0), seg("b", "v", "c", "et", 1800.0)]);
    assert_eq!(s.hours[&LanguageCode::new("et").unwrap()], 1.0);
    assert_eq!(s.total_hours, 1.0);
    let empty = stats(&[]);
    assert!(empty.hours.is_empty());
    assert_eq!((empty.total_hours, empty.average_hours), (0.0, 0.0));
    let mut out = Vec::new();
    write_stats(&empty, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "language\thours\nTotal\t0.000\nAverage\t0.000\n");
}

/// Per-language hours of the published training set, in whole hours.
const PUBLISHED_HOURS: [u32; 107] = [
    10, 108, 71, 81, 59, 69, 155, 58, 58, 29, 133, 55, 105, 44, 50, 41, // Abkhazian .. Burmese
    88, 6, 41, 44, 118, 67, 28, 40, 49, 10, 38, 67, 33, 67, 72, 98, // Catalan .. Georgian
    39, 66, 2, 46, 96, 93, 12, 96, 81, 73, 92, 40, 3, 51, 56, 53, // German .. Javanese
    46, 78, 77, 42, 67, 42, 90, 82, 75, 112, 109, 83, 47, 66, 4, 34, // Kannada .. Maori
    85, 71, 72, 107, 57, 15, 54, 56, 80, 64, 47, 65, 73, 15, 3, 50, // Marathi .. Serbian
    30, 84, 67, 40, 121, 103, 39, 64, 64, 34, 93, 64, 51, 103, 77, 61, // Shona .. Thai
    101, 59, 85, 52, 42, 45, 64, 11, 76, 46, 94, // Tibetan .. Yoruba
];

#[test]
fn published_table_totals() {
    let segments: Vec<SegmentRecord> = PUBLISHED_HOURS
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let code: String = [b'a' + (i / 26) as u8, b'a' + (i % 26) as u8, b'x'].iter().map(|&b| b as char).collect();
            seg(&format!("s{i}"), &format!("v{i}"), "c", &code, h as f64 * 3600.0)
        })
        .collect();
    let s = stats(&segments);
    assert_eq!(s.hours.len(), 107);
    assert_eq!(s.average_hours.round(), 62.0);
    // the published total is 6628; whole-hour rows sum to 6629, within per-row rounding
    assert_eq!(s.total_hours, 6629.0);
    assert!((s.total_hours - 6628.0).abs() <= 0.5 * 107.0);
    assert_eq!((6628.0f64 / 107.0).round(), 62.0);
}

fn records() -> impl Strategy<Value = Vec<SegmentRecord>> {
    prop::collection::vec((0usize..12, 0usize..4, 0usize..3, 2.0f64..20.0), 1..80).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (v, c, l, d))| seg(&format!("s{i}"), &format!("v{v}"), &format!("c{c}"), ["aa", "bb", "cc"][l], d))
            .collect()
    })
}

proptest! {
    #[test]
    fn split_invariants(segments in records(), picks in prop::collection::vec((any::<prop::sample::Index>(), 0usize..3), 0..200), seed in any::<u64>(), cap in 1usize..10) {
        let annotators = ["a", "b", "c"];
        let labels: Vec<CrowdLabel> = picks
            .iter()
            .map(|(idx, who)| {
                let s = idx.get(&segments);
                let verdict = if who % 2 == 0 || s.duration_s > 5.0 { Verdict::TargetSpeech } else { Verdict::NonSpeech };
                label(&s.segment_id, annotators[*who], verdict)
            })
            .collect();
        let cfg = EvalSelection { per_language_cap: cap, min_confirmations: 2, seed };
        let eval = build_eval(&segments, &labels, &cfg);
        prop_assert_eq!(&eval, &build_eval(&segments, &labels, &cfg));
        for lang in ["aa", "bb", "cc"] {
            prop_assert!(eval.iter().filter(|s| s.language.as_ref() == lang).count() <= cap);
        }
        let split = build_train(&segments, &eval, false);
        let manifest = make_manifest(&split.train, &eval).unwrap();
        let eval_videos: HashSet<_> = manifest.iter().filter(|e| e.split == Split::Eval).map(|e| &e.segment.video_id).collect();
        prop_assert!(manifest.iter().filter(|e| e.split == Split::Train).all(|e| !eval_videos.contains(&e.segment.video_id)));
        let ids = |v: &[SegmentRecord]| v.iter().map(|s| s.segment_id.clone()).collect::<HashSet<_>>();
        let (t, e, r) = (ids(&split.train), ids(&eval), ids(&split.removed));
        prop_assert!(t.is_disjoint(&e) && t.is_disjoint(&r) && e.is_disjoint(&r));
        prop_assert_eq!(t.len() + e.len() + r.len(), segments.len());
    }
}
