use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxcrawl_core::evalkit::{
    agreement, cavg, eer, error_rate, label_distribution, read_labels, read_trials, write_labels, CrowdLabel,
    EvalError, LanguageTrial, Verdict, DEFAULT_BUCKETS,
};
use voxcrawl_core::LanguageCode;

use Verdict::*;

fn verdicts(counts: [usize; 4]) -> Vec<Verdict> {
    Verdict::ALL.iter().zip(counts).flat_map(|(&v, n)| std::iter::repeat_n(v, n)).collect()
}

fn label(seg: &str, who: &str, verdict: Verdict) -> CrowdLabel {
    CrowdLabel {
        segment_id: seg.into(),
        annotator_id: who.into(),
        verdict,
        proficiency: 3,
        timestamp: 0,
    }
}

#[test]
fn distribution_of_reconstructed_counts() {
    let d = label_distribution(verdicts([853, 58, 75, 14])).unwrap();
    let pct = d.proportions.map(|p| p * 100.0);
    for (got, want) in pct.iter().zip([85.3, 5.8, 7.5, 1.4]) {
        assert!((got - want).abs() < 0.05, "{got} vs {want}");
    }
    assert!((d.speech_purity.unwrap() * 100.0 - 93.6).abs() < 0.05);
    assert_eq!(d.count(OtherLanguage), 58);
}

#[test]
fn distribution_trivial_cases() {
    let d = label_distribution(verdicts([7, 0, 0, 0])).unwrap();
    assert_eq!(d.proportions, [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(d.speech_purity, Some(1.0));
    let d = label_distribution(verdicts([1, 1, 1, 1])).unwrap();
    assert_eq!(d.proportions, [0.25; 4]);
    assert_eq!(d.speech_purity, Some(0.5));
    assert!(matches!(label_distribution([]), Err(EvalError::NoLabels)));
}

#[test]
fn agreement_cases() {
    let same: Vec<_> = (0..10).flat_map(|i| [label(&format!("s{i}"), "a", TargetSpeech), label(&format!("s{i}"), "b", TargetSpeech)]).collect();
    assert_eq!(agreement(&same).unwrap().rate, 1.0);

    let mut mixed = Vec::new();
    for i in 0..100 {
        let second = if i < 97 { NonSpeech } else { OtherLanguage };
        mixed.push(label(&format!("s{i}"), "a", NonSpeech));
        mixed.push(label(&format!("s{i}"), "b", second));
    }
    let a = agreement(&mixed).unwrap();
    assert_eq!((a.pairs, a.agreeing), (100, 97));
    assert!((a.rate - 0.97).abs() < 1e-12);

    assert!(matches!(
        agreement(&[label("s", "a", TargetSpeech), label("s", "b", Unsure)]),
        Err(EvalError::NoPairs)
    ));
    // three annotators: pairs (a,b) agree, (a,c) and (b,c) do not
    let trio = [label("s", "a", TargetSpeech), label("s", "b", TargetSpeech), label("s", "c", NonSpeech)];
    let a = agreement(&trio).unwrap();
    assert_eq!((a.pairs, a.agreeing), (3, 1));
}

#[test]
fn error_rate_cases() {
    let trials = |wrong_first: usize, wrong_second: usize| -> Vec<(String, bool, f64)> {
        (0..20)
            .map(|i| {
                let (dur, wrong) = if i < 10 { (3.0, i < wrong_first) } else { (12.0, i - 10 < wrong_second) };
                (format!("t{i}"), !wrong, dur)
            })
            .collect()
    };
    let r = error_rate(&trials(0, 0), &DEFAULT_BUCKETS).unwrap();
    assert_eq!(r.average, 0.0);
    assert!(r.buckets.iter().all(|b| b.rate == Some(0.0)));
    let r = error_rate(&trials(1, 0), &DEFAULT_BUCKETS).unwrap();
    assert_eq!(r.buckets[0].rate, Some(0.1));
    assert_eq!(r.buckets[1].rate, Some(0.0));
    assert_eq!(r.average, 0.05);

    assert!(matches!(
        error_rate(&[("x".into(), true, 25.0)], &DEFAULT_BUCKETS),
        Err(EvalError::OutsideBuckets { .. })
    ));
    assert!(error_rate(&[("x".into(), true, 0.0)], &DEFAULT_BUCKETS).is_err());
    let edge = error_rate(&[("x".into(), false, 5.0), ("y".into(), true, 20.0)], &DEFAULT_BUCKETS).unwrap();
    assert_eq!((edge.buckets[0].total, edge.buckets[1].total), (1, 1));
}

#[test]
fn error_rate_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials: Vec<(String, bool, f64)> = (0..100)
        .map(|i| (format!("t{i}"), rng.random_bool(0.8), rng.random_range(0.5..20.0)))
        .collect();
    let r = error_rate(&trials, &DEFAULT_BUCKETS).unwrap();
    let mut short = (0, 0);
    let mut long = (0, 0);
    for (_, ok, d) in &trials {
        let slot = if *d <= 5.0 { &mut short } else { &mut long };
        slot.1 += 1;
        if !ok {
            slot.0 += 1;
        }
    }
    assert_eq!((r.buckets[0].wrong, r.buckets[0].total), short);
    assert_eq!((r.buckets[1].wrong, r.buckets[1].total), long);
    assert_eq!(r.average, (short.0 + long.0) as f64 / 100.0);
}

#[test]
fn eer_cases() {
    let sep = [(0.9, true), (0.8, true), (0.1, false), (0.2, false)];
    assert_eq!(eer(&sep).unwrap(), 0.0);
    let crossed = [(0.8, true), (0.2, true), (0.7, false), (0.1, false)];
    assert!((eer(&crossed).unwrap() - 25.0).abs() < 1e-9);
    assert!(matches!(eer(&[(0.5, true)]), Err(EvalError::SingleClass)));

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let same: Vec<(f64, bool)> = (0..20_000).map(|i| (rng.random::<f64>(), i % 2 == 0)).collect();
    assert!((eer(&same).unwrap() - 50.0).abs() <= 5.0);
}

fn trial(id: &str, truth: &str, a: f64, b: f64) -> LanguageTrial {
    let mut scores = BTreeMap::new();
    scores.insert(LanguageCode::new("aa").unwrap(), a);
    scores.insert(LanguageCode::new("bb").unwrap(), b);
    LanguageTrial {
        trial_id: id.into(),
        true_language: LanguageCode::new(truth).unwrap(),
        scores,
        duration_s: None,
    }
}

#[test]
fn cavg_hand_grids() {
    let perfect = [trial("1", "aa", 5.0, -5.0), trial("2", "aa", 3.0, -1.0), trial("3", "bb", -2.0, 4.0), trial("4", "bb", -1.0, 1.0)];
    assert_eq!(cavg(&perfect).unwrap(), 0.0);
    let inverted = [trial("1", "aa", -5.0, 5.0), trial("2", "aa", -3.0, 1.0), trial("3", "bb", 2.0, -4.0), trial("4", "bb", 1.0, -1.0)];
    assert!((cavg(&inverted).unwrap() - 1.0).abs() < 1e-9);
    // aa: P_miss 1/2, P_fa(aa|bb) 1/2 -> 0.5; bb: P_miss 0, P_fa(bb|aa) 1/2 -> 0.25
    let mixed = [trial("1", "aa", 1.0, -1.0), trial("2", "aa", -1.0, 1.0), trial("3", "bb", -1.0, 1.0), trial("4", "bb", 1.0, 1.0)];
    assert!((cavg(&mixed).unwrap() - 0.375).abs() < 1e-9);

    let mut missing = trial("5", "aa", 1.0, 1.0);
    missing.scores.remove(&LanguageCode::new("bb").unwrap());
    let mut with_gap = mixed.to_vec();
    with_gap.push(missing);
    assert!(matches!(cavg(&with_gap), Err(EvalError::MissingScore { .. })));
}

#[test]
fn cavg_random_scores_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let trials: Vec<LanguageTrial> = (0..10_000)
        .map(|i| {
            let s = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            trial(&i.to_string(), if i % 2 == 0 { "aa" } else { "bb" }, s(&mut rng), s(&mut rng))
        })
        .collect();
    assert!((cavg(&trials).unwrap() - 0.5).abs() <= 0.05);
}

#[test]
fn label_and_trial_files() {
    let labels = vec![label("s1", "ann", TargetSpeech), CrowdLabel { proficiency: 5, timestamp: 1_700_000_000_000, ..label("s2", "b", Unsure) }];
    let mut buf = Vec::new();
    write_labels(&labels, &mut buf).unwrap();
    assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
    assert!(read_labels("s\ta\tTARGET_SPEECH\t6\t0\n".as_bytes()).is_err());
    assert!(read_labels("s\ta\tMAYBE\t3\t0\n".as_bytes()).is_err());

    let trials = read_trials("t1\taa\taa:1.5,bb:-2\t3.2\nt2\tbb\taa:0,bb:1\n".as_bytes()).unwrap();
    assert_eq!(trials[0].duration_s, Some(3.2));
    assert_eq!(trials[0].predicted().unwrap().as_ref(), "aa");
    assert_eq!(trials[1].duration_s, None);
    assert!(read_trials("t1\taa\taa:x\n".as_bytes()).is_err());
}

fn verdict() -> impl Strategy<Value = Verdict> {
    prop::sample::select(Verdict::ALL.to_vec())
}

proptest! {
    #[test]
    fn proportions_sum_to_one(vs in prop::collection::vec(verdict(), 1..300)) {
        let d = label_distribution(vs).unwrap();
        prop_assert!((d.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn agreement_ignores_order(raw in prop::collection::vec((0usize..6, 0usize..4, verdict()), 2..60), seed in any::<u64>()) {
        let labels: Vec<CrowdLabel> = raw.iter().map(|(s, a, v)| label(&format!("s{s}"), &format!("a{a}"), *v)).collect();
        let mut shuffled = labels.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        match (agreement(&labels), agreement(&shuffled)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed success"),
        }
    }

    #[test]
    fn eer_invariant_under_monotone_transform(raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80)) {
        prop_assume!(raw.iter().any(|t| t.1) && raw.iter().any(|t| !t.1));
        let mapped: Vec<(f64, bool)> = raw.iter().map(|&(s, t)| (s.exp() * 3.0 + 1.0, t)).collect();
        prop_assert!((eer(&raw).unwrap() - eer(&mapped).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cavg_invariant_under_language_relabeling(raw in prop::collection::vec((any::<bool>(), -2.0f64..2.0, -2.0f64..2.0), 4..60)) {
        prop_assume!(raw.iter().any(|t| t.0) && raw.iter().any(|t| !t.0));
        let trials: Vec<_> = raw.iter().enumerate().map(|(i, &(a, x, y))| trial(&i.to_string(), if a { "aa" } else { "bb" }, x, y)).collect();
        let swapped: Vec<_> = raw.iter().enumerate().map(|(i, &(a, x, y))| trial(&i.to_string(), if a { "bb" } else { "aa" }, y, x)).collect();
        prop_assert!((cavg(&trials).unwrap() - cavg(&swapped).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn average_error_is_weighted_bucket_mean(raw in prop::collection::vec((any::<bool>(), 0.01f64..20.0), 1..100)) {
        let trials: Vec<_> = raw.iter().enumerate().map(|(i, &(ok, d))| (i.to_string(), ok, d)).collect();
        let r = error_rate(&trials, &DEFAULT_BUCKETS).unwrap();
        let weighted: f64 = r.buckets.iter().filter_map(|b| b.rate.map(|x| x * b.total as f64)).sum::<f64>() / trials.len() as f64;
        prop_assert!((weighted - r.average).abs() < 1e-12);
    }
}
