use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::EvalError;
use crate::lang::LanguageCode;

/// Duration buckets `(lo, hi]` in seconds.
pub const DEFAULT_BUCKETS: [(f64, f64); 2] = [(0.0, 5.0), (5.0, 20.0)];

/// One test utterance scored against every candidate language.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageTrial {
    pub trial_id: String,
    pub true_language: LanguageCode,
    /// Log-likelihood-ratio scores; a language is detected when its score is ≥ 0.
    pub scores: BTreeMap<LanguageCode, f64>,
    pub duration_s: Option<f64>,
}

impl LanguageTrial {
    /// Highest-scoring language, ties to the smaller code.
    pub fn predicted(&self) -> Option<&LanguageCode> {
        self.scores
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(l, _)| l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketError {
    pub lo: f64,
    pub hi: f64,
    pub wrong: u64,
    pub total: u64,
    /// `None` for an empty bucket.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRates {
    pub buckets: Vec<BucketError>,
    pub average: f64,
}

/// Classification error per duration bucket and over all trials.
pub fn error_rate(trials: &[(String, bool, f64)], buckets: &[(f64, f64)]) -> Result<ErrorRates, EvalError> {
    if trials.is_empty() {
        return Err(EvalError::NoTrials);
    }
    let mut out: Vec<BucketError> = buckets
        .iter()
        .map(|&(lo, hi)| BucketError {
            lo,
            hi,
            wrong: 0,
            total: 0,
            rate: None,
        })
        .collect();
    for (id, correct, duration) in trials {
        let bucket = out
            .iter_mut()
            .find(|b| *duration > b.lo && *duration <= b.hi)
            .ok_or_else(|| EvalError::OutsideBuckets {
                trial: id.clone(),
                duration_s: *duration,
            })?;
        bucket.total += 1;
        bucket.wrong += u64::from(!correct);
    }
    for b in &mut out {
        b.rate = (b.total > 0).then(|| b.wrong as f64 / b.total as f64);
    }
    let wrong: u64 = out.iter().map(|b| b.wrong).sum();
    Ok(ErrorRates {
        buckets: out,
        average: wrong as f64 / trials.len() as f64,
    })
}

/// Equal error rate in percent, read off the convex hull of the ROC (the
/// point where the hull crosses P_miss = P_fa).
pub fn eer(trials: &[(f64, bool)]) -> Result<f64, EvalError> {
    let n_tar = trials.iter().filter(|t| t.1).count();
    let n_non = trials.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(EvalError::SingleClass);
    }
    if let Some(t) = trials.iter().find(|t| !t.0.is_finite()) {
        return Err(EvalError::BadTrial {
            trial: format!("score {}", t.0),
            message: "non-finite score".into(),
        });
    }
    let mut sorted = trials.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // operating points (P_fa, P_miss) for thresholds at and between scores
    let mut points = vec![(1.0, 0.0)];
    let (mut miss, mut fa) = (0usize, n_non);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                miss += 1;
            } else {
                fa -= 1;
            }
            i += 1;
        }
        points.push((fa as f64 / n_non as f64, miss as f64 / n_tar as f64));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in points {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    for w in hull.windows(2) {
        let ((x1, y1), (x2, y2)) = (w[0], w[1]);
        let (g1, g2) = (y1 - x1, y2 - x2);
        if g1 >= 0.0 && g2 <= 0.0 {
            if g1 == g2 {
                return Ok(100.0 * x1);
            }
            let t = g1 / (g1 - g2);
            return Ok(100.0 * (x1 + t * (x2 - x1)));
        }
    }
    unreachable!("the ROC hull runs from P_fa = 0 to P_fa = 1 and crosses the diagonal")
}

/// Average detection cost with C_miss = C_fa = 1 and P_target = 0.5, using
/// hard decisions `score ≥ 0`.
pub fn cavg(trials: &[LanguageTrial]) -> Result<f64, EvalError> {
    const C_MISS: f64 = 1.0;
    const C_FA: f64 = 1.0;
    const P_TARGET: f64 = 0.5;
    let languages: BTreeSet<&LanguageCode> = trials.iter().flat_map(|t| t.scores.keys()).collect();
    if languages.len() < 2 {
        return Err(EvalError::TooFewLanguages(languages.len()));
    }
    for t in trials {
        if let Some(l) = languages.iter().find(|l| !t.scores.contains_key(**l)) {
            return Err(EvalError::MissingScore {
                trial: t.trial_id.clone(),
                language: l.to_string(),
            });
        }
        if !languages.contains(&t.true_language) {
            return Err(EvalError::BadTrial {
                trial: t.trial_id.clone(),
                message: format!("true language {} is not scored", t.true_language),
            });
        }
    }
    // accept[(true, detector)] = (accepted, total)
    let mut accept: BTreeMap<(&LanguageCode, &LanguageCode), (u64, u64)> = BTreeMap::new();
    for t in trials {
        for (l, &s) in &t.scores {
            let cell = accept.entry((&t.true_language, l)).or_default();
            cell.0 += u64::from(s >= 0.0);
            cell.1 += 1;
        }
    }
    let rate = |truth: &LanguageCode, detector: &LanguageCode| -> Result<f64, EvalError> {
        let (a, n) = accept.get(&(truth, detector)).copied().unwrap_or((0, 0));
        if n == 0 {
            return Err(EvalError::NoTrialsFor(truth.to_string()));
        }
        Ok(a as f64 / n as f64)
    };
    let others = (languages.len() - 1) as f64;
    let mut total = 0.0;
    for &target in &languages {
        let p_miss = 1.0 - rate(target, target)?;
        let mut fa = 0.0;
        for &non in languages.iter().filter(|l| **l != target) {
            fa += rate(non, target)?;
        }
        total += C_MISS * P_TARGET * p_miss + C_FA * (1.0 - P_TARGET) * fa / others;
    }
    Ok(total / languages.len() as f64)
}
