use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::rog::RogModel;
use super::RobustError;
use crate::lang::LanguageCode;

/// Threshold on posterior-at-own-label that best equalizes the rate of
/// incorrect segments kept (FPR) and correct segments removed (FNR).
/// Candidates are the observed scores plus 0 and a value above 1; ties go
/// to the smaller threshold.
pub fn select_threshold(scores: &[f64], correct: &[bool]) -> Result<f64, RobustError> {
    if scores.len() != correct.len() {
        return Err(RobustError::LengthMismatch(scores.len(), correct.len()));
    }
    let n_correct = correct.iter().filter(|&&c| c).count() as i128;
    let n_incorrect = correct.len() as i128 - n_correct;
    if n_correct == 0 || n_incorrect == 0 {
        return Err(RobustError::OneSidedLabels);
    }
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.extend([0.0, 1.0 + 1e-9]);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best: Option<(i128, f64)> = None;
    for &tau in &candidates {
        let false_pos = scores.iter().zip(correct).filter(|&(&s, &c)| !c && s >= tau).count() as i128;
        let false_neg = scores.iter().zip(correct).filter(|&(&s, &c)| c && s < tau).count() as i128;
        // |fp/I − fn/C| compared exactly as |fp·C − fn·I|
        let gap = (false_pos * n_correct - false_neg * n_incorrect).abs();
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, tau));
        }
    }
    Ok(best.expect("candidates are non-empty").1)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterReport {
    pub kept: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    /// Posterior of each segment's assigned label.
    pub scores: BTreeMap<String, f64>,
    pub est_fpr: Option<f64>,
    pub est_fnr: Option<f64>,
    /// Share of incorrectly labeled segments among labeled inputs.
    pub noise_before: Option<f64>,
    /// Share of incorrectly labeled segments among labeled kept segments.
    pub noise_after: Option<f64>,
}

/// Keeps segments whose posterior at their assigned language is at least
/// `tau`. `truth` marks segments known (e.g. from crowd labels) to be
/// correctly labeled or not, for the report's rates.
pub fn filter(
    segments: &[(String, LanguageCode)],
    embeddings: &BTreeMap<String, Vec<f64>>,
    model: &RogModel,
    tau: f64,
    truth: Option<&HashMap<String, bool>>,
) -> Result<FilterReport, RobustError> {
    let missing: Vec<&str> = segments
        .iter()
        .filter(|(id, _)| !embeddings.contains_key(id))
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(RobustError::MissingEmbeddings {
            count: missing.len(),
            ids: missing.join(", "),
        });
    }
    let mut report = FilterReport::default();
    for (id, language) in segments {
        let class = model.class_index(language).ok_or_else(|| RobustError::UnknownClass {
            segment: id.clone(),
            label: language.to_string(),
        })?;
        let score = model.posterior(&embeddings[id])?[class];
        report.scores.insert(id.clone(), score);
        if score >= tau {
            report.kept.insert(id.clone());
        } else {
            report.removed.insert(id.clone());
        }
    }
    if let Some(truth) = truth {
        let labeled: Vec<(&String, bool)> = segments
            .iter()
            .filter_map(|(id, _)| truth.get(id).map(|&ok| (id, ok)))
            .collect();
        let share = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let incorrect = labeled.iter().filter(|(_, ok)| !ok).count();
        let correct = labeled.len() - incorrect;
        let kept: Vec<bool> = labeled.iter().filter(|(id, _)| report.kept.contains(*id)).map(|&(_, ok)| ok).collect();
        let kept_incorrect = kept.iter().filter(|ok| !**ok).count();
        let removed_correct = correct - (kept.len() - kept_incorrect);
        report.est_fpr = share(kept_incorrect, incorrect);
        report.est_fnr = share(removed_correct, correct);
        report.noise_before = share(incorrect, labeled.len());
        report.noise_after = share(kept_incorrect, kept.len());
    }
    Ok(report)
}
