use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::detection::LanguageTrial;
use super::labels::CrowdLabel;
use super::EvalError;
use crate::lang::LanguageCode;
use crate::textio::data_lines;

/// Label export: `segment_id<TAB>annotator_id<TAB>verdict<TAB>proficiency<TAB>timestamp`.
pub fn write_labels<W: Write>(labels: &[CrowdLabel], mut out: W) -> std::io::Result<()> {
    for l in labels {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            l.segment_id, l.annotator_id, l.verdict, l.proficiency, l.timestamp
        )?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(input: R) -> Result<Vec<CrowdLabel>, EvalError> {
    let mut labels = Vec::new();
    for item in data_lines(input) {
        let (line, text) = item?;
        let err = |message: String| EvalError::Format { line, message };
        let fields: Vec<&str> = text.split('\t').collect();
        let [segment_id, annotator_id, verdict, proficiency, timestamp] = fields.as_slice() else {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        };
        let proficiency: u8 = proficiency
            .parse()
            .ok()
            .filter(|p| (1..=5).contains(p))
            .ok_or_else(|| err(format!("proficiency must be 1-5, got {proficiency:?}")))?;
        labels.push(CrowdLabel {
            segment_id: segment_id.to_string(),
            annotator_id: annotator_id.to_string(),
            verdict: verdict.parse().map_err(err)?,
            proficiency,
            timestamp: timestamp.parse().map_err(|_| err(format!("bad timestamp {timestamp:?}")))?,
        });
    }
    Ok(labels)
}

/// Trial file: `trial_id<TAB>true_lang<TAB>lang:score,...[<TAB>duration_s]`.
pub fn read_trials<R: BufRead>(input: R) -> Result<Vec<LanguageTrial>, EvalError> {
    let mut trials = Vec::new();
    for item in data_lines(input) {
        let (line, text) = item?;
        let err = |message: String| EvalError::Format { line, message };
        let fields: Vec<&str> = text.split('\t').collect();
        let (id, truth, scores, duration) = match fields.as_slice() {
            [id, truth, scores] => (id, truth, scores, None),
            [id, truth, scores, d] => (id, truth, scores, Some(*d)),
            _ => return Err(err(format!("expected 3 or 4 fields, found {}", fields.len()))),
        };
        let mut map = BTreeMap::new();
        for cell in scores.split(',') {
            let (lang, value) = cell.split_once(':').ok_or_else(|| err(format!("bad score cell {cell:?}")))?;
            let lang = LanguageCode::new(lang).map_err(|e| err(e.to_string()))?;
            let value: f64 = value
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("bad score {value:?}")))?;
            if map.insert(lang, value).is_some() {
                return Err(err(format!("duplicate language in {cell:?}")));
            }
        }
        trials.push(LanguageTrial {
            trial_id: id.to_string(),
            true_language: LanguageCode::new(truth).map_err(|e| err(e.to_string()))?,
            scores: map,
            duration_s: duration
                .map(|d| d.parse::<f64>().map_err(|_| err(format!("bad duration {d:?}"))))
                .transpose()?,
        });
    }
    Ok(trials)
}
