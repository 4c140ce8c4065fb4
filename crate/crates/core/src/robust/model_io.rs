use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::rog::RogModel;
use super::RobustError;
use crate::embed::LdaProjection;
use crate::lang::LanguageCode;
use crate::textio::data_lines;

const MAGIC: &str = "voxcrawl-rog 1";

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Line format: magic, `dim`, `classes`, one `prior`/`mean` line per class,
/// `scatter` rows, `threshold` (a number or `none`), then an optional
/// `projection <input_dim>` block of basis rows and `ratios`.
pub fn write_model<W: Write>(model: &RogModel, mut out: W) -> std::io::Result<()> {
    let d = model.pooled_scatter.nrows();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "dim {d}")?;
    let classes: Vec<&str> = model.classes.iter().map(|c| c.as_ref()).collect();
    writeln!(out, "classes {}", classes.join(" "))?;
    for ((class, prior), mean) in model.classes.iter().zip(&model.priors).zip(&model.means) {
        writeln!(out, "prior {class} {prior}")?;
        writeln!(out, "mean {class} {}", join(mean.iter().copied()))?;
    }
    for row in model.pooled_scatter.row_iter() {
        writeln!(out, "scatter {}", join(row.iter().copied()))?;
    }
    match model.threshold {
        Some(t) => writeln!(out, "threshold {t}")?,
        None => writeln!(out, "threshold none")?,
    }
    if let Some(p) = &model.projection {
        writeln!(out, "projection {} {}", p.input_dim(), p.regularized)?;
        for row in p.basis.row_iter() {
            writeln!(out, "basis {}", join(row.iter().copied()))?;
        }
        writeln!(out, "ratios {}", join(p.ratios.iter().copied()))?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(input: R) -> Result<RogModel, RobustError> {
    let mut lines = data_lines(input).peekable();
    let mut line_no = 0;
    let mut next = |expect: &str| -> Result<(usize, String), RobustError> {
        match lines.next() {
            Some(item) => {
                let (n, text) = item?;
                line_no = n;
                let rest = if expect.is_empty() {
                    text
                } else {
                    text.strip_prefix(expect)
                        .and_then(|r| r.strip_prefix(' '))
                        .ok_or_else(|| RobustError::Format {
                            line: n,
                            message: format!("expected `{expect}` line"),
                        })?
                        .to_owned()
                };
                Ok((n, rest))
            }
            None => Err(RobustError::Format {
                line: line_no + 1,
                message: format!("unexpected end of file, expected `{expect}`"),
            }),
        }
    };
    let err = |line: usize, message: String| RobustError::Format { line, message };
    let nums = |line: usize, s: &str| -> Result<Vec<f64>, RobustError> {
        s.split(',')
            .map(|v| v.parse::<f64>().map_err(|e| err(line, format!("bad number {v:?}: {e}"))))
            .collect()
    };

    let (n, magic) = next("")?;
    if magic != MAGIC {
        return Err(err(n, format!("not a model file (expected {MAGIC:?})")));
    }
    let (n, dim) = next("dim")?;
    let d: usize = dim.parse().map_err(|_| err(n, "bad dim".into()))?;
    let (n, class_line) = next("classes")?;
    let classes = class_line
        .split(' ')
        .map(|c| LanguageCode::new(c).map_err(|e| err(n, e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut priors = Vec::new();
    let mut means = Vec::new();
    for class in &classes {
        let (n, p) = next("prior")?;
        let value = p
            .strip_prefix(class.as_ref())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| err(n, format!("expected prior for {class}")))?;
        priors.push(value);
        let (n, m) = next("mean")?;
        let values = m
            .strip_prefix(class.as_ref())
            .map(str::trim)
            .ok_or_else(|| err(n, format!("expected mean for {class}")))?;
        let v = nums(n, values)?;
        if v.len() != d {
            return Err(err(n, format!("mean has {} values, expected {d}", v.len())));
        }
        means.push(DVector::from_vec(v));
    }
    let mut scatter = Vec::with_capacity(d * d);
    for _ in 0..d {
        let (n, row) = next("scatter")?;
        let v = nums(n, &row)?;
        if v.len() != d {
            return Err(err(n, format!("scatter row has {} values, expected {d}", v.len())));
        }
        scatter.extend(v);
    }
    let (n, t) = next("threshold")?;
    let threshold = match t.as_str() {
        "none" => None,
        v => Some(v.parse::<f64>().map_err(|_| err(n, format!("bad threshold {v:?}")))?),
    };
    let projection = match next("projection") {
        Ok((n, header)) => {
            let (input_dim, regularized) = header
                .split_once(' ')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<bool>().ok()?)))
                .ok_or_else(|| err(n, "bad projection header".into()))?;
            let mut basis = Vec::with_capacity(input_dim * d);
            for _ in 0..input_dim {
                let (n, row) = next("basis")?;
                let v = nums(n, &row)?;
                if v.len() != d {
                    return Err(err(n, format!("basis row has {} values, expected {d}", v.len())));
                }
                basis.extend(v);
            }
            let (n, r) = next("ratios")?;
            Some(LdaProjection {
                basis: DMatrix::from_row_slice(input_dim, d, &basis),
                ratios: nums(n, &r)?,
                regularized,
            })
        }
        Err(RobustError::Format { message, .. }) if message.starts_with("unexpected end") => None,
        Err(e) => return Err(e),
    };
    Ok(RogModel {
        classes,
        means,
        pooled_scatter: DMatrix::from_row_slice(d, d, &scatter),
        priors,
        threshold,
        projection,
    })
}
