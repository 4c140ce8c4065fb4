use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::EmbedError;
use crate::lang::LanguageCode;
use crate::textio::{data_lines, fmt_f64};

/// Embeddings keyed by segment id, all of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Embeddings {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

/// Reads `dim=<d>` followed by `segment_id<TAB>v1,v2,...,vd` lines.
pub fn load_embeddings<R: BufRead>(input: R) -> Result<Embeddings, EmbedError> {
    let mut lines = data_lines(input);
    let (line, header) = match lines.next() {
        Some(item) => item?,
        None => return Ok(Embeddings::default()),
    };
    let dim = header
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| EmbedError::Format {
            line,
            message: format!("expected dim=<positive integer>, got {header:?}"),
        })?;
    let mut vectors = BTreeMap::new();
    for item in lines {
        let (line, text) = item?;
        let err = |message: String| EmbedError::Format { line, message };
        let (id, values) = text.split_once('\t').ok_or_else(|| err("expected id<TAB>values".into()))?;
        let vector = values
            .split(',')
            .map(|v| match v.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(err(format!("record {id:?}: non-finite or malformed value {v:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vector.len() != dim {
            return Err(err(format!("record {id:?}: has {} values, expected {dim}", vector.len())));
        }
        if vectors.insert(id.to_owned(), vector).is_some() {
            return Err(err(format!("record {id:?}: duplicate id")));
        }
    }
    Ok(Embeddings { dim, vectors })
}

pub fn write_embeddings<W: Write>(embeddings: &Embeddings, mut out: W) -> std::io::Result<()> {
    writeln!(out, "dim={}", embeddings.dim)?;
    for (id, v) in &embeddings.vectors {
        let values: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{id}\t{}", values.join(","))?;
    }
    Ok(())
}

/// Square table with language codes as row and column headers.
pub fn write_distance_matrix<W: Write>(
    languages: &[LanguageCode],
    distances: &[Vec<f64>],
    mut out: W,
) -> std::io::Result<()> {
    let header: Vec<&str> = languages.iter().map(|l| l.as_ref()).collect();
    writeln!(out, "\t{}", header.join("\t"))?;
    for (lang, row) in languages.iter().zip(distances) {
        let cells: Vec<String> = row.iter().map(|d| fmt_f64(*d, 6)).collect();
        writeln!(out, "{lang}\t{}", cells.join("\t"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_three_records() {
        let e = load_embeddings("dim=2\na\t1,2\nb\t3,4\nc\t-1e-3,0\n".as_bytes()).unwrap();
        assert_eq!(e.vectors.len(), 3);
        assert_eq!(e.vectors["c"], vec![-0.001, 0.0]);
    }

    #[test]
    fn rejects_bad_records() {
        for (input, needle) in [
            ("dim=2\na\t1,2\na\t3,4\n", "duplicate"),
            ("dim=2\na\t1,NaN\n", "non-finite"),
            ("dim=2\na\t1,inf\n", "non-finite"),
            ("dim=2\na\t1,2,3\n", "expected 2"),
            ("d=2\n", "dim="),
        ] {
            let err = load_embeddings(input.as_bytes()).unwrap_err().to_string();
            assert!(err.contains(needle), "{input:?}: {err}");
        }
    }

    #[test]
    fn write_then_load_is_exact() {
        let mut e = Embeddings {
            dim: 3,
            ..Default::default()
        };
        e.vectors.insert("x".into(), vec![0.1, -1.0 / 3.0, 1e-300]);
        e.vectors.insert("y".into(), vec![std::f64::consts::PI, 0.0, -7.25]);
        let mut buf = Vec::new();
        write_embeddings(&e, &mut buf).unwrap();
        assert_eq!(load_embeddings(buf.as_slice()).unwrap(), e);
    }
}
