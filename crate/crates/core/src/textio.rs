//! Shared helpers for the tab-separated record files every stage reads and
//! writes.
//!
//! Free-text fields (titles, descriptions, article bodies) are escaped so a
//! record always occupies exactly one line: backslash, tab, newline and
//! carriage return become `\\`, `\t`, `\n` and `\r`. Lines starting with `#`
//! are comments; writers use them to record provenance.

use std::borrow::Cow;
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

pub fn escape_field(field: &str) -> Cow<'_, str> {
    if !field.contains(['\\', '\t', '\n', '\r']) {
        return Cow::Borrowed(field);
    }
    let mut out = String::with_capacity(field.len() + 8);
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    Cow::Owned(out)
}

pub fn unescape_field(field: &str) -> Cow<'_, str> {
    if !field.contains('\\') {
        return Cow::Borrowed(field);
    }
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    Cow::Owned(out)
}

/// Where an output file came from: digest of the effective configuration and
/// the seed of the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_digest: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header_line(&self) -> String {
        format!("# config_digest={} seed={}", self.config_digest, self.seed)
    }

    pub fn parse_header(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("# ")?;
        let mut digest = None;
        let mut seed = None;
        for part in rest.split_whitespace() {
            if let Some(v) = part.strip_prefix("config_digest=") {
                digest = Some(v.to_owned());
            } else if let Some(v) = part.strip_prefix("seed=") {
                seed = v.parse().ok();
            }
        }
        Some(Self {
            config_digest: digest?,
            seed: seed?,
        })
    }
}

/// Iterates the data lines of a record file, skipping comments and blank
/// lines. Yields `(line_number, line)` with 1-based line numbers.
pub fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = io::Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(idx, line)| match line {
            Ok(l) if l.trim().is_empty() || l.starts_with('#') => None,
            Ok(l) => Some(Ok((idx + 1, l))),
            Err(e) => Some(Err(e)),
        })
}

/// Writes a file through a temporary sibling and renames it into place, so
/// readers never observe a half-written output.
pub fn write_atomic<F>(path: &Path, fill: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut writer = BufWriter::new(File::create(&tmp)?);
        fill(&mut writer)?;
        writer.flush()?;
        writer.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Formats a float with a fixed number of decimals and no negative zero, so
/// written files are byte-stable.
pub fn fmt_f64(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn escape_round_trips(s in "\\PC*|[\\\\\t\n\r a]*") {
            let escaped = escape_field(&s);
            prop_assert!(!escaped.contains(['\t', '\n', '\r']));
            prop_assert_eq!(unescape_field(&escaped), s.as_str());
        }
    }

    #[test]
    fn provenance_header_parses_back() {
        let p = Provenance {
            config_digest: "abc123".into(),
            seed: 7,
        };
        assert_eq!(Provenance::parse_header(&p.header_line()), Some(p));
        assert_eq!(Provenance::parse_header("segment_id\tvideo_id"), None);
    }

    #[test]
    fn negative_zero_is_normalized() {
        assert_eq!(fmt_f64(-0.0, 3), "0.000");
        assert_eq!(fmt_f64(-0.0001, 2), "0.00");
        assert_eq!(fmt_f64(-1.5, 1), "-1.5");
    }
}
