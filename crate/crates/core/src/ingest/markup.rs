//! Lossy wikitext to plain text conversion.
//!
//! Templates and tables are dropped rather than expanded, links are replaced
//! by their visible label, media and category links disappear, and headings,
//! list markers and emphasis quotes are reduced to their text. Unknown
//! constructs fall through as text.

/// HTML elements whose content is never natural prose.
const DROPPED_ELEMENTS: &[&str] = &[
    "ref", "math", "gallery", "syntaxhighlight", "source", "pre", "code", "score", "timeline",
    "graph", "mapframe", "imagemap", "chem", "ce", "templatedata", "references", "hiero",
];

/// Link namespaces (canonical and a few common localized names) whose links
/// are not part of the running text.
const HIDDEN_LINK_NAMESPACES: &[&str] = &[
    "file", "image", "media", "category", "template", "help", "portal", "special", "wikipedia",
    "wp", "wiktionary", "user", "talk", "datei", "bild", "kategorie", "fichier", "catégorie",
    "archivo", "imagen", "categoría", "файл", "категория", "изображение", "pilt", "kategooria",
    "tiedosto", "luokka",
];

pub fn strip_markup(markup: &str) -> String {
    let text = remove_comments(markup);
    let text = strip_html(&text);
    let text = remove_templates_and_tables(&text);
    let text = replace_links(&text);
    let text = replace_external_links(&text);
    let text = decode_entities(&text);
    clean_lines(&text)
}

fn remove_comments(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find("<!--") {
        out.push_str(&rest[..start]);
        match rest[start + 4..].find("-->") {
            Some(end) => rest = &rest[start + 4 + end + 3..],
            None => return out,
        }
    }
    out.push_str(rest);
    out
}

struct Tag<'a> {
    name: String,
    closing: bool,
    self_closing: bool,
    len: usize,
    _raw: &'a str,
}

fn parse_tag(s: &str) -> Option<Tag<'_>> {
    debug_assert!(s.starts_with('<'));
    let end = s.find('>')?;
    let inner = &s[1..end];
    if inner.contains('<') || inner.contains('\n') && inner.len() > 200 {
        return None;
    }
    let (closing, body) = match inner.strip_prefix('/') {
        Some(b) => (true, b),
        None => (false, inner),
    };
    let name: String = body
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    if name.is_empty() || !name.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return None;
    }
    let after = &body[name.len()..];
    if !(after.is_empty() || after.starts_with(char::is_whitespace) || after.starts_with('/')) {
        return None;
    }
    Some(Tag {
        name,
        closing,
        self_closing: inner.trim_end().ends_with('/'),
        len: end + 1,
        _raw: &s[..=end],
    })
}

/// Removes HTML-like tags; for elements in `DROPPED_ELEMENTS` the content is
/// removed as well.
fn strip_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        let Some(rel) = s[i..].find('<') else {
            out.push_str(&s[i..]);
            break;
        };
        out.push_str(&s[i..i + rel]);
        i += rel;
        let Some(tag) = parse_tag(&s[i..]) else {
            out.push('<');
            i += 1;
            continue;
        };
        i += tag.len;
        if !tag.closing && !tag.self_closing && DROPPED_ELEMENTS.contains(&tag.name.as_str()) {
            let close = format!("</{}", tag.name);
            let lower = s[i..].to_ascii_lowercase();
            match lower.find(&close) {
                Some(pos) => {
                    let after = i + pos;
                    i = match s[after..].find('>') {
                        Some(gt) => after + gt + 1,
                        None => s.len(),
                    };
                }
                None => i = s.len(),
            }
        } else if matches!(tag.name.as_str(), "br" | "p" | "div" | "li") {
            out.push('\n');
        }
    }
    out
}

fn at_line_start(s: &str, pos: usize) -> bool {
    s[..pos]
        .rfind('\n')
        .map_or(&s[..pos], |nl| &s[nl + 1..pos])
        .chars()
        .all(|c| c == ' ' || c == '\t')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Construct {
    Template,
    Parameter,
    Table,
}

/// Drops `{{...}}` templates (nested, including `{{{param}}}`) and `{|...|}`
/// tables (nested, with templates inside).
fn remove_templates_and_tables(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut stack: Vec<Construct> = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with("{{{") {
            stack.push(Construct::Parameter);
            i += 3;
            continue;
        }
        if rest.starts_with("{{") {
            stack.push(Construct::Template);
            i += 2;
            continue;
        }
        if rest.starts_with("{|") && at_line_start(s, i) {
            stack.push(Construct::Table);
            i += 2;
            continue;
        }
        match stack.last() {
            Some(Construct::Parameter) if rest.starts_with("}}}") => {
                stack.pop();
                i += 3;
            }
            Some(Construct::Template) if rest.starts_with("}}") => {
                stack.pop();
                i += 2;
            }
            Some(Construct::Table) if rest.starts_with("|}") && at_line_start(s, i) => {
                stack.pop();
                i += 2;
            }
            Some(_) => i += rest.chars().next().map_or(1, char::len_utf8),
            None => {
                let c = rest.chars().next().unwrap();
                out.push(c);
                i += c.len_utf8();
            }
        }
    }
    out
}

fn find_link_end(s: &str) -> Option<usize> {
    // `s` starts right after an opening `[[`.
    let mut depth = 1usize;
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with("[[") {
            depth += 1;
            i += 2;
        } else if rest.starts_with("]]") {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
            i += 2;
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    None
}

fn split_top_level_pipes(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with("[[") {
            depth += 1;
            i += 2;
        } else if rest.starts_with("]]") {
            depth = depth.saturating_sub(1);
            i += 2;
        } else {
            if rest.starts_with('|') && depth == 0 {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    parts.push(&s[start..]);
    parts
}

fn is_hidden_target(target: &str) -> bool {
    let target = target.trim();
    if target.starts_with(':') {
        return false;
    }
    let Some((prefix, _)) = target.split_once(':') else {
        return false;
    };
    let prefix = prefix.trim().to_lowercase();
    HIDDEN_LINK_NAMESPACES.contains(&prefix.as_str())
        || (prefix.len() <= 3 && !prefix.is_empty() && prefix.chars().all(|c| c.is_ascii_lowercase()))
}

/// Replaces `[[target|label]]` by its label, dropping media, category and
/// interlanguage links.
fn replace_links(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(open) = rest.find("[[") {
        out.push_str(&rest[..open]);
        let inner_start = &rest[open + 2..];
        let Some(end) = find_link_end(inner_start) else {
            // Unbalanced: drop the delimiter and keep the text.
            rest = inner_start;
            continue;
        };
        let inner = &inner_start[..end];
        rest = &inner_start[end + 2..];
        let parts = split_top_level_pipes(inner);
        if is_hidden_target(parts[0]) {
            continue;
        }
        let label = if parts.len() > 1 {
            parts[parts.len() - 1]
        } else {
            parts[0].trim().trim_start_matches(':')
        };
        let label = if label.trim().is_empty() { parts[0] } else { label };
        out.push_str(&replace_links(label));
    }
    out.push_str(rest);
    out.replace("]]", "")
}

/// `[http://example.org label]` becomes `label`; bare bracketed URLs vanish.
fn replace_external_links(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let is_url = ["http://", "https://", "//", "ftp://", "mailto:"]
            .iter()
            .any(|p| after.starts_with(p));
        match (is_url, after.find(']')) {
            (true, Some(close)) if !after[..close].contains('\n') => {
                if let Some((_, label)) = after[..close].split_once(' ') {
                    out.push_str(label.trim());
                }
                rest = &after[close + 1..];
            }
            _ => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_owned();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let after = &rest[amp + 1..];
        let decoded = after.find(';').filter(|&semi| semi <= 10).and_then(|semi| {
            let name = &after[..semi];
            let c = match name {
                "nbsp" | "ensp" | "emsp" | "thinsp" => Some(' '),
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "ndash" => Some('–'),
                "mdash" => Some('—'),
                "minus" => Some('−'),
                _ => name.strip_prefix('#').and_then(|num| {
                    let code = match num.strip_prefix(['x', 'X']) {
                        Some(hex) => u32::from_str_radix(hex, 16).ok(),
                        None => num.parse().ok(),
                    };
                    code.and_then(char::from_u32)
                }),
            };
            c.map(|c| (c, semi))
        });
        match decoded {
            Some((c, semi)) => {
                out.push(c);
                rest = &after[semi + 1..];
            }
            None => {
                out.push('&');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn strip_emphasis(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\'' && chars.peek() == Some(&'\'') {
            while chars.peek() == Some(&'\'') {
                chars.next();
            }
            continue;
        }
        out.push(c);
    }
    out
}

fn remove_magic_words(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(start) = rest.find("__") {
        let after = &rest[start + 2..];
        match after.find("__") {
            Some(end) if end > 0 && after[..end].chars().all(|c| c.is_ascii_uppercase()) => {
                out.push_str(&rest[..start]);
                rest = &after[end + 2..];
            }
            _ => {
                out.push_str(&rest[..start + 2]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn remove_stray_delimiters(mut line: String) -> String {
    const DELIMITERS: [&str; 6] = ["{{", "}}", "[[", "]]", "{|", "|}"];
    // Removing one delimiter can join characters into another, so repeat
    // until nothing changes.
    while DELIMITERS.iter().any(|d| line.contains(d)) {
        for d in DELIMITERS {
            line = line.replace(d, "");
        }
    }
    line
}

fn clean_lines(s: &str) -> String {
    let mut lines = Vec::new();
    for raw in s.lines() {
        let line = remove_stray_delimiters(raw.trim().to_owned());
        let mut line = line.trim();
        if line.starts_with("----") {
            continue;
        }
        if line.starts_with('=') && line.ends_with('=') {
            line = line.trim_matches('=').trim();
        }
        line = line.trim_start_matches(['*', '#', ':', ';']).trim_start();
        let line = remove_magic_words(&strip_emphasis(line));
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if !collapsed.is_empty() {
            lines.push(collapsed);
        }
    }
    lines.join("\n")
}
