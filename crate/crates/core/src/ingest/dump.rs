//! Streaming reader for MediaWiki XML page dumps.
//!
//! Only the fields the corpus builder needs are extracted: `title`, `ns`,
//! the `redirect` marker and the text of the (single) revision. Everything
//! else in the container is skipped. Memory use is bounded by the largest
//! single page, not by the size of the dump.

use std::io::BufRead;

use quick_xml::events::{BytesRef, Event};
use quick_xml::Reader;

use crate::lang::LanguageCode;

/// One page as found in the dump, before markup stripping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub language: LanguageCode,
    pub title: String,
    pub namespace: i64,
    /// Set when the page carries a `<redirect>` element or its text starts
    /// with a `#REDIRECT` directive.
    pub redirect: bool,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("malformed dump at byte {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error("dump truncated at byte {offset} inside <{element}>")]
    Truncated { offset: u64, element: String },
    #[error("invalid namespace {value:?} at byte {offset}")]
    BadNamespace { offset: u64, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Namespace,
    Text,
}

#[derive(Default)]
struct PageBuilder {
    title: String,
    namespace: String,
    redirect: bool,
    text: String,
    revisions: usize,
}

/// Iterator over the article pages (namespace 0) of a dump.
pub struct DumpPages<R: BufRead> {
    reader: Reader<R>,
    language: LanguageCode,
    buf: Vec<u8>,
    stack: Vec<Vec<u8>>,
    page: Option<PageBuilder>,
    field: Option<Field>,
    finished: bool,
    buffer_high_water: usize,
}

/// Parses a dump stream lazily. The stream must already be decompressed.
pub fn parse_dump<R: BufRead>(input: R, language: LanguageCode) -> DumpPages<R> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().check_end_names = true;
    DumpPages {
        reader,
        language,
        buf: Vec::with_capacity(8 * 1024),
        stack: Vec::new(),
        page: None,
        field: None,
        finished: false,
        buffer_high_water: 0,
    }
}

impl<R: BufRead> DumpPages<R> {
    /// Largest capacity the event buffer has reached so far. Exposed so the
    /// streaming contract can be checked.
    pub fn buffer_high_water(&self) -> usize {
        self.buffer_high_water
    }

    fn fail(&mut self, err: DumpError) -> Option<Result<RawPage, DumpError>> {
        self.finished = true;
        Some(Err(err))
    }

    fn push_text(&mut self, chunk: &str) {
        if let (Some(page), Some(field)) = (self.page.as_mut(), self.field) {
            match field {
                Field::Title => page.title.push_str(chunk),
                Field::Namespace => page.namespace.push_str(chunk),
                Field::Text => page.text.push_str(chunk),
            }
        }
    }

    fn finish_page(&mut self) -> Option<Result<RawPage, DumpError>> {
        let page = self.page.take()?;
        let offset = self.reader.buffer_position();
        let namespace = match page.namespace.trim() {
            "" => 0,
            ns => match ns.parse::<i64>() {
                Ok(v) => v,
                Err(_) => {
                    return self.fail(DumpError::BadNamespace {
                        offset,
                        value: page.namespace.clone(),
                    })
                }
            },
        };
        if namespace != 0 {
            return None;
        }
        let redirect = page.redirect || is_redirect_text(&page.text);
        Some(Ok(RawPage {
            language: self.language.clone(),
            title: page.title.trim().to_owned(),
            namespace,
            redirect,
            text: page.text,
        }))
    }
}

fn is_redirect_text(text: &str) -> bool {
    let head: String = text.trim_start().chars().take(9).collect();
    head.eq_ignore_ascii_case("#redirect")
}

fn resolve_reference(reference: &BytesRef<'_>) -> Option<String> {
    if let Ok(Some(c)) = reference.resolve_char_ref() {
        return Some(c.to_string());
    }
    let name = reference.decode().ok()?;
    let resolved = match name.as_ref() {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" => "'",
        other => return Some(format!("&{other};")),
    };
    Some(resolved.to_owned())
}

impl<R: BufRead> Iterator for DumpPages<R> {
    type Item = Result<RawPage, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.finished {
            self.buf.clear();
            let event = self.reader.read_event_into(&mut self.buf).map(Event::into_owned);
            self.buffer_high_water = self.buffer_high_water.max(self.buf.capacity());
            let event = match event {
                Ok(ev) => ev,
                Err(e) => {
                    let offset = self.reader.error_position();
                    return self.fail(DumpError::Malformed {
                        offset,
                        message: e.to_string(),
                    });
                }
            };
            match event {
                Event::Start(start) => {
                    let name = start.local_name().as_ref().to_vec();
                    match name.as_slice() {
                        b"page" => self.page = Some(PageBuilder::default()),
                        b"revision" => {
                            if let Some(page) = self.page.as_mut() {
                                page.revisions += 1;
                            }
                        }
                        b"redirect" => {
                            if let Some(page) = self.page.as_mut() {
                                page.redirect = true;
                            }
                        }
                        _ => {}
                    }
                    self.field = match (self.page.as_ref(), self.stack.last().map(Vec::as_slice), name.as_slice()) {
                        (Some(_), Some(b"page"), b"title") => Some(Field::Title),
                        (Some(_), Some(b"page"), b"ns") => Some(Field::Namespace),
                        (Some(page), Some(b"revision"), b"text") if page.revisions == 1 => Some(Field::Text),
                        _ => None,
                    };
                    self.stack.push(name);
                }
                Event::Empty(empty) => {
                    if empty.local_name().as_ref() == b"redirect" {
                        if let Some(page) = self.page.as_mut() {
                            page.redirect = true;
                        }
                    }
                }
                Event::End(end) => {
                    self.field = None;
                    self.stack.pop();
                    if end.local_name().as_ref() == b"page" {
                        if let Some(item) = self.finish_page() {
                            return Some(item);
                        }
                    }
                }
                Event::Text(text) => match text.decode() {
                    Ok(chunk) => self.push_text(&chunk),
                    Err(e) => {
                        let offset = self.reader.buffer_position();
                        return self.fail(DumpError::Malformed {
                            offset,
                            message: e.to_string(),
                        });
                    }
                },
                Event::CData(cdata) => {
                    if let Ok(chunk) = cdata.decode() {
                        self.push_text(&chunk);
                    }
                }
                Event::GeneralRef(reference) => {
                    if let Some(resolved) = resolve_reference(&reference) {
                        self.push_text(&resolved);
                    }
                }
                Event::Eof => {
                    self.finished = true;
                    if let Some(open) = self.stack.last() {
                        let element = String::from_utf8_lossy(open).into_owned();
                        return Some(Err(DumpError::Truncated {
                            offset: self.reader.buffer_position(),
                            element,
                        }));
                    }
                    return None;
                }
                _ => {}
            }
        }
        None
    }
}
