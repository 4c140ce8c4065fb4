use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use voxcrawl_core::textio::data_lines;

use crate::ServiceError;

/// Static bearer tokens: one `token<TAB>annotator_id` per line.
#[derive(Debug, Clone, Default)]
pub struct TokenRegistry {
    annotators: HashMap<String, String>,
}

impl TokenRegistry {
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        Self::from_reader(BufReader::new(File::open(path)?), path)
    }

    pub fn from_reader<R: BufRead>(input: R, origin: &Path) -> Result<Self, ServiceError> {
        let mut annotators = HashMap::new();
        for item in data_lines(input) {
            let (line, text) = item?;
            let err = |message: &str| ServiceError::Format {
                path: origin.to_path_buf(),
                line,
                message: message.to_owned(),
            };
            let (token, annotator) = text.split_once('\t').ok_or_else(|| err("expected token<TAB>annotator_id"))?;
            if token.is_empty() || annotator.is_empty() || annotator.contains('\t') {
                return Err(err("empty token or annotator id"));
            }
            if annotators.insert(token.to_owned(), annotator.to_owned()).is_some() {
                return Err(err("duplicate token"));
            }
        }
        Ok(Self { annotators })
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        Self {
            annotators: pairs.into_iter().collect(),
        }
    }

    pub fn annotator(&self, token: &str) -> Option<&str> {
        self.annotators.get(token).map(String::as_str)
    }
}
