use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use voxcrawl_core::evalkit::CrowdLabel;

use crate::ServiceError;

/// One line of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogRecord {
    Issued { annotator_id: String, segment_id: String },
    Label(CrowdLabel),
}

/// Immutable view of everything recorded so far.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    labels: Vec<CrowdLabel>,
    labeled: HashSet<(String, String)>,
    label_count: HashMap<String, usize>,
    issued: HashMap<String, HashSet<String>>,
}

impl Snapshot {
    /// Labels in log order.
    pub fn labels(&self) -> &[CrowdLabel] {
        &self.labels
    }

    pub fn has_label(&self, segment_id: &str, annotator_id: &str) -> bool {
        self.labeled.contains(&(segment_id.to_owned(), annotator_id.to_owned()))
    }

    pub fn label_count(&self, segment_id: &str) -> usize {
        self.label_count.get(segment_id).copied().unwrap_or(0)
    }

    pub fn was_issued(&self, annotator_id: &str, segment_id: &str) -> bool {
        self.issued.get(annotator_id).is_some_and(|s| s.contains(segment_id))
    }

    pub fn issued_count(&self, annotator_id: &str) -> usize {
        self.issued.get(annotator_id).map_or(0, HashSet::len)
    }

    fn apply(&mut self, record: LogRecord) -> Result<(), String> {
        match record {
            LogRecord::Issued {
                annotator_id,
                segment_id,
            } => {
                self.issued.entry(annotator_id).or_default().insert(segment_id);
            }
            LogRecord::Label(label) => {
                let key = (label.segment_id.clone(), label.annotator_id.clone());
                if !self.labeled.insert(key) {
                    return Err(format!(
                        "duplicate label for segment {} by {}",
                        label.segment_id, label.annotator_id
                    ));
                }
                *self.label_count.entry(label.segment_id.clone()).or_default() += 1;
                self.labels.push(label);
            }
        }
        Ok(())
    }
}

struct Writer {
    file: Option<File>,
}

/// Append-only label log with a single writer and lock-free readers.
pub struct LabelStore {
    path: Option<PathBuf>,
    snapshot: ArcSwap<Snapshot>,
    writer: Mutex<Writer>,
}

/// Exclusive access to the log for a check-then-append sequence.
pub struct WriteGuard<'a> {
    store: &'a LabelStore,
    writer: MutexGuard<'a, Writer>,
}

impl LabelStore {
    /// A store that keeps everything in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            snapshot: ArcSwap::from_pointee(Snapshot::default()),
            writer: Mutex::new(Writer { file: None }),
        }
    }

    /// Opens (or creates) a log file and replays it. A final line without a
    /// newline is the remains of an interrupted write and is dropped.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let mut snapshot = Snapshot::default();
        let mut valid_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(path)?);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    tracing::warn!(path = %path.display(), line = line_no, "dropping incomplete last record");
                    break;
                }
                let err = |message: String| ServiceError::Format {
                    path: path.to_path_buf(),
                    line: line_no,
                    message,
                };
                if !line.trim().is_empty() {
                    let record: LogRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
                    snapshot.apply(record).map_err(err)?;
                }
                valid_len += n as u64;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() != valid_len {
            file.set_len(valid_len)?;
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            snapshot: ArcSwap::from_pointee(snapshot),
            writer: Mutex::new(Writer { file: Some(file) }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.load_full()
    }

    pub fn lock(&self) -> WriteGuard<'_> {
        WriteGuard {
            store: self,
            writer: self.writer.lock().unwrap_or_else(|e| e.into_inner()),
        }
    }
}

impl WriteGuard<'_> {
    /// The latest state; stable while the guard is held.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.store.snapshot.load_full()
    }

    fn append(&mut self, records: Vec<LogRecord>) -> Result<(), ServiceError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut next = (*self.snapshot()).clone();
        for r in &records {
            next.apply(r.clone()).map_err(ServiceError::Invalid)?;
        }
        if let Some(file) = self.writer.file.as_mut() {
            let mut buf = String::new();
            for r in &records {
                buf.push_str(&serde_json::to_string(r).expect("records serialize"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
            file.sync_data()?;
        }
        self.store.snapshot.store(Arc::new(next));
        Ok(())
    }

    /// Stores a label unless this annotator already labeled the segment.
    pub fn add_label(&mut self, label: CrowdLabel) -> Result<(), ServiceError> {
        if self.snapshot().has_label(&label.segment_id, &label.annotator_id) {
            return Err(ServiceError::Conflict {
                segment_id: label.segment_id,
                annotator_id: label.annotator_id,
            });
        }
        self.append(vec![LogRecord::Label(label)])
    }

    pub fn record_issued(&mut self, annotator_id: &str, segment_ids: &[String]) -> Result<(), ServiceError> {
        self.append(
            segment_ids
                .iter()
                .map(|s| LogRecord::Issued {
                    annotator_id: annotator_id.to_owned(),
                    segment_id: s.clone(),
                })
                .collect(),
        )
    }
}
