//! Delay-tolerant store-and-forward queue.
//!
//! Records are appended to `queue.ndjson`; `cursor` holds the number of
//! leading lines already forwarded. Popping rewrites only the cursor (via
//! rename), so a crash at any point loses nothing and at worst re-sends the
//! head record, which the service deduplicates.

use aquagreen_core::telemetry::TelemetryRecord;
use std::collections::{HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BufferError {
    #[error("buffer i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("buffer file {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BufferError + '_ {
    move |source| BufferError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug)]
pub struct DtnBuffer {
    queue_path: PathBuf,
    cursor_path: PathBuf,
    file: File,
    pending: VecDeque<TelemetryRecord>,
    keys: HashSet<String>,
    consumed: usize,
}

impl DtnBuffer {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BufferError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let queue_path = dir.join("queue.ndjson");
        let cursor_path = dir.join("cursor");

        let consumed = match std::fs::read_to_string(&cursor_path) {
            Ok(s) => s.trim().parse::<usize>().map_err(|e| BufferError::Corrupt {
                path: cursor_path.clone(),
                line: 1,
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(io(&cursor_path)(e)),
        };

        let mut records = Vec::new();
        let mut valid_len = 0u64;
        if queue_path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&queue_path).map_err(io(&queue_path))?)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(io(&queue_path))?;
            let n = lines.len();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<TelemetryRecord>(line) {
                    Ok(r) => {
                        valid_len += line.len() as u64 + 1;
                        records.push(r);
                    }
                    // torn final append from a crash
                    Err(_) if i + 1 == n => break,
                    Err(e) => {
                        return Err(BufferError::Corrupt {
                            path: queue_path,
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
            let f = OpenOptions::new().write(true).open(&queue_path).map_err(io(&queue_path))?;
            f.set_len(valid_len).map_err(io(&queue_path))?;
        }
        let clamped = consumed.min(records.len());
        let pending: VecDeque<TelemetryRecord> = records.into_iter().skip(clamped).collect();
        let keys = pending.iter().map(TelemetryRecord::idempotency_key).collect();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&queue_path)
            .map_err(io(&queue_path))?;
        let buffer = Self {
            queue_path,
            cursor_path,
            file,
            pending,
            keys,
            consumed: clamped,
        };
        if clamped != consumed {
            buffer.write_cursor()?;
        }
        Ok(buffer)
    }

    /// Append a record; returns false if an identical key is already queued.
    pub fn push(&mut self, record: TelemetryRecord) -> Result<bool, BufferError> {
        let key = record.idempotency_key();
        if self.keys.contains(&key) {
            return Ok(false);
        }
        let mut line = serde_json::to_vec(&record).expect("record serializes");
        line.push(b'\n');
        self.file.write_all(&line).map_err(io(&self.queue_path))?;
        self.file.sync_data().map_err(io(&self.queue_path))?;
        self.keys.insert(key);
        self.pending.push_back(record);
        Ok(true)
    }

    pub fn front(&self) -> Option<&TelemetryRecord> {
        self.pending.front()
    }

    /// Mark the head record forwarded.
    pub fn pop(&mut self) -> Result<Option<TelemetryRecord>, BufferError> {
        let Some(head) = self.pending.pop_front() else {
            return Ok(None);
        };
        self.keys.remove(&head.idempotency_key());
        self.consumed += 1;
        if self.pending.is_empty() {
            self.compact()?;
        } else {
            self.write_cursor()?;
        }
        Ok(Some(head))
    }

    fn write_cursor(&self) -> Result<(), BufferError> {
        let tmp = self.cursor_path.with_extension("tmp");
        {
            let mut f = File::create(&tmp).map_err(io(&tmp))?;
            f.write_all(self.consumed.to_string().as_bytes()).map_err(io(&tmp))?;
            f.sync_data().map_err(io(&tmp))?;
        }
        std::fs::rename(&tmp, &self.cursor_path).map_err(io(&self.cursor_path))
    }

    /// Everything forwarded: reset both files. The queue goes first; a stale
    /// cursor over an empty queue clamps to zero on reopen.
    fn compact(&mut self) -> Result<(), BufferError> {
        self.file.set_len(0).map_err(io(&self.queue_path))?;
        self.file.sync_data().map_err(io(&self.queue_path))?;
        self.consumed = 0;
        self.write_cursor()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TelemetryRecord> {
        self.pending.iter()
    }
}
