//! Durable append-only log of user, post and interaction records.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use feedrank_core::io::{read_jsonl, EventRecord};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    User {
        user_id: u32,
        profile: std::collections::BTreeMap<String, String>,
    },
    Post {
        post_id: u32,
        user_id: u32,
        categories: Vec<f64>,
        seq: u64,
    },
    Event(EventRecord),
}

pub struct EventLog {
    path: PathBuf,
    file: File,
    len: u64,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns it with every record already in it.
    pub fn open(path: &Path) -> ServiceResult<(EventLog, Vec<LogRecord>)> {
        let records: Vec<LogRecord> = if path.exists() {
            read_jsonl(BufReader::new(File::open(path)?))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let log = EventLog {
            path: path.to_path_buf(),
            file,
            len: records.len() as u64,
        };
        Ok((log, records))
    }

    /// Writes one record and syncs it to disk before returning its position.
    pub fn append(&mut self, rec: &LogRecord) -> ServiceResult<u64> {
        let mut line = serde_json::to_vec(rec).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.len += 1;
        Ok(self.len)
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
