//! Append-only JSON-lines response store.
//!
//! Line 1 is a header naming the survey, its scale and a hash of the item
//! list; every following line is one [`ResponseRecord`]. A store is only
//! ever appended to. An unterminated final line that does not parse is the
//! trace of an interrupted write and is dropped when the store is reopened
//! for appending; any other unreadable line is reported as corruption.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::SurveyError;

pub const STORE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub format: u32,
    pub survey_id: String,
    pub scale: Vec<String>,
    /// SHA-256 of the item list the survey administers.
    pub items_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    ContentFiltered,
    Missing,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub request_key: String,
    pub agent_id: u32,
    pub item_id: String,
    pub raw_text: String,
    pub parsed_value: Option<u8>,
    pub status: ResponseStatus,
    pub attempts: u32,
}

impl ResponseRecord {
    fn check(&self, points: u8) -> Result<(), String> {
        match (self.status, self.parsed_value) {
            (ResponseStatus::Ok, Some(v)) if (1..=points).contains(&v) => Ok(()),
            (ResponseStatus::Ok, Some(v)) => Err(format!("value {v} outside 1..={points}")),
            (ResponseStatus::Ok, None) => Err("ok record without a value".into()),
            (_, Some(_)) => Err("value present on a non-ok record".into()),
            (_, None) => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(StoreHeader),
    Record(ResponseRecord),
}

/// A response store opened for reading, or for reading and appending.
pub struct ResponseStore {
    path: PathBuf,
    header: StoreHeader,
    records: Vec<ResponseRecord>,
    keys: HashSet<String>,
    writer: Option<Mutex<BufWriter<File>>>,
    sync: bool,
}

impl std::fmt::Debug for ResponseStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResponseStore")
            .field("path", &self.path)
            .field("header", &self.header)
            .field("records", &self.records.len())
            .finish()
    }
}

impl ResponseStore {
    /// Reads an existing store.
    pub fn load(path: &Path) -> Result<Self, SurveyError> {
        let text = std::fs::read_to_string(path).map_err(|e| SurveyError::io(path, e))?;
        let (header, records, _) = parse(path, &text, false)?;
        let keys = records.iter().map(|r| r.request_key.clone()).collect();
        Ok(Self { path: path.to_path_buf(), header, records, keys, writer: None, sync: false })
    }

    /// Opens `path` for appending, creating it with `header` if absent.
    ///
    /// An existing store must carry an identical header. With `sync` set,
    /// every append is fsynced before returning.
    pub fn open(path: &Path, header: StoreHeader, sync: bool) -> Result<Self, SurveyError> {
        let (records, valid_len) = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| SurveyError::io(path, e))?;
            let (found, records, valid_len) = parse(path, &text, true)?;
            if found != header {
                return Err(SurveyError::StoreMismatch {
                    path: path.display().to_string(),
                    detail: format!("store header {found:?} does not match requested {header:?}"),
                });
            }
            if valid_len < text.len() {
                log::warn!("{}: dropping torn final line", path.display());
            }
            (records, Some((valid_len, text.ends_with('\n') || valid_len < text.len())))
        } else {
            (Vec::new(), None)
        };

        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(|e| SurveyError::io(path, e))?;
        let mut writer = BufWriter::new(file);
        match valid_len {
            Some((len, terminated)) => {
                writer.get_ref().set_len(len as u64).map_err(|e| SurveyError::io(path, e))?;
                use std::io::Seek;
                writer.seek(std::io::SeekFrom::End(0)).map_err(|e| SurveyError::io(path, e))?;
                if !terminated {
                    writer.write_all(b"\n").map_err(|e| SurveyError::io(path, e))?;
                }
            }
            None => {
                let line = serde_json::to_string(&Line::Header(header.clone())).expect("header serializes");
                writeln!(writer, "{line}").map_err(|e| SurveyError::io(path, e))?;
            }
        }
        writer.flush().map_err(|e| SurveyError::io(path, e))?;
        if sync {
            writer.get_ref().sync_all().map_err(|e| SurveyError::io(path, e))?;
        }
        let keys = records.iter().map(|r| r.request_key.clone()).collect();
        Ok(Self { path: path.to_path_buf(), header, records, keys, writer: Some(Mutex::new(writer)), sync })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    /// Records present when the store was opened.
    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn contains(&self, request_key: &str) -> bool {
        self.keys.contains(request_key)
    }

    /// Appends one record and flushes it to the operating system.
    pub fn append(&self, record: &ResponseRecord) -> Result<(), SurveyError> {
        let writer = self.writer.as_ref().ok_or_else(|| SurveyError::StoreMismatch {
            path: self.path.display().to_string(),
            detail: "store opened read-only".into(),
        })?;
        let line = serde_json::to_string(&Line::Record(record.clone())).expect("record serializes");
        let mut writer = writer.lock().expect("store writer poisoned");
        writeln!(writer, "{line}").map_err(|e| SurveyError::io(&self.path, e))?;
        writer.flush().map_err(|e| SurveyError::io(&self.path, e))?;
        if self.sync {
            writer.get_ref().sync_data().map_err(|e| SurveyError::io(&self.path, e))?;
        }
        Ok(())
    }
}

/// Returns the header, records and the byte length of the valid prefix.
fn parse(path: &Path, text: &str, tolerate_torn_tail: bool) -> Result<(StoreHeader, Vec<ResponseRecord>, usize), SurveyError> {
    let corrupt = |line: usize, detail: String| SurveyError::StoreCorrupt {
        path: path.display().to_string(),
        line,
        detail,
    };
    let mut header: Option<StoreHeader> = None;
    let mut records = Vec::new();
    let mut keys = HashSet::new();
    let mut offset = 0usize;
    let mut valid_len = 0usize;
    for (index, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = index + 1;
        offset += raw.len();
        let terminated = raw.ends_with('\n');
        let body = raw.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            valid_len = offset;
            continue;
        }
        let parsed: Line = match serde_json::from_str(body) {
            Ok(line) => line,
            Err(_) if !terminated && tolerate_torn_tail && header.is_some() => break,
            Err(e) => return Err(corrupt(line_no, e.to_string())),
        };
        match (parsed, &header) {
            (Line::Header(h), None) => {
                if h.format != STORE_FORMAT {
                    return Err(corrupt(line_no, format!("unsupported store format {}", h.format)));
                }
                header = Some(h);
            }
            (Line::Header(_), Some(_)) => return Err(corrupt(line_no, "second header".into())),
            (Line::Record(_), None) => return Err(corrupt(line_no, "record before header".into())),
            (Line::Record(r), Some(h)) => {
                r.check(h.scale.len() as u8).map_err(|d| corrupt(line_no, d))?;
                if !keys.insert(r.request_key.clone()) {
                    return Err(corrupt(line_no, format!("duplicate request key {}", r.request_key)));
                }
                records.push(r);
            }
        }
        valid_len = offset;
    }
    let header = header.ok_or_else(|| corrupt(1, "missing header".into()))?;
    Ok((header, records, valid_len))
}
