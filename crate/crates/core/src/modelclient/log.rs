use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, ModelError, ModelSpec, RawResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub model: ModelSpec,
    pub corpus_hash: String,
    pub config_digest: String,
    pub n_probes: usize,
}

/// One line of a response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Response(RawResponse),
}

fn line_of(record: &LogRecord) -> String {
    let mut s = serde_json::to_string(record).expect("log records serialize");
    s.push('\n');
    s
}

fn corrupt(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::CorruptLog {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Parses newline-terminated records. Returns them with the byte length of
/// the committed prefix; anything after the last newline is a torn write.
fn parse_committed(path: &Path, bytes: &[u8]) -> Result<(Vec<LogRecord>, usize), ModelError> {
    let committed = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let text = std::str::from_utf8(&bytes[..committed]).map_err(|e| corrupt(path, e.to_string()))?;
    let records = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| corrupt(path, format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((records, committed))
}

fn split_header(path: &Path, records: Vec<LogRecord>) -> Result<(LogHeader, Vec<RawResponse>), ModelError> {
    let mut it = records.into_iter();
    let header = match it.next() {
        Some(LogRecord::Header(h)) => h,
        _ => return Err(corrupt(path, "first record is not a header")),
    };
    let responses = it
        .map(|r| match r {
            LogRecord::Response(r) => Ok(r),
            LogRecord::Header(_) => Err(corrupt(path, "header record after the first line")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header, responses))
}

/// Reads a finished log. A torn final line is an error here.
pub fn read_response_log(path: &Path) -> Result<(LogHeader, Vec<RawResponse>), ModelError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let (records, committed) = parse_committed(path, &bytes)?;
    if committed != bytes.len() {
        return Err(corrupt(path, "incomplete final record"));
    }
    split_header(path, records)
}

/// Append-only writer over a response log.
pub struct ResponseLog {
    path: PathBuf,
    file: File,
    completed: Vec<RawResponse>,
}

impl ResponseLog {
    /// Opens `path` for appending, creating it with `header` if absent or
    /// empty. An existing header must equal `header`.
    pub fn open_or_create(path: &Path, header: &LogHeader) -> Result<Self, ModelError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let existing = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(path, e)),
        };
        let (records, committed) = parse_committed(path, &existing)?;
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        if committed != existing.len() {
            tracing::warn!(path = %path.display(), "discarding torn final record");
            file.set_len(committed as u64).map_err(|e| io_err(path, e))?;
        }
        let completed = if records.is_empty() {
            file.set_len(0).map_err(|e| io_err(path, e))?;
            file.write_all(line_of(&LogRecord::Header(header.clone())).as_bytes())
                .map_err(|e| io_err(path, e))?;
            Vec::new()
        } else {
            let (found, responses) = split_header(path, records)?;
            if &found != header {
                return Err(ModelError::StaleLog {
                    path: path.display().to_string(),
                    message: format!(
                        "header is for {} / corpus {} / config {}",
                        found.model.model_name, found.corpus_hash, found.config_digest
                    ),
                });
            }
            responses
        };
        drop(file);
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            completed,
        })
    }

    /// Responses already on disk when the log was opened.
    pub fn completed(&self) -> &[RawResponse] {
        &self.completed
    }

    pub fn append(&mut self, response: &RawResponse) -> Result<(), ModelError> {
        let line = line_of(&LogRecord::Response(response.clone()));
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| io_err(&self.path, e))
    }

    /// Writes the first half of a record with no newline.
    pub(crate) fn append_torn(&mut self, response: &RawResponse) -> Result<(), ModelError> {
        let line = line_of(&LogRecord::Response(response.clone()));
        let half = &line.as_bytes()[..line.len() / 2];
        self.file.write_all(half).map_err(|e| io_err(&self.path, e))
    }
}
