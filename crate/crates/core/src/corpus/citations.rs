//! Citation-count lookup by paper id, over HTTP or from a fixture directory.
//!
//! The HTTP client targets the Semantic Scholar graph API shape:
//! `GET {base}/paper/{id}?fields=citationCount` answering
//! `{"paperId": "...", "citationCount": 24}`. Fixture mode reads the same JSON
//! body from `{dir}/{id}.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::RetryPolicy;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CitationError {
    #[error("paper not found")]
    NotFound,
    #[error("rate limited")]
    RateLimited,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl CitationError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::RateLimited | Self::Transport(_))
    }
}

/// Anything that can resolve a paper id to a citation count.
pub trait CitationSource: Sync {
    fn lookup(&self, paper_id: &str) -> Result<u64, CitationError>;
    /// Date stamped on every count this source returns.
    fn snapshot_date(&self) -> NaiveDate;
}

#[derive(Debug, Deserialize)]
struct CitationBody {
    #[serde(rename = "citationCount")]
    citation_count: Option<i64>,
}

fn parse_body(text: &str) -> Result<u64, CitationError> {
    let body: CitationBody =
        serde_json::from_str(text).map_err(|e| CitationError::Malformed(e.to_string()))?;
    match body.citation_count {
        Some(c) if c >= 0 => Ok(c as u64),
        Some(c) => Err(CitationError::Malformed(format!("negative count {c}"))),
        None => Err(CitationError::Malformed("citationCount missing".into())),
    }
}

/// Reads `{dir}/{id}.json`; characters outside `[A-Za-z0-9._-]` in the id map to `_`.
#[derive(Debug, Clone)]
pub struct FixtureCitations {
    dir: PathBuf,
    snapshot: NaiveDate,
}

impl FixtureCitations {
    pub fn new(dir: impl Into<PathBuf>, snapshot: NaiveDate) -> Self {
        Self {
            dir: dir.into(),
            snapshot,
        }
    }

    pub fn path_for(&self, paper_id: &str) -> PathBuf {
        fixture_path(&self.dir, paper_id)
    }
}

pub fn fixture_path(dir: &Path, paper_id: &str) -> PathBuf {
    let safe: String = paper_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join(format!("{safe}.json"))
}

impl CitationSource for FixtureCitations {
    fn lookup(&self, paper_id: &str) -> Result<u64, CitationError> {
        match std::fs::read_to_string(self.path_for(paper_id)) {
            Ok(text) => parse_body(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CitationError::NotFound),
            Err(e) => Err(CitationError::Transport(e.to_string())),
        }
    }

    fn snapshot_date(&self) -> NaiveDate {
        self.snapshot
    }
}

pub struct HttpCitations {
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    snapshot: NaiveDate,
    agent: ureq::Agent,
}

impl HttpCitations {
    pub const DEFAULT_BASE: &'static str = "https://api.semanticscholar.org/graph/v1";

    pub fn new(base_url: impl Into<String>, snapshot: NaiveDate, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: None,
            retry,
            snapshot,
            agent,
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    fn lookup_once(&self, paper_id: &str) -> Result<u64, CitationError> {
        let url = format!("{}/paper/{}?fields=citationCount", self.base_url, paper_id);
        let mut req = self.agent.get(&url);
        if let Some(k) = &self.api_key {
            req = req.header("x-api-key", k);
        }
        let mut resp = req
            .call()
            .map_err(|e| CitationError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CitationError::Transport(e.to_string()))?;
        match status {
            200..=299 => parse_body(&text),
            404 => Err(CitationError::NotFound),
            429 => Err(CitationError::RateLimited),
            s if s >= 500 => Err(CitationError::Transport(format!("HTTP {s}"))),
            s => Err(CitationError::Malformed(format!("HTTP {s}: {text}"))),
        }
    }
}

impl CitationSource for HttpCitations {
    fn lookup(&self, paper_id: &str) -> Result<u64, CitationError> {
        self.retry
            .run(|_| self.lookup_once(paper_id), CitationError::is_retryable)
    }

    fn snapshot_date(&self) -> NaiveDate {
        self.snapshot
    }
}

/// One resolved count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationFetch {
    pub citation_count: u64,
    pub snapshot_date: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CitationReport {
    pub resolved: BTreeMap<String, CitationFetch>,
    /// Per-id failure reason; ids here are absent from `resolved`.
    pub failures: BTreeMap<String, String>,
}

/// Looks up every id, at most `concurrency` at a time. Failures are recorded
/// per id and never abort the batch.
pub fn fetch_citations(
    source: &dyn CitationSource,
    paper_ids: &[String],
    concurrency: usize,
) -> CitationReport {
    let next = AtomicUsize::new(0);
    let report = Mutex::new(CitationReport::default());
    let workers = concurrency.clamp(1, paper_ids.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(id) = paper_ids.get(i) else { break };
                let outcome = source.lookup(id);
                let mut report = report.lock().expect("citation report lock");
                match outcome {
                    Ok(c) => {
                        report.resolved.insert(
                            id.clone(),
                            CitationFetch {
                                citation_count: c,
                                snapshot_date: source.snapshot_date(),
                            },
                        );
                    }
                    Err(e) => {
                        report.failures.insert(id.clone(), e.to_string());
                    }
                }
            });
        }
    });
    report.into_inner().expect("citation report lock")
}
