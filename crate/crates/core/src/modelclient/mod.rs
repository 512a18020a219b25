//! Prompt rendering, endpoint dispatch and response logging.
//!
//! A model run writes one response log: a header line followed by one
//! [`RawResponse`] per probe, in suite order. Workers query the endpoint
//! concurrently and hand results to a single writer, which commits them in
//! order. An interrupted run therefore leaves a prefix of the final log, and
//! resuming only queries the probes after that prefix.

mod http;
mod log;
mod mock;
mod prompt;
pub mod server;

pub use http::HttpEndpoint;
pub use log::{read_response_log, LogHeader, LogRecord, ResponseLog};
pub use mock::{mock_respond, mock_text, MemoryProfile, MockEndpoint, MockOutcome};
pub use prompt::{option_label, render_prompt, RenderedPrompt, DEFAULT_TEMPLATE, TEMPLATES};

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::probegen::{Probe, ProbeSuite};
use crate::retry::RetryPolicy;

/// Environment variable holding the endpoint bearer token.
pub const AUTH_TOKEN_ENV: &str = "MEMPROBE_API_KEY";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec {model}: {message}")]
    InvalidSpec { model: String, message: String },
    #[error("unknown prompt template {0}")]
    UnknownTemplate(String),
    #[error("endpoint serves model {reported}, expected {expected}")]
    ModelMismatch { expected: String, reported: String },
    #[error("response log {path} belongs to a different run: {message}")]
    StaleLog { path: String, message: String },
    #[error("response log {path} is corrupt: {message}")]
    CorruptLog { path: String, message: String },
    #[error("run interrupted after {written} records")]
    Interrupted { written: usize },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("registry error: {0}")]
    Registry(String),
}

pub(crate) fn io_err(path: &Path, e: impl ToString) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// One evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_name: String,
    pub params_billions: f64,
    pub vendor: String,
    pub family: String,
    /// `YYYY-MM`.
    pub training_cutoff: String,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |message: &str| ModelError::InvalidSpec {
            model: self.model_name.clone(),
            message: message.to_string(),
        };
        if self.model_name.trim().is_empty() {
            return Err(bad("empty model name"));
        }
        if !(self.params_billions > 0.0 && self.params_billions.is_finite()) {
            return Err(bad("params_billions must be positive"));
        }
        let ok_cutoff = chrono::NaiveDate::parse_from_str(
            &format!("{}-01", self.training_cutoff),
            "%Y-%m-%d",
        )
        .is_ok();
        if !ok_cutoff {
            return Err(bad("training_cutoff must be YYYY-MM"));
        }
        Ok(())
    }
}

/// A registry row: model metadata plus how to reach it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    #[serde(flatten)]
    pub spec: ModelSpec,
    /// Base URL of a chat-completions server, e.g. `http://host:8000/v1`.
    #[serde(default)]
    pub endpoint: String,
    /// When present the model is simulated instead of queried.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MemoryProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub models: Vec<RegistryEntry>,
}

const REFERENCE_REGISTRY: &str = include_str!("../../data/reference_models.json");

impl Registry {
    /// The seventeen open-weight models of the reference study, endpoints blank.
    pub fn reference_models() -> Self {
        serde_json::from_str(REFERENCE_REGISTRY).expect("bundled registry parses")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let reg: Registry =
            serde_json::from_str(&text).map_err(|e| ModelError::Registry(e.to_string()))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            m.spec.validate()?;
            if let Some(p) = &m.mock {
                p.validate()
                    .map_err(|e| ModelError::Registry(format!("{}: {e}", m.spec.model_name)))?;
            }
            if !names.insert(m.spec.model_name.as_str()) {
                return Err(ModelError::Registry(format!(
                    "duplicate model {}",
                    m.spec.model_name
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.models.iter().find(|m| m.spec.model_name == name)
    }

    pub fn specs(&self) -> Vec<ModelSpec> {
        self.models.iter().map(|m| m.spec.clone()).collect()
    }
}

/// One deterministic chat request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub probe_id: String,
    pub system: String,
    pub user: String,
    temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(probe_id: impl Into<String>, prompt: RenderedPrompt, max_tokens: u32) -> Self {
        Self {
            probe_id: probe_id.into(),
            system: prompt.system,
            user: prompt.user,
            temperature: 0.0,
            max_tokens,
        }
    }

    /// Always zero: decoding is greedy.
    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

/// Model output for one probe, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub probe_id: String,
    pub model_name: String,
    pub text: String,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Model name as reported by the server, if it reports one.
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

/// Something that answers completion requests.
pub trait Endpoint: Sync {
    fn complete(&self, request: &CompletionRequest, probe: &Probe) -> Result<Completion, TransportError>;
}

/// Where response timestamps and latencies come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClockMode {
    System,
    /// Every response is stamped with this instant and zero latency, which
    /// makes logs of deterministic endpoints byte-reproducible.
    Fixed(DateTime<Utc>),
}

impl ClockMode {
    pub fn epoch() -> Self {
        ClockMode::Fixed(DateTime::<Utc>::UNIX_EPOCH)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub template_id: String,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub clock: ClockMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            template_id: DEFAULT_TEMPLATE.to_string(),
            max_tokens: 128,
            concurrency: 16,
            retry: RetryPolicy::default(),
            clock: ClockMode::System,
        }
    }
}

impl EvalConfig {
    /// Digest of the settings that change response content. Concurrency,
    /// retries and the clock do not.
    pub fn digest(&self) -> String {
        sha256_hex(format!("template={};max_tokens={}", self.template_id, self.max_tokens).as_bytes())
    }
}

/// Simulated crash for resume testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPlan {
    /// Stop after committing this many new records.
    pub after_records: usize,
    /// Also leave half of the next record on disk.
    pub torn_write: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_probes: usize,
    pub n_resumed: usize,
    pub n_queried: usize,
    pub n_transport_errors: usize,
}

fn query(
    endpoint: &dyn Endpoint,
    spec: &ModelSpec,
    probe: &Probe,
    config: &EvalConfig,
) -> Result<RawResponse, ModelError> {
    let prompt = render_prompt(probe, &config.template_id)?;
    let request = CompletionRequest::new(&probe.probe_id, prompt, config.max_tokens);
    let started = Instant::now();
    let outcome = config
        .retry
        .run(|_| endpoint.complete(&request, probe), |e: &TransportError| e.retryable);
    let (timestamp, latency_ms) = match config.clock {
        ClockMode::System => (Utc::now(), started.elapsed().as_secs_f64() * 1e3),
        ClockMode::Fixed(t) => (t, 0.0),
    };
    let (text, transport_error) = match outcome {
        Ok(c) => {
            if let Some(reported) = c.model {
                if reported != spec.model_name {
                    return Err(ModelError::ModelMismatch {
                        expected: spec.model_name.clone(),
                        reported,
                    });
                }
            }
            (c.text, None)
        }
        Err(e) => (String::new(), Some(e.message)),
    };
    Ok(RawResponse {
        probe_id: probe.probe_id.clone(),
        model_name: spec.model_name.clone(),
        text,
        latency_ms,
        transport_error,
        timestamp,
    })
}

/// Runs every probe of `suite` against `endpoint`, appending to `log_path`.
///
/// An existing log is resumed: its header must match this run and its
/// records must be a prefix of the suite. A torn final line is discarded.
pub fn evaluate_model(
    endpoint: &dyn Endpoint,
    spec: &ModelSpec,
    suite: &ProbeSuite,
    config: &EvalConfig,
    log_path: &Path,
    fault: Option<FaultPlan>,
) -> Result<EvalSummary, ModelError> {
    spec.validate()?;
    render_prompt_check(&config.template_id)?;
    let header = LogHeader {
        model: spec.clone(),
        corpus_hash: suite.corpus_hash.clone(),
        config_digest: config.digest(),
        n_probes: suite.probes.len(),
    };
    let mut log = ResponseLog::open_or_create(log_path, &header)?;
    let done = log.completed().len();
    for (rec, probe) in log.completed().iter().zip(&suite.probes) {
        if rec.probe_id != probe.probe_id {
            return Err(ModelError::CorruptLog {
                path: log_path.display().to_string(),
                message: format!(
                    "record {} is {}, expected {}",
                    rec.probe_id, rec.probe_id, probe.probe_id
                ),
            });
        }
    }
    if done > suite.probes.len() {
        return Err(ModelError::CorruptLog {
            path: log_path.display().to_string(),
            message: "more records than probes".into(),
        });
    }
    let resumed_errors = log
        .completed()
        .iter()
        .filter(|r| r.transport_error.is_some())
        .count();

    let pending = &suite.probes[done..];
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = config.concurrency.clamp(1, pending.len().max(1));
    let (tx, rx) = mpsc::sync_channel::<(usize, Result<RawResponse, ModelError>)>(workers * 4);

    let mut written = 0usize;
    let mut transport_errors = resumed_errors;
    let result = std::thread::scope(|s| -> Result<(), ModelError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            s.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(probe) = pending.get(i) else { break };
                let r = query(endpoint, spec, probe, config);
                if tx.send((i, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffered: BTreeMap<usize, RawResponse> = BTreeMap::new();
        let outcome = (|| {
            for (i, r) in rx.iter() {
                buffered.insert(i, r?);
                while let Some(resp) = buffered.remove(&written) {
                    if let Some(f) = fault {
                        if written == f.after_records {
                            if f.torn_write {
                                log.append_torn(&resp)?;
                            }
                            return Err(ModelError::Interrupted { written });
                        }
                    }
                    if resp.transport_error.is_some() {
                        transport_errors += 1;
                    }
                    log.append(&resp)?;
                    written += 1;
                }
            }
            Ok(())
        })();
        if outcome.is_err() {
            stop.store(true, Ordering::Relaxed);
            // Drain so blocked workers can exit.
            for _ in rx.iter() {}
        }
        outcome
    });
    result?;
    if done + written != suite.probes.len() {
        return Err(ModelError::CorruptLog {
            path: log_path.display().to_string(),
            message: format!("wrote {} of {} records", done + written, suite.probes.len()),
        });
    }
    Ok(EvalSummary {
        n_probes: suite.probes.len(),
        n_resumed: done,
        n_queried: written,
        n_transport_errors: transport_errors,
    })
}

fn render_prompt_check(template_id: &str) -> Result<(), ModelError> {
    if TEMPLATES.iter().any(|(id, _, _)| *id == template_id) {
        Ok(())
    } else {
        Err(ModelError::UnknownTemplate(template_id.to_string()))
    }
}

/// Appends raw bytes; used by tests to fake partial writes.
pub fn append_bytes(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    let mut f = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}
