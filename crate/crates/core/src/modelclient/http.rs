use std::time::Duration;

use serde_json::{json, Value};

use super::{Completion, CompletionRequest, Endpoint, TransportError, AUTH_TOKEN_ENV};
use crate::probegen::Probe;

/// Client for a chat-completions server.
pub struct HttpEndpoint {
    url: String,
    model_name: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEndpoint")
            .field("url", &self.url)
            .field("model_name", &self.model_name)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpEndpoint {
    /// `base_url` is the server root including any version prefix, e.g.
    /// `http://localhost:8000/v1`. The bearer token, if any, is read from
    /// the `MEMPROBE_API_KEY` environment variable.
    pub fn new(base_url: &str, model_name: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model_name: model_name.into(),
            token: std::env::var(AUTH_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            agent,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        json!({
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature(),
            "max_tokens": request.max_tokens,
        })
    }
}

fn transport(message: impl Into<String>, retryable: bool) -> TransportError {
    TransportError {
        message: message.into(),
        retryable,
    }
}

pub(crate) fn parse_completion(text: &str) -> Result<Completion, TransportError> {
    let v: Value = serde_json::from_str(text).map_err(|e| transport(format!("malformed body: {e}"), false))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| transport("response has no choices[0].message", false))?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => return Err(transport(format!("unexpected content {other}"), false)),
    };
    let model = v.get("model").and_then(Value::as_str).map(str::to_string);
    Ok(Completion { text, model })
}

impl Endpoint for HttpEndpoint {
    fn complete(&self, request: &CompletionRequest, _probe: &Probe) -> Result<Completion, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(self.body(request))
            .map_err(|e| transport(e.to_string(), true))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| transport(e.to_string(), true))?;
        match status {
            200..=299 => parse_completion(&text),
            408 | 429 => Err(transport(format!("HTTP {status}"), true)),
            s if s >= 500 => Err(transport(format!("HTTP {s}"), true)),
            s => Err(transport(format!("HTTP {s}"), false)),
        }
    }
}
