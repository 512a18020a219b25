//! A small HTTP/1.1 server for exercising the network clients offline.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::{json, Value};

use super::mock::{mock_text, MemoryProfile};
use super::prompt::render_prompt;
use crate::corpus::PaperRecord;
use crate::probegen::Probe;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubRequest {
    pub method: String,
    pub path: String,
    /// Lower-cased header names.
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
}

impl StubReply {
    pub fn json(status: u16, body: &Value) -> Self {
        Self {
            status,
            body: body.to_string(),
        }
    }
}

type Handler = dyn Fn(&StubRequest) -> StubReply + Send + Sync;

/// Serves each connection on its own thread until dropped.
pub struct StubServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    accept_thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn spawn(handler: impl Fn(&StubRequest) -> StubReply + Send + Sync + 'static) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let (stop, count) = (shutdown.clone(), hits.clone());
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (handler, count) = (handler.clone(), count.clone());
                std::thread::spawn(move || {
                    let _ = serve(stream, &*handler, &count);
                });
            }
        });
        Ok(Self {
            addr,
            shutdown,
            hits,
            accept_thread: Some(accept_thread),
        })
    }

    /// `http://127.0.0.1:<port>`.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests served so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

fn read_request(reader: &mut BufReader<TcpStream>) -> io::Result<Option<StubRequest>> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = BTreeMap::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers
        .get("content-length")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    Ok(Some(StubRequest {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    }))
}

fn serve(stream: TcpStream, handler: &Handler, hits: &AtomicUsize) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    while let Some(req) = read_request(&mut reader)? {
        hits.fetch_add(1, Ordering::SeqCst);
        let reply = handler(&req);
        let head = format!(
            "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            reply.status,
            reply.body.len()
        );
        writer.write_all(head.as_bytes())?;
        writer.write_all(reply.body.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// A handler that answers chat-completion requests like the in-process mock
/// model, identifying each probe by its rendered user prompt.
pub fn mock_model_handler(
    model_name: &str,
    profile: MemoryProfile,
    papers: &[PaperRecord],
    probes: &[Probe],
    template_id: &str,
) -> impl Fn(&StubRequest) -> StubReply + Send + Sync + 'static {
    let papers: BTreeMap<String, PaperRecord> =
        papers.iter().map(|p| (p.paper_id.clone(), p.clone())).collect();
    let by_prompt: BTreeMap<String, Probe> = probes
        .iter()
        .filter_map(|p| render_prompt(p, template_id).ok().map(|r| (r.user, p.clone())))
        .collect();
    let model_name = model_name.to_string();
    move |req| {
        if req.method != "POST" || !req.path.ends_with("/chat/completions") {
            return StubReply::json(404, &json!({"error": "not found"}));
        }
        let Ok(body) = serde_json::from_str::<Value>(&req.body) else {
            return StubReply::json(400, &json!({"error": "bad json"}));
        };
        let user = body
            .pointer("/messages/1/content")
            .and_then(Value::as_str)
            .unwrap_or_default();
        let Some(probe) = by_prompt.get(user) else {
            return StubReply::json(400, &json!({"error": "unknown prompt"}));
        };
        let Some(paper) = papers.get(&probe.paper_id) else {
            return StubReply::json(400, &json!({"error": "unknown paper"}));
        };
        let text = mock_text(&profile, probe, paper).1;
        StubReply::json(
            200,
            &json!({
                "model": model_name,
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
            }),
        )
    }
}
