//! JSON-over-HTTP backend.
//!
//! `GET {endpoint}/capabilities` → `{accepts_audio, accepts_history}`;
//! `POST {endpoint}/respond` with `{model, turns, audio_b64, greedy: true}` →
//! `{text}`. Audio travels as base64-encoded WAV inside the JSON body.

use std::io::Read;
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::json;

use super::{check_dialogue, AdapterError, Capabilities, ModelAdapter, Reply, Request};

/// Largest audio file sent inline.
pub const AUDIO_SIZE_CAP: u64 = 25 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub max_concurrency: usize,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(120), attempts: 3, backoff: Duration::from_millis(500), max_concurrency: 4 }
    }
}

pub struct HttpAdapter {
    endpoint: String,
    model: String,
    token: Option<String>,
    agent: ureq::Agent,
    options: HttpOptions,
    capabilities: Capabilities,
}

#[derive(Deserialize)]
struct CapabilitiesReply {
    accepts_audio: bool,
    #[serde(default)]
    accepts_history: bool,
}

#[derive(Deserialize)]
struct RespondReply {
    text: String,
}

enum Failure {
    Retryable(AdapterError),
    Fatal(AdapterError),
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source = std::error::Error::source(err);
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            return matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock);
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

fn classify(url: &str, err: ureq::Error) -> Failure {
    match err {
        ureq::Error::Status(code @ (401 | 403), resp) => {
            Failure::Fatal(AdapterError::AuthFailure(format!("{url} returned {code}: {}", resp.into_string().unwrap_or_default())))
        }
        ureq::Error::Status(code, _) if code == 429 || code >= 500 => {
            Failure::Retryable(AdapterError::BackendUnavailable(format!("{url} returned {code}")))
        }
        ureq::Error::Status(code, resp) => Failure::Fatal(AdapterError::ProtocolViolation(format!(
            "{url} returned {code}: {}",
            resp.into_string().unwrap_or_default()
        ))),
        ureq::Error::Transport(t) if is_timeout(&t) => Failure::Retryable(AdapterError::Timeout(format!("{url}: {t}"))),
        ureq::Error::Transport(t) => Failure::Retryable(AdapterError::BackendUnavailable(format!("{url}: {t}"))),
    }
}

impl HttpAdapter {
    /// Connects and performs the capability handshake.
    pub fn connect(endpoint: &str, token: Option<String>, model: &str, options: HttpOptions) -> Result<Self, AdapterError> {
        if options.attempts == 0 {
            return Err(AdapterError::Config("attempts must be at least 1".into()));
        }
        let agent = ureq::AgentBuilder::new().timeout(options.timeout).build();
        let mut adapter = Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            token,
            agent,
            options,
            capabilities: Capabilities { accepts_audio: false, accepts_history: false, max_concurrency: 1 },
        };
        let url = format!("{}/capabilities", adapter.endpoint);
        let (body, _) = adapter.with_retries(|| {
            let req = adapter.authorize(adapter.agent.get(&url));
            let resp = req.call().map_err(|e| classify(&url, e))?;
            resp.into_string().map_err(|e| Failure::Retryable(AdapterError::BackendUnavailable(e.to_string())))
        })?;
        let caps: CapabilitiesReply = serde_json::from_str(&body)
            .map_err(|e| AdapterError::ProtocolViolation(format!("bad capabilities reply `{body}`: {e}")))?;
        adapter.capabilities = Capabilities {
            accepts_audio: caps.accepts_audio,
            accepts_history: caps.accepts_history,
            max_concurrency: adapter.options.max_concurrency.max(1),
        };
        Ok(adapter)
    }

    fn authorize(&self, req: ureq::Request) -> ureq::Request {
        match &self.token {
            Some(t) => req.set("Authorization", &format!("Bearer {t}")),
            None => req,
        }
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, Failure>) -> Result<(T, u32), AdapterError> {
        let mut delay = self.options.backoff;
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok((v, attempt)),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) => {
                    attempt += 1;
                    if attempt >= self.options.attempts {
                        return Err(e);
                    }
                    log::warn!("{}: attempt {attempt} failed ({e}); retrying in {delay:?}", self.endpoint);
                    thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }

    fn encode_audio(&self, request: &Request<'_>) -> Result<Option<String>, AdapterError> {
        let Some(path) = request.audio.filter(|_| self.capabilities.accepts_audio) else {
            return Ok(None);
        };
        let file = std::fs::File::open(path)
            .map_err(|e| AdapterError::Config(format!("cannot read audio {}: {e}", path.display())))?;
        let mut bytes = Vec::new();
        file.take(AUDIO_SIZE_CAP + 1)
            .read_to_end(&mut bytes)
            .map_err(|e| AdapterError::Config(format!("cannot read audio {}: {e}", path.display())))?;
        if bytes.len() as u64 > AUDIO_SIZE_CAP {
            return Err(AdapterError::Config(format!("audio {} exceeds the {AUDIO_SIZE_CAP}-byte cap", path.display())));
        }
        Ok(Some(base64::engine::general_purpose::STANDARD.encode(bytes)))
    }
}

impl ModelAdapter for HttpAdapter {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn respond(&self, request: &Request<'_>) -> Result<Reply, AdapterError> {
        check_dialogue(request.turns)?;
        let body = json!({
            "model": self.model,
            "turns": request.turns,
            "audio_b64": self.encode_audio(request)?,
            "greedy": true,
            "temperature": 0.0,
        })
        .to_string();
        let url = format!("{}/respond", self.endpoint);
        let (text, retries) = self.with_retries(|| {
            let req = self.authorize(self.agent.post(&url)).set("Content-Type", "application/json");
            let resp = req.send_string(&body).map_err(|e| classify(&url, e))?;
            let raw = resp.into_string().map_err(|e| Failure::Retryable(AdapterError::BackendUnavailable(e.to_string())))?;
            serde_json::from_str::<RespondReply>(&raw)
                .map(|r| r.text)
                .map_err(|e| Failure::Fatal(AdapterError::ProtocolViolation(format!("bad reply `{raw}`: {e}"))))
        })?;
        Ok(Reply { text, retries, stages: Vec::new() })
    }
}
