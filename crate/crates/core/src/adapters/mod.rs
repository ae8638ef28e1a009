//! Model backends behind one interface.
//!
//! Every adapter answers a dialogue (user/assistant turns, never a system
//! turn) plus an optional audio file, using greedy decoding.

mod cascade;
mod http;
mod sim;
mod subprocess;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::Truth;
use crate::protocol::Turn;

pub use cascade::{cascade_prompt, cascade_respond, CascadeAdapter};
pub use http::{HttpAdapter, HttpOptions, AUDIO_SIZE_CAP};
pub use sim::{SimAdapter, SimKind, SimPolicy, SIM_CAPTION};
pub use subprocess::{SubprocessAdapter, SubprocessOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Captioner,
    Llm,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Captioner => "captioner",
            Stage::Llm => "llm",
        })
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("backend process crashed; stderr tail: {stderr_tail}")]
    ProcessCrashed { stderr_tail: String },
    #[error("backend reported error {code}: {message}")]
    Backend { code: String, message: String },
    #[error("invalid adapter configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<AdapterError>,
    },
}

impl AdapterError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            AdapterError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub accepts_audio: bool,
    pub accepts_history: bool,
    /// Requests the backend can serve at once.
    #[serde(default = "one")]
    pub max_concurrency: usize,
}

fn one() -> usize {
    1
}

/// Per-request metadata that only simulated backends consume.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestContext {
    pub instance_id: String,
    pub ground_truth: Option<Truth>,
}

#[derive(Debug, Clone)]
pub struct Request<'a> {
    pub turns: &'a [Turn],
    pub audio: Option<&'a Path>,
    pub context: RequestContext,
}

impl Request<'_> {
    pub fn last_user_text(&self) -> Option<&str> {
        self.turns.last().map(|t| t.text.as_str())
    }
}

/// Output of one intermediate stage, kept for audit logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: Stage,
    pub prompt: String,
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reply {
    pub text: String,
    /// Attempts beyond the first that were needed.
    pub retries: u32,
    pub stages: Vec<StageTrace>,
}

impl Reply {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Self::default() }
    }
}

pub trait ModelAdapter: Send + Sync {
    fn model_id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// Answers the dialogue, which must end with a user turn.
    fn respond(&self, request: &Request<'_>) -> Result<Reply, AdapterError>;
}

fn check_dialogue(turns: &[Turn]) -> Result<(), AdapterError> {
    use crate::protocol::{roles_alternate, Role};
    if turns.last().map(|t| t.role) != Some(Role::User) {
        return Err(AdapterError::ProtocolViolation("dialogue must end with a user turn".into()));
    }
    if !roles_alternate(turns) {
        return Err(AdapterError::ProtocolViolation("dialogue roles must alternate starting with user".into()));
    }
    Ok(())
}
