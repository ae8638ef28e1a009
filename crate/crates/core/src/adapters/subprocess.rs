//! Local model process speaking line-delimited JSON over stdio.
//!
//! The child's first stdout line must be `{"hello":{"capabilities":{...}}}`.
//! Each request is one line `{id, turns, audio_path, params:{greedy:true}}`;
//! each reply is one line `{id, text}` or `{id, error:{code, message}}`.
//! Requests are serialized: the adapter declares a concurrency of one.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{check_dialogue, AdapterError, Capabilities, ModelAdapter, Reply, Request};

const STDERR_TAIL_LINES: usize = 20;

#[derive(Debug, Clone)]
pub struct SubprocessOptions {
    pub timeout: Duration,
    pub hello_timeout: Duration,
}

impl Default for SubprocessOptions {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(120), hello_timeout: Duration::from_secs(60) }
    }
}

struct State {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    next_id: u64,
    dead: Option<String>,
    stderr_thread: Option<JoinHandle<()>>,
}

pub struct SubprocessAdapter {
    model_id: String,
    capabilities: Capabilities,
    timeout: Duration,
    stderr: Arc<Mutex<VecDeque<String>>>,
    state: Mutex<State>,
}

impl State {
    /// Reaps the child after its stdout closed and returns the stderr tail.
    fn crash(&mut self, stderr: &Mutex<VecDeque<String>>) -> String {
        if self.dead.is_none() {
            self.stdin = None;
            let deadline = Instant::now() + Duration::from_secs(1);
            while Instant::now() < deadline {
                if matches!(self.child.try_wait(), Ok(Some(_))) {
                    break;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = self.child.kill();
            let _ = self.child.wait();
            if let Some(h) = self.stderr_thread.take() {
                let deadline = Instant::now() + Duration::from_secs(1);
                while !h.is_finished() && Instant::now() < deadline {
                    thread::sleep(Duration::from_millis(10));
                }
            }
            let tail: Vec<String> = stderr.lock().expect("stderr lock").iter().cloned().collect();
            self.dead = Some(tail.join("\n"));
        }
        self.dead.clone().unwrap_or_default()
    }
}

impl SubprocessAdapter {
    /// Launches `command` and waits for its hello line.
    pub fn spawn(model_id: impl Into<String>, command: &[String], options: SubprocessOptions) -> Result<Self, AdapterError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| AdapterError::Config("empty subprocess command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| AdapterError::BackendUnavailable(format!("cannot launch `{program}`: {e}")))?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(VecDeque::new()));
        let child_stderr = child.stderr.take().expect("piped stderr");
        let sink = stderr.clone();
        let stderr_thread = thread::spawn(move || {
            for line in BufReader::new(child_stderr).lines() {
                let Ok(line) = line else { break };
                let mut tail = sink.lock().expect("stderr lock");
                if tail.len() == STDERR_TAIL_LINES {
                    tail.pop_front();
                }
                tail.push_back(line);
            }
        });

        let mut state = State {
            stdin: child.stdin.take(),
            child,
            lines,
            next_id: 1,
            dead: None,
            stderr_thread: Some(stderr_thread),
        };
        let hello = match state.lines.recv_timeout(options.hello_timeout) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                let _ = state.child.kill();
                return Err(AdapterError::Timeout("no hello line from backend process".into()));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(AdapterError::ProcessCrashed { stderr_tail: state.crash(&stderr) });
            }
        };
        let caps = serde_json::from_str::<Value>(&hello)
            .ok()
            .and_then(|v| v.get("hello").and_then(|h| h.get("capabilities")).cloned())
            .ok_or_else(|| AdapterError::ProtocolViolation(format!("expected hello line, got `{hello}`")))?;
        let flag = |k: &str| caps.get(k).and_then(Value::as_bool).unwrap_or(false);
        let capabilities = Capabilities {
            accepts_audio: flag("accepts_audio"),
            accepts_history: flag("accepts_history"),
            max_concurrency: 1,
        };

        Ok(Self { model_id: model_id.into(), capabilities, timeout: options.timeout, stderr, state: Mutex::new(state) })
    }
}

impl ModelAdapter for SubprocessAdapter {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn respond(&self, request: &Request<'_>) -> Result<Reply, AdapterError> {
        check_dialogue(request.turns)?;
        let mut state = self.state.lock().expect("subprocess state lock");
        if let Some(tail) = &state.dead {
            return Err(AdapterError::ProcessCrashed { stderr_tail: tail.clone() });
        }
        let id = state.next_id;
        state.next_id += 1;
        let line = json!({
            "id": id,
            "turns": request.turns,
            "audio_path": request.audio.map(|p| p.to_string_lossy().into_owned()),
            "params": {"greedy": true},
        })
        .to_string();
        let written = match state.stdin.as_mut() {
            Some(stdin) => writeln!(stdin, "{line}").and_then(|_| stdin.flush()).is_ok(),
            None => false,
        };
        if !written {
            return Err(AdapterError::ProcessCrashed { stderr_tail: state.crash(&self.stderr) });
        }

        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match state.lines.recv_timeout(remaining) {
                Ok(line) => line,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(AdapterError::Timeout(format!("request {id} after {:?}", self.timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(AdapterError::ProcessCrashed { stderr_tail: state.crash(&self.stderr) })
                }
            };
            let Ok(Value::Object(reply)) = serde_json::from_str::<Value>(&line) else {
                return Err(AdapterError::ProtocolViolation(format!("non-JSON line from backend: {line}")));
            };
            match reply.get("id").and_then(Value::as_u64) {
                Some(rid) if rid == id => {}
                // Late reply to a request that already timed out.
                Some(rid) if rid < id => continue,
                _ => return Err(AdapterError::ProtocolViolation(format!("reply with unexpected id: {line}"))),
            }
            if let Some(err) = reply.get("error") {
                let field = |k: &str| err.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
                return Err(match err.as_str() {
                    Some(msg) => AdapterError::Backend { code: "error".into(), message: msg.into() },
                    None => AdapterError::Backend { code: field("code"), message: field("message") },
                });
            }
            return match reply.get("text").and_then(Value::as_str) {
                Some(text) => Ok(Reply::text(text)),
                None => Err(AdapterError::ProtocolViolation(format!("reply lacks text: {line}"))),
            };
        }
    }
}

impl Drop for SubprocessAdapter {
    fn drop(&mut self) {
        let Ok(state) = self.state.get_mut() else { return };
        state.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if !matches!(state.child.try_wait(), Ok(None)) {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = state.child.kill();
        let _ = state.child.wait();
    }
}
