//! Runs a benchmark manifest through one model under a set of settings.
//!
//! One [`EvalRecord`] is produced per (instance, setting, model). Records are
//! appended as they complete, so an interrupted run resumes where it stopped;
//! on completion the records file is rewritten in canonical order. Every
//! exchange with the backend is kept in an audit log.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{ModelAdapter, Request, RequestContext, StageTrace};
use crate::benchmark::{BenchmarkInstance, BenchmarkManifest};
use crate::protocol::{self, guard_caption, ProtocolError, Setting, Turn, DEFAULT_CAPTION_MAX_CHARS};
use crate::scoring::{parse_answer, EvalRecord, Parsed};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    BadRecord { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub settings: Vec<Setting>,
    pub concurrency: usize,
    pub caption_max_chars: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { settings: vec![Setting::Original], concurrency: 4, caption_max_chars: DEFAULT_CAPTION_MAX_CHARS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRound {
    pub turns: Vec<Turn>,
    pub audio_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub retries: u32,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageTrace>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub caption_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub instance_id: String,
    pub setting: Setting,
    pub model_id: String,
    pub rounds: Vec<AuditRound>,
    pub parsed: Parsed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalSummary {
    pub records_path: PathBuf,
    pub audit_path: PathBuf,
    pub written: usize,
    pub resumed: usize,
    pub backend_errors: usize,
    /// Jobs that could not be rendered for this backend (logged, not scored).
    pub skipped: Vec<String>,
}

/// Reads records, skipping a truncated final line left by an interrupted run.
pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let io = |source| EvalError::Io { path: path.to_path_buf(), source };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e)),
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("{}: dropping truncated final record", path.display());
            }
            Err(e) => return Err(EvalError::BadRecord { path: path.to_path_buf(), line: i + 1, reason: e.to_string() }),
        }
    }
    Ok(out)
}

fn write_records(path: &Path, records: &[EvalRecord]) -> Result<(), EvalError> {
    let io = |source| EvalError::Io { path: path.to_path_buf(), source };
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
        for r in records {
            serde_json::to_writer(&mut w, r).expect("record serializes");
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

fn sort_canonical(records: &mut [EvalRecord], manifest: &BenchmarkManifest) {
    let position: HashMap<&str, usize> =
        manifest.instances.iter().enumerate().map(|(i, inst)| (inst.instance_id.as_str(), i)).collect();
    let setting_rank = |s: Setting| Setting::ALL.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        a.model_id
            .cmp(&b.model_id)
            .then(position.get(a.instance_id.as_str()).unwrap_or(&usize::MAX).cmp(position.get(b.instance_id.as_str()).unwrap_or(&usize::MAX)))
            .then(a.instance_id.cmp(&b.instance_id))
            .then(setting_rank(a.setting).cmp(&setting_rank(b.setting)))
    });
}

struct Sinks {
    records: BufWriter<File>,
    audit: BufWriter<File>,
    collected: Vec<EvalRecord>,
    backend_errors: usize,
}

fn open_append(path: &Path) -> Result<BufWriter<File>, EvalError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map(BufWriter::new)
        .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

fn millis(start: Instant) -> u64 {
    start.elapsed().as_millis().min(u128::from(u64::MAX)) as u64
}

/// Runs one instance under one setting. `Ok(None)` means the combination
/// cannot be rendered and was skipped.
fn run_job(
    manifest: &BenchmarkManifest,
    instance: &BenchmarkInstance,
    setting: Setting,
    adapter: &dyn ModelAdapter,
    options: &EvalOptions,
    silence_dir: &Path,
) -> Result<Option<(EvalRecord, AuditEntry)>, EvalError> {
    let caps = adapter.capabilities();
    let audio = manifest.resolve_audio(instance);
    let effective = if setting == Setting::Silent {
        protocol::silent_variant(instance, &audio, silence_dir)?
    } else {
        instance.clone()
    };
    let audio_ref = if setting == Setting::Silent { effective.audio_path.clone() } else { audio };
    let plan = match protocol::plan_for(&effective, setting, audio_ref) {
        Ok(p) => p,
        Err(ProtocolError::UnsupportedTemplate(q)) => {
            log::warn!("skipping {} under {setting}: no negatable template for `{q}`", instance.instance_id);
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };

    let context = RequestContext { instance_id: instance.instance_id.clone(), ground_truth: Some(effective.ground_truth) };
    let audio_path = caps.accepts_audio.then_some(plan.audio_ref.as_path());
    let mut captured = Vec::new();
    let mut rounds = Vec::with_capacity(plan.rounds());
    let mut outcome: Result<String, String> = Err("no rounds".into());
    for round in 0..plan.rounds() {
        let turns = plan.dialogue(round, &captured);
        let start = Instant::now();
        let result = adapter.respond(&Request { turns: &turns, audio: audio_path, context: context.clone() });
        let mut entry = AuditRound {
            turns,
            audio_ref: audio_path.map(|p| p.to_string_lossy().into_owned()),
            response: None,
            error: None,
            retries: 0,
            latency_ms: millis(start),
            stages: Vec::new(),
            caption_truncated: false,
        };
        match result {
            Ok(reply) => {
                entry.retries = reply.retries;
                entry.stages = reply.stages;
                entry.response = Some(reply.text.clone());
                if round + 1 < plan.rounds() {
                    let (caption, truncated) = guard_caption(&reply.text, options.caption_max_chars);
                    if truncated {
                        log::warn!("{}: caption truncated to {} characters", instance.instance_id, options.caption_max_chars);
                    }
                    entry.caption_truncated = truncated;
                    captured.push(caption);
                } else {
                    outcome = Ok(reply.text);
                }
                rounds.push(entry);
            }
            Err(e) => {
                entry.error = Some(e.to_string());
                rounds.push(entry);
                outcome = Err(e.to_string());
                break;
            }
        }
    }

    let (raw_text, parsed, error) = match outcome {
        Ok(text) => {
            let parsed = parse_answer(&text);
            (text, parsed, None)
        }
        Err(e) => (String::new(), Parsed::BackendError, Some(e)),
    };
    let record = EvalRecord {
        instance_id: instance.instance_id.clone(),
        pair_id: instance.pair_id.clone(),
        pair_role: instance.pair_role,
        task: instance.task,
        setting,
        model_id: adapter.model_id().to_string(),
        raw_text,
        parsed,
        ground_truth: effective.ground_truth,
        error,
    };
    let audit = AuditEntry {
        instance_id: instance.instance_id.clone(),
        setting,
        model_id: adapter.model_id().to_string(),
        rounds,
        parsed,
    };
    Ok(Some((record, audit)))
}

/// Evaluates every (instance, setting) pair not already recorded for this
/// model, writing `records.jsonl` and `audit.jsonl` under `out_dir`.
pub fn run_eval(
    manifest: &BenchmarkManifest,
    adapter: &dyn ModelAdapter,
    options: &EvalOptions,
    out_dir: &Path,
) -> Result<EvalSummary, EvalError> {
    fs::create_dir_all(out_dir).map_err(|source| EvalError::Io { path: out_dir.to_path_buf(), source })?;
    let records_path = out_dir.join(RECORDS_FILE);
    let audit_path = out_dir.join(AUDIT_FILE);
    let silence_dir = out_dir.join("silence");

    let mut existing = read_records(&records_path)?;
    let mut seen = HashSet::new();
    existing.retain(|r| seen.insert(r.key()));
    write_records(&records_path, &existing)?;

    let caps = adapter.capabilities();
    let model_id = adapter.model_id().to_string();
    let mut summary = EvalSummary { records_path: records_path.clone(), audit_path: audit_path.clone(), ..Default::default() };
    let mut jobs = Vec::new();
    for (i, inst) in manifest.instances.iter().enumerate() {
        for &setting in &options.settings {
            if seen.contains(&(inst.instance_id.clone(), setting, model_id.clone())) {
                summary.resumed += 1;
            } else if setting == Setting::Match && !caps.accepts_history {
                summary.skipped.push(format!("{} {setting}: backend keeps no dialogue history", inst.instance_id));
            } else {
                jobs.push((i, setting));
            }
        }
    }
    if !summary.skipped.is_empty() {
        log::warn!("{model_id}: {} jobs skipped (match needs dialogue history)", summary.skipped.len());
    }

    let sinks = Mutex::new(Sinks {
        records: open_append(&records_path)?,
        audit: open_append(&audit_path)?,
        collected: Vec::with_capacity(jobs.len()),
        backend_errors: 0,
    });
    let skipped = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = options.concurrency.max(1).min(caps.max_concurrency.max(1)).min(jobs.len().max(1));
    let failure: Mutex<Option<EvalError>> = Mutex::new(None);

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, setting)) = jobs.get(k) else { break };
                if failure.lock().expect("failure lock").is_some() {
                    break;
                }
                let inst = &manifest.instances[i];
                match run_job(manifest, inst, setting, adapter, options, &silence_dir) {
                    Ok(Some((record, audit))) => {
                        let mut s = sinks.lock().expect("sink lock");
                        let s = &mut *s;
                        let res = serde_json::to_writer(&mut s.records, &record)
                            .map_err(std::io::Error::from)
                            .and_then(|_| s.records.write_all(b"\n"))
                            .and_then(|_| s.records.flush())
                            .and_then(|_| serde_json::to_writer(&mut s.audit, &audit).map_err(std::io::Error::from))
                            .and_then(|_| s.audit.write_all(b"\n"))
                            .and_then(|_| s.audit.flush());
                        if let Err(source) = res {
                            *failure.lock().expect("failure lock") = Some(EvalError::Io { path: records_path.clone(), source });
                            break;
                        }
                        if record.parsed == Parsed::BackendError {
                            s.backend_errors += 1;
                        }
                        s.collected.push(record);
                    }
                    Ok(None) => skipped.lock().expect("skip lock").push(format!("{} {setting}: unsupported template", inst.instance_id)),
                    Err(e) => {
                        *failure.lock().expect("failure lock") = Some(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(e);
    }

    let sinks = sinks.into_inner().expect("sink lock");
    summary.written = sinks.collected.len();
    summary.backend_errors = sinks.backend_errors;
    summary.skipped.extend(skipped.into_inner().expect("skip lock"));
    drop(sinks.records);
    drop(sinks.audit);

    let mut all = existing;
    all.extend(sinks.collected);
    sort_canonical(&mut all, manifest);
    write_records(&records_path, &all)?;
    Ok(summary)
}

/// Reads an audit log written by [`run_eval`].
pub fn read_audit(path: &Path) -> Result<Vec<AuditEntry>, EvalError> {
    let file = File::open(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::BadRecord { path: path.to_path_buf(), line: i + 1, reason: e.to_string() })?,
        );
    }
    Ok(out)
}
