//! Rendering benchmark instances into the dialogues sent to a model.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{BenchmarkInstance, Task, Truth};
use crate::corpus::{self, AudioClip, CorpusError};
use crate::templates::{CAPTION_PROMPT, TEMPORAL_CAPTION_PROMPT};

/// Captions longer than this many characters are truncated before being
/// replayed in the second MATCH round.
pub const DEFAULT_CAPTION_MAX_CHARS: usize = 2048;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown setting `{0}`")]
    UnknownSetting(String),
    #[error("question matches no negatable template: {0}")]
    UnsupportedTemplate(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot prepare silence file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Original,
    EmphasisQuote,
    EmphasisBold,
    Negative,
    Silent,
    Match,
}

impl Setting {
    /// Report order: Orig., Emp. (quote, bold), Neg., Silent, MATCH.
    pub const ALL: [Setting; 6] = [
        Setting::Original,
        Setting::EmphasisQuote,
        Setting::EmphasisBold,
        Setting::Negative,
        Setting::Silent,
        Setting::Match,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Original => "original",
            Setting::EmphasisQuote => "emphasis_quote",
            Setting::EmphasisBold => "emphasis_bold",
            Setting::Negative => "negative",
            Setting::Silent => "silent",
            Setting::Match => "match",
        }
    }

    /// Column heading used in reports.
    pub fn short_name(self) -> &'static str {
        match self {
            Setting::Original => "Orig.",
            Setting::EmphasisQuote => "Emp. (quote)",
            Setting::EmphasisBold => "Emp. (bold)",
            Setting::Negative => "Neg.",
            Setting::Silent => "Silent",
            Setting::Match => "MATCH",
        }
    }

    /// Parses a comma-separated list such as `original,match`.
    pub fn parse_list(s: &str) -> Result<Vec<Setting>, ProtocolError> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let setting = part.parse()?;
            if !out.contains(&setting) {
                out.push(setting);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setting::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ProtocolError::UnknownSetting(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into() }
    }
}

/// True when roles alternate user/assistant starting with user.
pub fn roles_alternate(turns: &[Turn]) -> bool {
    turns.iter().enumerate().all(|(i, t)| t.role == if i % 2 == 0 { Role::User } else { Role::Assistant })
}

/// The user turns to send for one instance under one setting. For `match`
/// plans the driver sends turn 1, captures the reply, and replays it as the
/// assistant turn before turn 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPlan {
    pub setting: Setting,
    pub turns: Vec<Turn>,
    pub audio_ref: PathBuf,
}

impl PromptPlan {
    pub fn rounds(&self) -> usize {
        self.turns.len()
    }

    /// Dialogue for round `round` (0-based), given the assistant replies
    /// captured in earlier rounds.
    pub fn dialogue(&self, round: usize, captured: &[String]) -> Vec<Turn> {
        let mut out = Vec::with_capacity(2 * round + 1);
        for (i, turn) in self.turns.iter().take(round + 1).enumerate() {
            out.push(turn.clone());
            if i < round {
                out.push(Turn::assistant(captured.get(i).cloned().unwrap_or_default()));
            }
        }
        out
    }
}

fn wrap_spans(question: &str, spans: &[(usize, usize)], open: &str, close: &str) -> String {
    let mut out = question.to_string();
    let mut sorted = spans.to_vec();
    sorted.sort_unstable_by_key(|s| std::cmp::Reverse(s.0));
    for (start, end) in sorted {
        if start <= end && end <= out.len() && out.is_char_boundary(start) && out.is_char_boundary(end) {
            out.insert_str(end, close);
            out.insert_str(start, open);
        }
    }
    out
}

/// Question text for `instance` under `setting`.
pub fn render_question(instance: &BenchmarkInstance, setting: Setting) -> Result<String, ProtocolError> {
    let q = &instance.question_text;
    match setting {
        Setting::Original | Setting::Silent | Setting::Match => Ok(q.clone()),
        Setting::EmphasisQuote => Ok(wrap_spans(q, &instance.phrase_spans, "\"", "\"")),
        Setting::EmphasisBold => Ok(wrap_spans(q, &instance.phrase_spans, "**", "**")),
        Setting::Negative => negate_question(q),
    }
}

/// Turns a template question into its negative form:
/// `Is there ...` → `Isn't there ...`,
/// `Does the sound of X occur before ...` → `Doesn't the sound of X occur before ...`.
pub fn negate_question(q: &str) -> Result<String, ProtocolError> {
    if let Some(rest) = q.strip_prefix("Is there") {
        return Ok(format!("Isn't there{rest}"));
    }
    if let Some(rest) = q.strip_prefix("Does the sound of") {
        if rest.contains(" occur before ") {
            return Ok(format!("Doesn't the sound of{rest}"));
        }
    }
    Err(ProtocolError::UnsupportedTemplate(q.to_string()))
}

/// First-round prompt for MATCH on `task`.
pub fn caption_prompt(task: Task) -> &'static str {
    match task {
        Task::Temporal => TEMPORAL_CAPTION_PROMPT,
        Task::Existence | Task::Attribute => CAPTION_PROMPT,
    }
}

/// Two-round plan: caption first, then the original question with the
/// caption in history.
pub fn match_plan(instance: &BenchmarkInstance, audio_ref: PathBuf) -> PromptPlan {
    PromptPlan {
        setting: Setting::Match,
        turns: vec![Turn::user(caption_prompt(instance.task)), Turn::user(instance.question_text.clone())],
        audio_ref,
    }
}

/// Plan for any setting. `audio_ref` must already point at the silence file
/// for the silent setting (see [`silent_variant`]).
pub fn plan_for(instance: &BenchmarkInstance, setting: Setting, audio_ref: PathBuf) -> Result<PromptPlan, ProtocolError> {
    if setting == Setting::Match {
        return Ok(match_plan(instance, audio_ref));
    }
    Ok(PromptPlan { setting, turns: vec![Turn::user(render_question(instance, setting)?)], audio_ref })
}

/// Truncates a captured caption to at most `max_chars` characters.
pub fn guard_caption(caption: &str, max_chars: usize) -> (String, bool) {
    match caption.char_indices().nth(max_chars) {
        Some((cut, _)) => (caption[..cut].to_string(), true),
        None => (caption.to_string(), false),
    }
}

/// Copy of `instance` whose audio is an all-zero clip of the same length.
///
/// `audio_path` is the instance's resolved audio file. Silence files are
/// content addressed (`silence_{rate}hz_{frames}.wav`), so instances of equal
/// duration share one file. Nothing is audible in silence, so the expected
/// answer becomes "no".
pub fn silent_variant(instance: &BenchmarkInstance, audio_path: &Path, silence_dir: &Path) -> Result<BenchmarkInstance, ProtocolError> {
    let (frames, rate) = corpus::wav_header(audio_path)?;
    let path = silence_dir.join(format!("silence_{rate}hz_{frames}.wav"));
    if !path.is_file() {
        fs::create_dir_all(silence_dir).map_err(|source| ProtocolError::Io { path: silence_dir.to_path_buf(), source })?;
        // Write then rename so concurrent workers never observe a partial file.
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let unique = NEXT.fetch_add(1, Ordering::Relaxed);
        let tmp = silence_dir.join(format!(".silence_{rate}hz_{frames}.{}.{unique}.tmp", std::process::id()));
        corpus::write_wav(&AudioClip::zeros(frames as usize, rate), &tmp)?;
        fs::rename(&tmp, &path).map_err(|source| ProtocolError::Io { path: path.clone(), source })?;
    }
    let mut out = instance.clone();
    out.audio_path = path;
    out.ground_truth = Truth::No;
    Ok(out)
}
