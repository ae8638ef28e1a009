//! Benchmark instances and the JSON-lines manifest that lists them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Existence,
    Temporal,
    Attribute,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Existence, Task::Temporal, Task::Attribute];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Existence => "existence",
            Task::Temporal => "temporal",
            Task::Attribute => "attribute",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "existence" => Ok(Task::Existence),
            "temporal" => Ok(Task::Temporal),
            "attribute" => Ok(Task::Attribute),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// Ground-truth answer to a discriminative question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRole {
    Before,
    After,
}

impl PairRole {
    pub fn as_str(self) -> &'static str {
        match self {
            PairRole::Before => "before",
            PairRole::After => "after",
        }
    }

    /// The "before" clip always holds the queried content.
    pub fn truth(self) -> Truth {
        match self {
            PairRole::Before => Truth::Yes,
            PairRole::After => Truth::No,
        }
    }
}

/// Where one constituent clip was placed in a synthesized pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub slot: String,
    pub source_id: String,
    pub label: String,
    pub offset_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_id: Option<String>,
    #[serde(default)]
    pub events: Vec<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_samples: Option<u64>,
    /// Per-pair generator seed.
    pub seed: u64,
    /// Samples hard clipped while mixing this member's audio.
    #[serde(default)]
    pub clipped_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub instance_id: String,
    pub task: Task,
    /// Relative to the manifest's directory unless absolute.
    pub audio_path: PathBuf,
    pub question_text: String,
    /// Byte ranges of the event phrase(s) inside `question_text`.
    pub phrase_spans: Vec<(usize, usize)>,
    pub ground_truth: Truth,
    pub pair_id: String,
    pub pair_role: PairRole,
    pub provenance: Provenance,
}

impl BenchmarkInstance {
    pub fn event_phrases(&self) -> impl Iterator<Item = &str> {
        self.phrase_spans.iter().map(|&(s, e)| &self.question_text[s..e])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub existence: usize,
    pub temporal: usize,
    pub attribute: usize,
}

impl TaskCounts {
    pub fn get(&self, task: Task) -> usize {
        match task {
            Task::Existence => self.existence,
            Task::Temporal => self.temporal,
            Task::Attribute => self.attribute,
        }
    }

    pub fn total(&self) -> usize {
        self.existence + self.temporal + self.attribute
    }
}

impl Default for TaskCounts {
    fn default() -> Self {
        Self { existence: 10_800, temporal: 3_116, attribute: 1_614 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub seed: u64,
    pub canonical_rate: u32,
    pub task_counts: TaskCounts,
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkManifest {
    pub header: ManifestHeader,
    pub instances: Vec<BenchmarkInstance>,
    /// Directory audio paths are resolved against; not serialized.
    pub base_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot access manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest {path} line {line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ManifestHeader,
}

impl BenchmarkManifest {
    pub fn resolve_audio(&self, instance: &BenchmarkInstance) -> PathBuf {
        self.base_dir.join(&instance.audio_path)
    }

    /// Serializes the header line followed by one instance per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&HeaderLine { header: self.header.clone() }).expect("header serializes");
        out.push('\n');
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        let io = |source| ManifestError::Io { path: path.to_path_buf(), source };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let io = |source| ManifestError::Io { path: path.to_path_buf(), source };
        let reader = BufReader::new(fs::File::open(path).map_err(io)?);
        let mut header = None;
        let mut instances = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |reason: String| ManifestError::Parse { path: path.to_path_buf(), line: idx + 1, reason };
            if header.is_none() {
                let h: HeaderLine = serde_json::from_str(&line).map_err(|e| parse(format!("header: {e}")))?;
                header = Some(h.header);
            } else {
                instances.push(serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?);
            }
        }
        let header = header.ok_or_else(|| ManifestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: "empty manifest".into(),
        })?;
        Ok(Self {
            header,
            instances,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// SHA-256 of the serialized manifest, hex encoded.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }

    pub fn count_by_task(&self) -> BTreeMap<Task, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.task).or_insert(0) += 1;
        }
        counts
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
