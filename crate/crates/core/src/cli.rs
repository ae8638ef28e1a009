//! Run configuration and the `synth` / `eval` / `score` / `report` commands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{
    AdapterError, CascadeAdapter, HttpAdapter, HttpOptions, ModelAdapter, SimAdapter, SimKind, SimPolicy,
    SubprocessAdapter, SubprocessOptions,
};
use crate::benchmark::{BenchmarkManifest, ManifestError, TaskCounts};
use crate::corpus::{self, CorpusError, DEFAULT_BACKGROUND_PEAK, DEFAULT_EVENT_PEAK, DEFAULT_SAMPLE_RATE};
use crate::eval::{self, EvalError, EvalOptions, RECORDS_FILE};
use crate::protocol::{ProtocolError, Setting, DEFAULT_CAPTION_MAX_CHARS};
use crate::scoring::{self, MetricsReport};
use crate::synthesis::{self, SynthConfig, SynthError, SynthOutput};

pub const AUTH_TOKEN_ENV: &str = "HEARCHECK_AUTH_TOKEN";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Backend(#[from] AdapterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{count} requests failed at the backend; records were still written to {records}")]
    PartialFailure { count: usize, records: PathBuf },
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl CliError {
    /// Stable, machine-parsable prefix for the single error line.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "E_CONFIG",
            CliError::Corpus(_) => "E_CORPUS",
            CliError::Synth(SynthError::InsufficientCorpus(_)) => "E_INSUFFICIENT_CORPUS",
            CliError::Synth(SynthError::OddCount { .. }) => "E_ODD_COUNT",
            CliError::Synth(_) => "E_SYNTH",
            CliError::Manifest(_) => "E_MANIFEST",
            CliError::Backend(AdapterError::AuthFailure(_)) => "E_AUTH",
            CliError::Backend(_) => "E_BACKEND",
            CliError::Eval(_) => "E_EVAL",
            CliError::Io { .. } => "E_IO",
            CliError::PartialFailure { .. } => "E_PARTIAL",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::PartialFailure { .. } => 3,
            _ => 1,
        }
    }

    /// `error[CODE]: message` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code())
    }
}

fn default_token_env() -> String {
    AUTH_TOKEN_ENV.into()
}

fn default_attempts() -> u32 {
    3
}

fn default_timeout_s() -> f64 {
    120.0
}

fn default_p_yes() -> f64 {
    0.5
}

fn default_http_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Sim {
        #[serde(default)]
        model_id: Option<String>,
        policy: SimKind,
        #[serde(default = "default_p_yes")]
        p_yes: f64,
        #[serde(default)]
        error_rate: f64,
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_token_env")]
        token_env: String,
        #[serde(default = "default_attempts")]
        attempts: u32,
        #[serde(default = "default_timeout_s")]
        timeout_s: f64,
        #[serde(default = "default_http_concurrency")]
        max_concurrency: usize,
    },
    Subprocess {
        model_id: String,
        command: Vec<String>,
        #[serde(default = "default_timeout_s")]
        timeout_s: f64,
    },
    Cascade {
        model_id: String,
        captioner: Box<BackendConfig>,
        llm: Box<BackendConfig>,
    },
}

impl BackendConfig {
    /// Parses a `--backend` value: a JSON object, or one of the shorthands
    /// `sim:always_yes`, `sim:always_no`, `sim:coin:P`, `sim:oracle:E`,
    /// `http:MODEL@URL`, `subprocess:MODEL_ID=COMMAND ARGS...`.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let spec = spec.trim();
        if spec.starts_with('{') {
            return serde_json::from_str(spec).map_err(|e| CliError::Config(format!("bad backend JSON: {e}")));
        }
        let bad = || CliError::Config(format!("unrecognized backend `{spec}`"));
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        match kind {
            "sim" => {
                let mut parts = rest.split(':');
                let policy: SimKind = serde_json::from_value(serde_json::Value::String(parts.next().unwrap_or_default().into()))
                    .map_err(|_| bad())?;
                let value = parts.next().map(str::parse::<f64>).transpose().map_err(|_| bad())?;
                let (p_yes, error_rate) = match policy {
                    SimKind::Coin => (value.unwrap_or(0.5), 0.0),
                    SimKind::Oracle => (0.5, value.unwrap_or(0.0)),
                    _ => (0.5, 0.0),
                };
                Ok(BackendConfig::Sim { model_id: None, policy, p_yes, error_rate, seed: None })
            }
            "http" => {
                let (model, endpoint) = rest.split_once('@').ok_or_else(bad)?;
                Ok(BackendConfig::Http {
                    endpoint: endpoint.into(),
                    model: model.into(),
                    token_env: default_token_env(),
                    attempts: default_attempts(),
                    timeout_s: default_timeout_s(),
                    max_concurrency: default_http_concurrency(),
                })
            }
            "subprocess" => {
                let (model_id, command) = rest.split_once('=').ok_or_else(bad)?;
                let command: Vec<String> = command.split_whitespace().map(str::to_string).collect();
                if command.is_empty() {
                    return Err(bad());
                }
                Ok(BackendConfig::Subprocess { model_id: model_id.into(), command, timeout_s: default_timeout_s() })
            }
            _ => Err(bad()),
        }
    }

    pub fn build(&self, run_seed: u64) -> Result<Arc<dyn ModelAdapter>, AdapterError> {
        let secs = |s: f64| Duration::from_secs_f64(s.max(0.001));
        Ok(match self {
            BackendConfig::Sim { model_id, policy, p_yes, error_rate, seed } => {
                let policy = SimPolicy { kind: *policy, p_yes: *p_yes, error_rate: *error_rate, seed: seed.unwrap_or(run_seed) };
                Arc::new(match model_id {
                    Some(id) => SimAdapter::with_id(id.clone(), policy)?,
                    None => SimAdapter::new(policy)?,
                })
            }
            BackendConfig::Http { endpoint, model, token_env, attempts, timeout_s, max_concurrency } => {
                let token = std::env::var(token_env).ok().filter(|t| !t.is_empty());
                let options = HttpOptions {
                    timeout: secs(*timeout_s),
                    attempts: *attempts,
                    max_concurrency: *max_concurrency,
                    ..HttpOptions::default()
                };
                Arc::new(HttpAdapter::connect(endpoint, token, model, options)?)
            }
            BackendConfig::Subprocess { model_id, command, timeout_s } => Arc::new(SubprocessAdapter::spawn(
                model_id.clone(),
                command,
                SubprocessOptions { timeout: secs(*timeout_s), ..SubprocessOptions::default() },
            )?),
            BackendConfig::Cascade { model_id, captioner, llm } => {
                Arc::new(CascadeAdapter::new(model_id.clone(), captioner.build(run_seed)?, llm.build(run_seed)?)?)
            }
        })
    }
}

/// Everything a run needs. Loaded from `--config` JSON; flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub task_counts: TaskCounts,
    pub settings: Vec<Setting>,
    pub backends: Vec<BackendConfig>,
    pub concurrency: usize,
    pub canonical_rate: u32,
    pub background_peak: f32,
    pub event_peak: f32,
    pub temporal_gap_s: f64,
    pub attribute_alternate_questions: bool,
    pub caption_max_chars: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_manifest: None,
            out_dir: PathBuf::from("out"),
            seed: None,
            task_counts: TaskCounts::default(),
            settings: vec![Setting::Original],
            backends: Vec::new(),
            concurrency: 4,
            canonical_rate: DEFAULT_SAMPLE_RATE,
            background_peak: DEFAULT_BACKGROUND_PEAK,
            event_peak: DEFAULT_EVENT_PEAK,
            temporal_gap_s: 0.5,
            attribute_alternate_questions: false,
            caption_max_chars: DEFAULT_CAPTION_MAX_CHARS,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.settings.is_empty() {
            return Err(CliError::Config("settings must not be empty".into()));
        }
        if self.concurrency == 0 {
            return Err(CliError::Config("concurrency must be positive".into()));
        }
        for (name, p) in [("background_peak", self.background_peak), ("event_peak", self.event_peak)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(CliError::Config(format!("{name} must be in (0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            task_counts: self.task_counts,
            canonical_rate: self.canonical_rate,
            background_peak: self.background_peak,
            event_peak: self.event_peak,
            temporal_gap_s: self.temporal_gap_s,
            attribute_alternate_questions: self.attribute_alternate_questions,
        }
    }

    fn ensure_out_dir(&self) -> Result<(), CliError> {
        let io = |source| CliError::Io { path: self.out_dir.clone(), source };
        fs::create_dir_all(&self.out_dir).map_err(io)?;
        let probe = self.out_dir.join(".write_probe");
        fs::write(&probe, b"").map_err(io)?;
        fs::remove_file(&probe).map_err(io)
    }
}

/// Synthesizes the benchmark into `config.out_dir`.
pub fn cmd_synth(config: &RunConfig) -> Result<SynthOutput, CliError> {
    config.validate()?;
    let seed = config.require_seed()?;
    let corpus_path = config
        .corpus_manifest
        .as_deref()
        .ok_or_else(|| CliError::Config("corpus_manifest is required for synth".into()))?;
    config.ensure_out_dir()?;
    let index = corpus::index_corpus(corpus_path)?;
    Ok(synthesis::generate_benchmark(&config.synth_config(), &index, seed, &config.out_dir)?)
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub records_path: PathBuf,
    pub summaries: Vec<(String, eval::EvalSummary)>,
}

/// Evaluates `manifest_path` against every configured backend.
pub fn cmd_eval(config: &RunConfig, manifest_path: &Path) -> Result<EvalOutcome, CliError> {
    config.validate()?;
    if config.backends.is_empty() {
        return Err(CliError::Config("no backend configured (--backend or \"backends\")".into()));
    }
    let seed = config.require_seed()?;
    config.ensure_out_dir()?;
    let manifest = BenchmarkManifest::read(manifest_path)?;
    let options = EvalOptions {
        settings: config.settings.clone(),
        concurrency: config.concurrency,
        caption_max_chars: config.caption_max_chars,
    };
    let mut summaries = Vec::new();
    for backend in &config.backends {
        let adapter = backend.build(seed)?;
        let summary = eval::run_eval(&manifest, adapter.as_ref(), &options, &config.out_dir)?;
        summaries.push((adapter.model_id().to_string(), summary));
    }
    Ok(EvalOutcome { records_path: config.out_dir.join(RECORDS_FILE), summaries })
}

#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub rows: Vec<MetricsReport>,
    pub markdown: PathBuf,
    pub csv: PathBuf,
    pub json: PathBuf,
    /// Pairs with a missing member, as `model/task/setting/pair_id`.
    pub incomplete_pairs: Vec<String>,
}

/// Scores a records file and writes `report.md`, `report.csv` and `report.json`.
pub fn cmd_score(records_path: &Path, out_dir: &Path) -> Result<ScoreOutcome, CliError> {
    let records = eval::read_records(records_path)?;
    let rows = scoring::aggregate(&records);
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
    let write = |name: &str, body: String| -> Result<PathBuf, CliError> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    };
    let incomplete_pairs = rows
        .iter()
        .flat_map(|r| r.incomplete_pairs.iter().map(move |p| format!("{}/{}/{}/{p}", r.model_id, r.task, r.setting)))
        .collect();
    Ok(ScoreOutcome {
        markdown: write("report.md", scoring::render_markdown(&rows))?,
        csv: write("report.csv", scoring::render_csv(&rows))?,
        json: write("report.json", scoring::render_json(&rows))?,
        rows,
        incomplete_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Md,
    Csv,
    Json,
}

/// Renders a records file as a report in one format.
pub fn cmd_report(records_path: &Path, format: ReportFormat) -> Result<String, CliError> {
    let rows = scoring::aggregate(&eval::read_records(records_path)?);
    Ok(match format {
        ReportFormat::Md => scoring::render_markdown(&rows),
        ReportFormat::Csv => scoring::render_csv(&rows),
        ReportFormat::Json => scoring::render_json(&rows),
    })
}

#[derive(Debug, Parser)]
#[command(name = "hearcheck", version, about = "Paired before/after hallucination benchmarks for audio-language models")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated: original,emphasis_quote,emphasis_bold,negative,silent,match
    #[arg(long, global = true)]
    pub settings: Option<String>,
    /// Backend spec (repeatable); replaces configured backends.
    #[arg(long, global = true)]
    pub backend: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the paired benchmark audio and manifest.
    Synth {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Instance counts as EXISTENCE,TEMPORAL,ATTRIBUTE.
        #[arg(long)]
        counts: Option<String>,
    },
    /// Query backends on a manifest.
    Eval {
        /// Defaults to OUT/manifest.jsonl.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// Compute metrics and write report.md, report.csv and report.json.
    Score {
        /// Defaults to OUT/records.jsonl.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Print a report for a records file.
    Report {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "md")]
        format: ReportFormat,
    },
}

fn parse_counts(s: &str) -> Result<TaskCounts, CliError> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("bad --counts `{s}`")))?;
    match parts.as_slice() {
        &[existence, temporal, attribute] => Ok(TaskCounts { existence, temporal, attribute }),
        _ => Err(CliError::Config(format!("--counts needs three values, got `{s}`"))),
    }
}

impl Cli {
    /// Merges the config file (if any) with flag overrides.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        if let Some(s) = &self.settings {
            config.settings = Setting::parse_list(s)?;
        }
        if !self.backend.is_empty() {
            config.backends = self.backend.iter().map(|b| BackendConfig::parse(b)).collect::<Result<_, _>>()?;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        match &self.command {
            Command::Synth { corpus, counts } => {
                if let Some(c) = corpus {
                    config.corpus_manifest = Some(c.clone());
                }
                if let Some(c) = counts {
                    config.task_counts = parse_counts(c)?;
                }
            }
            Command::Eval { concurrency: Some(c), .. } => config.concurrency = *c,
            _ => {}
        }
        Ok(config)
    }
}

/// Runs the CLI, writing human-readable output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = write!(out, "{e}");
            CliError::Config(String::new())
        }
        _ => CliError::Config(e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string()),
    })?;
    let config = cli.run_config()?;
    let io = |source| CliError::Io { path: PathBuf::from("<stdout>"), source };

    match &cli.command {
        Command::Synth { .. } => {
            let result = cmd_synth(&config)?;
            for (task, n) in &result.stats.counts {
                writeln!(out, "{task}: {n} instances").map_err(io)?;
            }
            writeln!(
                out,
                "clipping: {} outputs, {} samples total, {} max per output",
                result.stats.outputs_with_clipping, result.stats.total_clipped_samples, result.stats.max_clipped_samples
            )
            .map_err(io)?;
            writeln!(out, "manifest: {}", result.manifest_path.display()).map_err(io)?;
            writeln!(out, "manifest sha256: {}", result.manifest.hash()).map_err(io)?;
        }
        Command::Eval { manifest, .. } => {
            let manifest = manifest.clone().unwrap_or_else(|| config.out_dir.join("manifest.jsonl"));
            let outcome = cmd_eval(&config, &manifest)?;
            let mut errors = 0;
            for (model, s) in &outcome.summaries {
                writeln!(
                    out,
                    "{model}: {} new records, {} resumed, {} backend errors, {} skipped",
                    s.written,
                    s.resumed,
                    s.backend_errors,
                    s.skipped.len()
                )
                .map_err(io)?;
                errors += s.backend_errors;
            }
            writeln!(out, "records: {}", outcome.records_path.display()).map_err(io)?;
            if errors > 0 {
                return Err(CliError::PartialFailure { count: errors, records: outcome.records_path });
            }
        }
        Command::Score { records } => {
            let records = records.clone().unwrap_or_else(|| config.out_dir.join(RECORDS_FILE));
            let outcome = cmd_score(&records, &config.out_dir)?;
            for p in &outcome.incomplete_pairs {
                log::warn!("incomplete pair {p}");
            }
            if !outcome.incomplete_pairs.is_empty() {
                writeln!(out, "warning: {} incomplete pairs left out of C-C/C-I", outcome.incomplete_pairs.len()).map_err(io)?;
            }
            write!(out, "{}", fs::read_to_string(&outcome.markdown).unwrap_or_default()).map_err(io)?;
        }
        Command::Report { records, format } => {
            let records = records.clone().unwrap_or_else(|| config.out_dir.join(RECORDS_FILE));
            write!(out, "{}", cmd_report(&records, *format)?).map_err(io)?;
        }
    }
    Ok(())
}
