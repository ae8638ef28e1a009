//! Answer parsing and the metric suite.
//!
//! The positive class is a ground-truth "no": precision and recall measure how
//! well a model rejects events that are not in the audio. Every rate is kept
//! as an exact fraction and rounded half-to-even to one decimal only when
//! rendered.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{PairRole, Task, Truth};
use crate::protocol::Setting;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("records span several strata: {0}")]
    MixedStrata(String),
    #[error("pair {0} is missing its {1} member")]
    IncompletePair(String, &'static str),
    #[error("no records to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parsed {
    Yes,
    No,
    Unparsed,
    BackendError,
}

impl Parsed {
    fn answer(self) -> Option<Truth> {
        match self {
            Parsed::Yes => Some(Truth::Yes),
            Parsed::No => Some(Truth::No),
            Parsed::Unparsed | Parsed::BackendError => None,
        }
    }
}

/// Extracts yes/no by exact token match: lowercase, strip punctuation at token
/// boundaries, return the first token equal to `yes` or `no`.
pub fn parse_answer(raw: &str) -> Parsed {
    for token in raw.split_whitespace() {
        let t = token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        match t.as_str() {
            "yes" => return Parsed::Yes,
            "no" => return Parsed::No,
            _ => {}
        }
    }
    Parsed::Unparsed
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance_id: String,
    pub pair_id: String,
    pub pair_role: PairRole,
    pub task: Task,
    pub setting: Setting,
    pub model_id: String,
    pub raw_text: String,
    pub parsed: Parsed,
    pub ground_truth: Truth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn key(&self) -> (String, Setting, String) {
        (self.instance_id.clone(), self.setting, self.model_id.clone())
    }

    /// Correct answer; unparsed and failed requests count as incorrect.
    pub fn is_correct(&self) -> bool {
        self.parsed.answer() == Some(self.ground_truth)
    }
}

/// An exact percentage `100 * num / den`; zero when `den` is zero.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    pub fn percent(&self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            100.0 * self.num as f64 / self.den as f64
        }
    }

    /// Tenths of a percent, rounded half to even, computed in integers.
    pub fn tenths(&self) -> u64 {
        if self.den == 0 {
            return 0;
        }
        let scaled = 1000 * u128::from(self.num);
        let den = u128::from(self.den);
        let (q, r) = (scaled / den, scaled % den);
        let q = match (2 * r).cmp(&den) {
            Ordering::Greater => q + 1,
            Ordering::Equal => q + (q & 1),
            Ordering::Less => q,
        };
        q as u64
    }

    /// Percentage with one decimal place, e.g. `66.7`.
    pub fn rounded(&self) -> f64 {
        self.tenths() as f64 / 10.0
    }
}

impl PartialEq for Rate {
    fn eq(&self, other: &Self) -> bool {
        match (self.den, other.den) {
            (0, 0) => true,
            (0, _) => other.num == 0,
            (_, 0) => self.num == 0,
            _ => u128::from(self.num) * u128::from(other.den) == u128::from(other.num) * u128::from(self.den),
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.tenths();
        write!(f, "{}.{}", t / 10, t % 10)
    }
}

/// Confusion counts over parsed records, positive class = "no".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn parsed(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// No record predicted "no"; precision reported as 0.
    NoPredictedPositives,
    /// No record has ground truth "no"; recall reported as 0.
    NoActualPositives,
    /// No record could be parsed; parsed-record rates reported as 0.
    NoParsedRecords,
    /// Some pairs lack a member and were left out of C-C / C-I.
    IncompletePairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub setting: Setting,
    pub model_id: String,
    pub counts: Confusion,
    pub records: u64,
    pub unparsed: u64,
    pub backend_errors: u64,
    pub pairs: u64,
    pub accuracy: Rate,
    pub precision: Rate,
    pub recall: Rate,
    pub f1: Rate,
    pub yes_rate: Rate,
    pub if_rate: Rate,
    pub cc_rate: Rate,
    pub ci_rate: Rate,
    pub error_rate: Rate,
    pub flags: Vec<Flag>,
    pub incomplete_pairs: Vec<String>,
}

fn stratum_of(records: &[EvalRecord]) -> Result<(Task, Setting, String), ScoringError> {
    let first = records.first().ok_or(ScoringError::Empty)?;
    if let Some(other) = records
        .iter()
        .find(|r| r.task != first.task || r.setting != first.setting || r.model_id != first.model_id)
    {
        return Err(ScoringError::MixedStrata(format!(
            "({}, {}, {}) and ({}, {}, {})",
            first.task, first.setting, first.model_id, other.task, other.setting, other.model_id
        )));
    }
    Ok((first.task, first.setting, first.model_id.clone()))
}

struct PairOutcome {
    pairs: u64,
    cc: u64,
    ci: u64,
    incomplete: Vec<String>,
}

fn pair_outcomes(records: &[EvalRecord]) -> PairOutcome {
    let mut by_pair: BTreeMap<&str, [Option<bool>; 2]> = BTreeMap::new();
    for r in records {
        let slot = match r.pair_role {
            PairRole::Before => 0,
            PairRole::After => 1,
        };
        by_pair.entry(&r.pair_id).or_default()[slot] = Some(r.is_correct());
    }
    let mut out = PairOutcome { pairs: 0, cc: 0, ci: 0, incomplete: Vec::new() };
    for (id, members) in by_pair {
        match members {
            [Some(before), Some(after)] => {
                out.pairs += 1;
                out.cc += u64::from(before && after);
                out.ci += u64::from(before && !after);
            }
            _ => out.incomplete.push(id.to_string()),
        }
    }
    out
}

/// C-C and C-I rates over the pairs in one stratum.
pub fn pair_consistency(records: &[EvalRecord]) -> Result<(Rate, Rate), ScoringError> {
    stratum_of(records)?;
    let out = pair_outcomes(records);
    if let Some(id) = out.incomplete.first() {
        let has_before = records.iter().any(|r| &r.pair_id == id && r.pair_role == PairRole::Before);
        return Err(ScoringError::IncompletePair(id.clone(), if has_before { "after" } else { "before" }));
    }
    Ok((Rate::new(out.cc, out.pairs), Rate::new(out.ci, out.pairs)))
}

/// Full metric suite for one (task, setting, model) stratum. Pairs with a
/// missing member are listed in `incomplete_pairs` and left out of C-C/C-I.
pub fn compute_metrics(records: &[EvalRecord]) -> Result<MetricsReport, ScoringError> {
    let (task, setting, model_id) = stratum_of(records)?;
    let mut c = Confusion::default();
    let mut unparsed = 0;
    let mut backend_errors = 0;
    let mut yes = 0;
    for r in records {
        match (r.parsed, r.ground_truth) {
            (Parsed::No, Truth::No) => c.tp += 1,
            (Parsed::No, Truth::Yes) => c.fp += 1,
            (Parsed::Yes, Truth::No) => c.fn_ += 1,
            (Parsed::Yes, Truth::Yes) => c.tn += 1,
            (Parsed::Unparsed, _) => unparsed += 1,
            (Parsed::BackendError, _) => backend_errors += 1,
        }
        if r.parsed == Parsed::Yes {
            yes += 1;
        }
    }
    let parsed = c.parsed();
    let mut flags = Vec::new();
    if c.tp + c.fp == 0 {
        flags.push(Flag::NoPredictedPositives);
    }
    if c.tp + c.fn_ == 0 {
        flags.push(Flag::NoActualPositives);
    }
    if parsed == 0 {
        flags.push(Flag::NoParsedRecords);
    }
    let pairs = pair_outcomes(records);
    if !pairs.incomplete.is_empty() {
        flags.push(Flag::IncompletePairs);
    }

    Ok(MetricsReport {
        task,
        setting,
        model_id,
        counts: c,
        records: records.len() as u64,
        unparsed,
        backend_errors,
        pairs: pairs.pairs,
        accuracy: Rate::new(c.tp + c.tn, parsed),
        precision: Rate::new(c.tp, c.tp + c.fp),
        recall: Rate::new(c.tp, c.tp + c.fn_),
        // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN).
        f1: Rate::new(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        yes_rate: Rate::new(yes, parsed),
        if_rate: Rate::new(parsed, parsed + unparsed),
        cc_rate: Rate::new(pairs.cc, pairs.pairs),
        ci_rate: Rate::new(pairs.ci, pairs.pairs),
        error_rate: Rate::new(backend_errors, records.len() as u64),
        flags,
        incomplete_pairs: pairs.incomplete,
    })
}

fn task_rank(t: Task) -> usize {
    Task::ALL.iter().position(|&x| x == t).unwrap_or(usize::MAX)
}

fn setting_rank(s: Setting) -> usize {
    Setting::ALL.iter().position(|&x| x == s).unwrap_or(usize::MAX)
}

/// Groups records by (model, task, setting) and scores each non-empty stratum.
/// Rows are model-major, then task, then setting in report order.
pub fn aggregate(records: &[EvalRecord]) -> Vec<MetricsReport> {
    let mut groups: HashMap<(String, Task, Setting), Vec<EvalRecord>> = HashMap::new();
    for r in records {
        groups.entry((r.model_id.clone(), r.task, r.setting)).or_default().push(r.clone());
    }
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(task_rank(a.1).cmp(&task_rank(b.1)))
            .then(setting_rank(a.2).cmp(&setting_rank(b.2)))
    });
    keys.into_iter()
        .filter_map(|k| compute_metrics(&groups[&k]).ok())
        .collect()
}

/// Report columns, in table order.
pub const COLUMNS: [&str; 8] = ["A", "P", "R", "F1", "C-C", "C-I", "Yes", "IF"];

impl MetricsReport {
    pub fn column_rates(&self) -> [Rate; 8] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.cc_rate,
            self.ci_rate,
            self.yes_rate,
            self.if_rate,
        ]
    }
}

pub fn render_markdown(rows: &[MetricsReport]) -> String {
    let mut out = String::from("| Model | Task | Setting |");
    for c in COLUMNS {
        out.push_str(&format!(" {c} |"));
    }
    out.push_str(" Err | N |\n|---|---|---|");
    out.push_str(&"---:|".repeat(COLUMNS.len() + 2));
    out.push('\n');
    for r in rows {
        out.push_str(&format!("| {} | {} | {} |", r.model_id, r.task, r.setting.short_name()));
        for rate in r.column_rates() {
            out.push_str(&format!(" {rate} |"));
        }
        out.push_str(&format!(" {} | {} |\n", r.error_rate, r.records));
    }
    out
}

pub fn render_csv(rows: &[MetricsReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model", "task", "setting"];
    header.extend(COLUMNS);
    header.extend(["Err", "N"]);
    w.write_record(&header).expect("in-memory csv");
    for r in rows {
        let mut rec = vec![r.model_id.clone(), r.task.to_string(), r.setting.to_string()];
        rec.extend(r.column_rates().iter().map(Rate::to_string));
        rec.push(r.error_rate.to_string());
        rec.push(r.records.to_string());
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

#[derive(Serialize)]
struct JsonRow<'a> {
    model: &'a str,
    task: Task,
    setting: Setting,
    #[serde(rename = "A")]
    accuracy: f64,
    #[serde(rename = "P")]
    precision: f64,
    #[serde(rename = "R")]
    recall: f64,
    #[serde(rename = "F1")]
    f1: f64,
    #[serde(rename = "C-C")]
    cc: f64,
    #[serde(rename = "C-I")]
    ci: f64,
    #[serde(rename = "Yes")]
    yes: f64,
    #[serde(rename = "IF")]
    if_rate: f64,
    #[serde(rename = "Err")]
    error_rate: f64,
    #[serde(rename = "N")]
    records: u64,
    counts: Confusion,
    pairs: u64,
    flags: &'a [Flag],
}

pub fn render_json(rows: &[MetricsReport]) -> String {
    let json: Vec<JsonRow> = rows
        .iter()
        .map(|r| JsonRow {
            model: &r.model_id,
            task: r.task,
            setting: r.setting,
            accuracy: r.accuracy.rounded(),
            precision: r.precision.rounded(),
            recall: r.recall.rounded(),
            f1: r.f1.rounded(),
            cc: r.cc_rate.rounded(),
            ci: r.ci_rate.rounded(),
            yes: r.yes_rate.rounded(),
            if_rate: r.if_rate.rounded(),
            error_rate: r.error_rate.rounded(),
            records: r.records,
            counts: r.counts,
            pairs: r.pairs,
            flags: &r.flags,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json).expect("report serializes");
    s.push('\n');
    s
}
