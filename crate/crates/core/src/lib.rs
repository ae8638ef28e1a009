//! Paired before/after benchmarks for probing hallucination in audio-language
//! models, plus the harness that queries models and scores their answers.
//!
//! The pipeline is `synth` (build paired audio and questions from labeled
//! corpora), `eval` (drive a model through each prompting setting) and
//! `score` (yes/no parsing, accuracy/precision/recall/F1 with "no" as the
//! positive class, and pair consistency).

pub mod adapters;
pub mod benchmark;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod hash;
pub mod protocol;
pub mod scoring;
pub mod synthesis;
pub mod templates;

pub use benchmark::{BenchmarkInstance, BenchmarkManifest, PairRole, Task, TaskCounts, Truth};
pub use corpus::AudioClip;
pub use protocol::Setting;
pub use scoring::{EvalRecord, MetricsReport, Parsed};
