#![allow(dead_code)]

use std::f32::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use hearcheck::benchmark::{PairRole, Task, Truth};
use hearcheck::corpus::{self, AudioClip};
use hearcheck::scoring::{EvalRecord, Parsed};
use hearcheck::Setting;

pub const BACKGROUNDS: [&str; 4] = ["rain on a window", "street traffic", "wind in the trees", "crowd chatter"];
pub const EVENTS: [&str; 6] = ["dog barking", "door knocking", "bell ringing", "car horn", "baby crying", "cat meowing"];
pub const ENTITIES: [&str; 3] = ["man", "woman", "child"];
pub const ACTIONS: [&str; 2] = ["laugh", "cough"];

/// Deterministic pseudo-noise in [-1, 1].
fn noise(len: usize, mut state: u32) -> Vec<f32> {
    (0..len)
        .map(|_| {
            state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            (state >> 8) as f32 / (1u32 << 23) as f32 * 2.0 - 1.0
        })
        .collect()
}

fn tone(len: usize, rate: u32, freq: f32, amp: f32) -> Vec<f32> {
    (0..len).map(|i| amp * (TAU * freq * i as f32 / rate as f32).sin()).collect()
}

fn write(dir: &Path, name: &str, samples: Vec<f32>, rate: u32) -> String {
    corpus::write_wav(&AudioClip::from_samples(samples, rate, name), &dir.join(name)).unwrap();
    name.to_string()
}

/// Writes a small labeled corpus plus `corpus.jsonl` and returns the manifest path.
/// Backgrounds are 3 s, events 0.3 to 0.8 s; one event per label is stored at 22.05 kHz.
pub fn toy_corpus(dir: &Path) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut lines = Vec::new();
    for (i, caption) in BACKGROUNDS.iter().enumerate() {
        let name = write(dir, &format!("bg{i}.wav"), noise(48_000, 7 + i as u32).iter().map(|s| s * 0.3).collect(), 16_000);
        lines.push(serde_json::json!({"clip_path": name, "corpus_role": "background", "caption": caption}));
    }
    for (i, label) in EVENTS.iter().enumerate() {
        for k in 0..2 {
            let rate = if k == 0 { 16_000 } else { 22_050 };
            let len = (rate as f32 * (0.3 + 0.1 * ((i + k) % 6) as f32)) as usize;
            let name = write(dir, &format!("ev{i}_{k}.wav"), tone(len, rate, 220.0 * (i + 1) as f32 + 55.0 * k as f32, 0.8), rate);
            lines.push(serde_json::json!({"clip_path": name, "corpus_role": "event", "class_label": label, "category": "toy"}));
        }
    }
    for (i, entity) in ENTITIES.iter().enumerate() {
        for (j, action) in ACTIONS.iter().enumerate() {
            let len = 8_000 + 1_600 * (i + j);
            let mut s = tone(len, 16_000, 300.0 + 150.0 * i as f32, 0.5);
            for (a, b) in s.iter_mut().zip(noise(len, 99 + j as u32)) {
                *a += 0.2 * b * (j as f32 + 0.5);
            }
            let name = write(dir, &format!("attr_{entity}_{action}.wav"), s, 16_000);
            lines.push(serde_json::json!({"clip_path": name, "corpus_role": "attribute_event", "entity": entity, "action": action}));
        }
    }
    let manifest = dir.join("corpus.jsonl");
    let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&manifest, body).unwrap();
    manifest
}

pub fn record(pair: usize, role: PairRole, parsed: Parsed) -> EvalRecord {
    let pair_id = format!("existence-{pair:05}");
    EvalRecord {
        instance_id: format!("{pair_id}-{}", role.as_str()),
        pair_id,
        pair_role: role,
        task: Task::Existence,
        setting: Setting::Original,
        model_id: "m".into(),
        raw_text: String::new(),
        parsed,
        ground_truth: role.truth(),
        error: None,
    }
}

pub fn truth_answer(t: Truth) -> Parsed {
    match t {
        Truth::Yes => Parsed::Yes,
        Truth::No => Parsed::No,
    }
}
