//! Construction of the paired before/after benchmarks.
//!
//! * existence: `after = B + S_A + S_B`, `before = after + S_C`, asked about `S_C`
//! * temporal: `before = [x, gap, y]`, `after = [y, gap, x]`, asked whether x precedes y
//! * attribute: `before` mixes (entity_a, action_a) with (entity_b, action_b);
//!   `after` mixes the swapped attributions, asked about (entity_a, action_a)
//!
//! Every pair draws its constituents from its own seed-derived stream, so
//! pairs can be built in parallel without changing the output.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{
    BenchmarkInstance, BenchmarkManifest, ManifestError, ManifestHeader, PairRole, Placement, Provenance, Task,
    TaskCounts,
};
use crate::corpus::{
    self, AudioClip, CorpusEntry, CorpusError, CorpusIndex, CorpusRole, DEFAULT_BACKGROUND_PEAK, DEFAULT_EVENT_PEAK,
    DEFAULT_SAMPLE_RATE,
};
use crate::hash::derive_seed;
use crate::templates::{attribute_question, existence_question, temporal_question, Question};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("event labels collide: {0}")]
    EventCollision(String),
    #[error("event {event} ({event_len} samples) is longer than background {background} ({background_len} samples)")]
    EventLongerThanBackground { event: String, event_len: usize, background: String, background_len: usize },
    #[error("attribute clips inconsistent: {0}")]
    AttributeMismatch(String),
    #[error("temporal gap must be non-negative, got {0}")]
    InvalidGap(f64),
    #[error("insufficient corpus: {}", .0.join("; "))]
    InsufficientCorpus(Vec<String>),
    #[error("{task} count {count} is odd; instances come in pairs")]
    OddCount { task: Task, count: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("cannot create {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub task_counts: TaskCounts,
    pub canonical_rate: u32,
    pub background_peak: f32,
    pub event_peak: f32,
    pub temporal_gap_s: f64,
    /// When set, odd-numbered attribute pairs ask about the second swapped
    /// combination (entity_b with action_a) instead of the first.
    pub attribute_alternate_questions: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            task_counts: TaskCounts::default(),
            canonical_rate: DEFAULT_SAMPLE_RATE,
            background_peak: DEFAULT_BACKGROUND_PEAK,
            event_peak: DEFAULT_EVENT_PEAK,
            temporal_gap_s: 0.5,
            attribute_alternate_questions: false,
        }
    }
}

/// A clip with its class label.
#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub clip: Arc<AudioClip>,
    pub label: String,
}

/// A clip realizing one (entity, action) combination.
#[derive(Debug, Clone)]
pub struct AttributeClip {
    pub clip: Arc<AudioClip>,
    pub entity: String,
    pub action: String,
}

/// Audio and question for one before/after pair.
#[derive(Debug, Clone)]
pub struct PairAudio {
    pub before: AudioClip,
    pub after: AudioClip,
    pub question: Question,
    pub events: Vec<Placement>,
    pub background_id: Option<String>,
    pub gap_samples: Option<u64>,
    pub before_clipped: usize,
    pub after_clipped: usize,
}

impl PairAudio {
    fn swap_roles(mut self, question: Question) -> Self {
        std::mem::swap(&mut self.before, &mut self.after);
        std::mem::swap(&mut self.before_clipped, &mut self.after_clipped);
        self.question = question;
        self
    }
}

fn placement(slot: &str, clip: &AudioClip, label: &str, offset: usize) -> Placement {
    Placement { slot: slot.into(), source_id: clip.source_id().into(), label: label.into(), offset_samples: offset as u64 }
}

fn same(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// True when `label` already occurs in the background's caption.
pub fn label_in_background(label: &str, caption: &str) -> bool {
    let label = label.trim().to_lowercase();
    !label.is_empty() && caption.to_lowercase().contains(&label)
}

/// Builds one existence pair. `events` are `[S_A, S_B, S_C]`; the question asks
/// about `S_C`, present in the before clip and removed from the after clip.
pub fn build_existence_pair<R: Rng + ?Sized>(
    background: &LabeledClip,
    events: [&LabeledClip; 3],
    rng: &mut R,
) -> Result<PairAudio, SynthError> {
    for (i, a) in events.iter().enumerate() {
        if label_in_background(&a.label, &background.label) {
            return Err(SynthError::EventCollision(format!("`{}` is part of the background `{}`", a.label, background.label)));
        }
        for b in &events[i + 1..] {
            if same(&a.label, &b.label) {
                return Err(SynthError::EventCollision(format!("`{}` appears twice", a.label)));
            }
        }
    }
    let bg = &background.clip;
    let mut offsets = [0usize; 3];
    for (slot, ev) in offsets.iter_mut().zip(&events) {
        if ev.clip.len() > bg.len() {
            return Err(SynthError::EventLongerThanBackground {
                event: ev.clip.source_id().into(),
                event_len: ev.clip.len(),
                background: bg.source_id().into(),
                background_len: bg.len(),
            });
        }
        *slot = rng.gen_range(0..=bg.len() - ev.clip.len());
    }

    let first = corpus::overlay_at(bg, &events[0].clip, offsets[0])?;
    let after = corpus::overlay_at(&first.clip, &events[1].clip, offsets[1])?;
    let before = corpus::overlay_at(&after.clip, &events[2].clip, offsets[2])?;
    let after_clipped = first.clipped_samples + after.clipped_samples;

    Ok(PairAudio {
        question: existence_question(&events[2].label),
        events: ["S_A", "S_B", "S_C"]
            .iter()
            .zip(events.iter().zip(offsets))
            .map(|(slot, (ev, off))| placement(slot, &ev.clip, &ev.label, off))
            .collect(),
        background_id: Some(bg.source_id().into()),
        gap_samples: None,
        before_clipped: after_clipped + before.clipped_samples,
        after_clipped,
        before: before.clip,
        after: after.clip,
    })
}

/// Builds one temporal pair: `before = [x, gap, y]`, `after = [y, gap, x]`.
pub fn build_temporal_pair(x: &LabeledClip, y: &LabeledClip, gap_s: f64) -> Result<PairAudio, SynthError> {
    if same(&x.label, &y.label) {
        return Err(SynthError::EventCollision(format!("both events are `{}`", x.label)));
    }
    if !gap_s.is_finite() || gap_s < 0.0 {
        return Err(SynthError::InvalidGap(gap_s));
    }
    let rate = x.clip.sample_rate();
    let gap_len = (gap_s * f64::from(rate)).round() as usize;
    let gap = AudioClip::zeros(gap_len, rate);
    let before = AudioClip::concat(&[&x.clip, &gap, &y.clip], "temporal")?;
    let after = AudioClip::concat(&[&y.clip, &gap, &x.clip], "temporal")?;
    Ok(PairAudio {
        question: temporal_question(&x.label, &y.label),
        events: vec![
            placement("x", &x.clip, &x.label, 0),
            placement("y", &y.clip, &y.label, x.clip.len() + gap_len),
        ],
        background_id: None,
        gap_samples: Some(gap_len as u64),
        before_clipped: 0,
        after_clipped: 0,
        before,
        after,
    })
}

fn mix_two<R: Rng + ?Sized>(a: &AudioClip, b: &AudioClip, rng: &mut R) -> Result<(AudioClip, [usize; 2], usize), SynthError> {
    let len = a.len().max(b.len());
    let base = AudioClip::zeros(len, a.sample_rate());
    let oa = rng.gen_range(0..=len - a.len());
    let ob = rng.gen_range(0..=len - b.len());
    let first = corpus::overlay_at(&base, a, oa)?;
    let second = corpus::overlay_at(&first.clip, b, ob)?;
    Ok((second.clip, [oa, ob], first.clipped_samples + second.clipped_samples))
}

/// Builds one attribute pair from the two original attributions and their swaps.
/// `a_swap` must be (entity_a, action_b) and `b_swap` (entity_b, action_a).
pub fn build_attribute_pair<R: Rng + ?Sized>(
    a: &AttributeClip,
    b: &AttributeClip,
    a_swap: &AttributeClip,
    b_swap: &AttributeClip,
    rng: &mut R,
) -> Result<PairAudio, SynthError> {
    if same(&a.entity, &b.entity) {
        return Err(SynthError::AttributeMismatch(format!("both clips have entity `{}`", a.entity)));
    }
    if same(&a.action, &b.action) {
        return Err(SynthError::AttributeMismatch(format!("both clips have action `{}`", a.action)));
    }
    if !same(&a_swap.entity, &a.entity) || !same(&a_swap.action, &b.action) {
        return Err(SynthError::AttributeMismatch(format!(
            "a_swap is ({}, {}), expected ({}, {})",
            a_swap.entity, a_swap.action, a.entity, b.action
        )));
    }
    if !same(&b_swap.entity, &b.entity) || !same(&b_swap.action, &a.action) {
        return Err(SynthError::AttributeMismatch(format!(
            "b_swap is ({}, {}), expected ({}, {})",
            b_swap.entity, b_swap.action, b.entity, a.action
        )));
    }
    let (before, before_off, before_clipped) = mix_two(&a.clip, &b.clip, rng)?;
    let (after, after_off, after_clipped) = mix_two(&a_swap.clip, &b_swap.clip, rng)?;
    let label = |c: &AttributeClip| format!("{} {}", c.entity, c.action);
    Ok(PairAudio {
        question: attribute_question(&a.entity, &a.action),
        events: vec![
            placement("a", &a.clip, &label(a), before_off[0]),
            placement("b", &b.clip, &label(b), before_off[1]),
            placement("a_swap", &a_swap.clip, &label(a_swap), after_off[0]),
            placement("b_swap", &b_swap.clip, &label(b_swap), after_off[1]),
        ],
        background_id: None,
        gap_samples: None,
        before_clipped,
        after_clipped,
        before,
        after,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SynthStats {
    pub counts: BTreeMap<Task, usize>,
    pub prepaired_pairs: usize,
    pub outputs_with_clipping: usize,
    pub total_clipped_samples: u64,
    pub max_clipped_samples: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: BenchmarkManifest,
    pub manifest_path: PathBuf,
    pub stats: SynthStats,
}

/// Sampling pools derived from a corpus index and its decoded clips.
struct Pools {
    /// (background, labels with at least one fitting event clip)
    existence: Vec<(LabeledClip, Vec<usize>)>,
    event_labels: Vec<(String, Vec<LabeledClip>)>,
    /// (entity_a, action_a, entity_b, action_b) keys into `combos`
    attribute_draws: Vec<(usize, usize, usize, usize)>,
    entities: Vec<String>,
    actions: Vec<String>,
    combos: HashMap<(usize, usize), Vec<AttributeClip>>,
}

fn decode_all(entries: &[&CorpusEntry], rate: u32, peak_for: impl Fn(&CorpusEntry) -> f32 + Sync) -> Result<HashMap<String, Arc<AudioClip>>, SynthError> {
    entries
        .par_iter()
        .map(|e| {
            let clip = corpus::load_clip(&e.clip_path, rate)?.with_source_id(e.source_id.clone());
            Ok((e.source_id.clone(), Arc::new(corpus::normalize(&clip, peak_for(e)))))
        })
        .collect()
}

impl Pools {
    fn build(index: &CorpusIndex, config: &SynthConfig, needed: &BTreeSet<Task>) -> Result<Self, SynthError> {
        let wanted: Vec<&CorpusEntry> = index
            .entries
            .iter()
            .filter(|e| match e.corpus_role {
                CorpusRole::Background => needed.contains(&Task::Existence),
                CorpusRole::Event => needed.contains(&Task::Existence) || needed.contains(&Task::Temporal),
                CorpusRole::AttributeEvent => needed.contains(&Task::Attribute),
                CorpusRole::Paired => false,
            })
            .collect();
        let clips = decode_all(&wanted, config.canonical_rate, |e| match e.corpus_role {
            CorpusRole::Background => config.background_peak,
            _ => config.event_peak,
        })?;

        let mut by_label: BTreeMap<String, (String, Vec<LabeledClip>)> = BTreeMap::new();
        for e in index.by_role(CorpusRole::Event) {
            if let Some(clip) = clips.get(&e.source_id) {
                by_label
                    .entry(e.class_label.trim().to_lowercase())
                    .or_insert_with(|| (e.class_label.clone(), Vec::new()))
                    .1
                    .push(LabeledClip { clip: clip.clone(), label: e.class_label.clone() });
            }
        }
        let event_labels: Vec<(String, Vec<LabeledClip>)> = by_label.into_values().collect();

        let mut existence = Vec::new();
        for e in index.by_role(CorpusRole::Background) {
            let Some(clip) = clips.get(&e.source_id) else { continue };
            let compatible: Vec<usize> = event_labels
                .iter()
                .enumerate()
                .filter(|(_, (label, list))| {
                    !label_in_background(label, &e.class_label) && list.iter().any(|c| c.clip.len() <= clip.len())
                })
                .map(|(i, _)| i)
                .collect();
            if compatible.len() >= 3 {
                existence.push((LabeledClip { clip: clip.clone(), label: e.class_label.clone() }, compatible));
            }
        }

        let mut entity_ids: BTreeMap<String, usize> = BTreeMap::new();
        let mut action_ids: BTreeMap<String, usize> = BTreeMap::new();
        let mut entities = Vec::new();
        let mut actions = Vec::new();
        let mut combos: HashMap<(usize, usize), Vec<AttributeClip>> = HashMap::new();
        for e in index.by_role(CorpusRole::AttributeEvent) {
            let Some(clip) = clips.get(&e.source_id) else { continue };
            let (entity, action) = (e.entity.clone().unwrap_or_default(), e.action.clone().unwrap_or_default());
            let ei = *entity_ids.entry(entity.trim().to_lowercase()).or_insert_with(|| {
                entities.push(entity.clone());
                entities.len() - 1
            });
            let ai = *action_ids.entry(action.trim().to_lowercase()).or_insert_with(|| {
                actions.push(action.clone());
                actions.len() - 1
            });
            combos.entry((ei, ai)).or_default().push(AttributeClip { clip: clip.clone(), entity, action });
        }
        let mut attribute_draws = Vec::new();
        for ea in 0..entities.len() {
            for eb in 0..entities.len() {
                for aa in 0..actions.len() {
                    for ab in 0..actions.len() {
                        if ea != eb
                            && aa != ab
                            && [(ea, aa), (eb, ab), (ea, ab), (eb, aa)].iter().all(|k| combos.contains_key(k))
                        {
                            attribute_draws.push((ea, aa, eb, ab));
                        }
                    }
                }
            }
        }

        Ok(Self { existence, event_labels, attribute_draws, entities, actions, combos })
    }

    fn shortfall(&self, task: Task) -> Option<String> {
        match task {
            Task::Existence if self.existence.is_empty() => Some(
                "existence: no background has three distinct event labels that fit inside it and are absent from its caption".into(),
            ),
            Task::Temporal if self.event_labels.len() < 2 => {
                Some(format!("temporal: need 2 distinct event labels, found {}", self.event_labels.len()))
            }
            Task::Attribute if self.attribute_draws.is_empty() => Some(format!(
                "attribute: no two entities and two actions with all four combinations present ({} entities, {} actions)",
                self.entities.len(),
                self.actions.len()
            )),
            _ => None,
        }
    }

    fn pick<'a, T, R: Rng>(items: &'a [T], rng: &mut R) -> &'a T {
        &items[rng.gen_range(0..items.len())]
    }

    fn draw_existence<R: Rng>(&self, rng: &mut R) -> Result<PairAudio, SynthError> {
        let (bg, compatible) = Self::pick(&self.existence, rng);
        let chosen = sample(rng, compatible.len(), 3);
        let events: Vec<&LabeledClip> = chosen
            .iter()
            .map(|i| {
                let fitting: Vec<&LabeledClip> =
                    self.event_labels[compatible[i]].1.iter().filter(|c| c.clip.len() <= bg.clip.len()).collect();
                *Self::pick(&fitting, rng)
            })
            .collect();
        build_existence_pair(bg, [events[0], events[1], events[2]], rng)
    }

    fn draw_temporal<R: Rng>(&self, rng: &mut R, gap_s: f64) -> Result<PairAudio, SynthError> {
        let chosen = sample(rng, self.event_labels.len(), 2);
        let x = Self::pick(&self.event_labels[chosen.index(0)].1, rng);
        let y = Self::pick(&self.event_labels[chosen.index(1)].1, rng);
        build_temporal_pair(x, y, gap_s)
    }

    fn draw_attribute<R: Rng>(&self, rng: &mut R, alternate: bool) -> Result<PairAudio, SynthError> {
        let &(ea, aa, eb, ab) = Self::pick(&self.attribute_draws, rng);
        let a = Self::pick(&self.combos[&(ea, aa)], rng);
        let b = Self::pick(&self.combos[&(eb, ab)], rng);
        let a_swap = Self::pick(&self.combos[&(ea, ab)], rng);
        let b_swap = Self::pick(&self.combos[&(eb, aa)], rng);
        let pair = build_attribute_pair(a, b, a_swap, b_swap, rng)?;
        Ok(if alternate {
            // (entity_b, action_a) is present in the swapped mix only.
            let q = attribute_question(&self.entities[eb], &self.actions[aa]);
            pair.swap_roles(q)
        } else {
            pair
        })
    }
}

fn instances_for(task: Task, pair_index: usize, seed: u64, pair: &PairAudio) -> [BenchmarkInstance; 2] {
    let pair_id = format!("{task}-{pair_index:05}");
    [PairRole::Before, PairRole::After].map(|role| {
        let clipped = match role {
            PairRole::Before => pair.before_clipped,
            PairRole::After => pair.after_clipped,
        };
        BenchmarkInstance {
            instance_id: format!("{pair_id}-{}", role.as_str()),
            task,
            audio_path: PathBuf::from("audio").join(format!("{pair_id}_{}.wav", role.as_str())),
            question_text: pair.question.text.clone(),
            phrase_spans: pair.question.spans.clone(),
            ground_truth: role.truth(),
            pair_id: pair_id.clone(),
            pair_role: role,
            provenance: Provenance {
                background_id: pair.background_id.clone(),
                events: pair.events.clone(),
                gap_samples: pair.gap_samples,
                seed,
                clipped_samples: clipped as u64,
            },
        }
    })
}

fn phrase_spans(question: &str, phrases: &[String]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut from = 0;
    for p in phrases {
        if let Some(pos) = question[from..].find(p.as_str()) {
            spans.push((from + pos, from + pos + p.len()));
            from += pos + p.len();
        }
    }
    spans
}

/// Complete externally paired clips, keyed by task.
fn prepaired(index: &CorpusIndex) -> BTreeMap<Task, Vec<(String, [&CorpusEntry; 2])>> {
    let mut halves: BTreeMap<(Task, String), [Option<&CorpusEntry>; 2]> = BTreeMap::new();
    for e in index.by_role(CorpusRole::Paired) {
        let Some(p) = &e.paired else { continue };
        let Ok(task) = p.task.parse::<Task>() else {
            log::warn!("ignoring paired clip {} with unknown task `{}`", e.source_id, p.task);
            continue;
        };
        let slot = usize::from(p.pair_role == "after");
        halves.entry((task, p.pair_key.clone())).or_default()[slot] = Some(e);
    }
    let mut out: BTreeMap<Task, Vec<_>> = BTreeMap::new();
    for ((task, key), [before, after]) in halves {
        match (before, after) {
            (Some(b), Some(a)) if b.paired.as_ref().map(|p| &p.question) == a.paired.as_ref().map(|p| &p.question) => {
                out.entry(task).or_default().push((key, [b, a]));
            }
            _ => log::warn!("ignoring incomplete or inconsistent external pair `{key}`"),
        }
    }
    out
}

fn write_pair(audio_dir: &Path, instances: &[BenchmarkInstance; 2], pair: &PairAudio) -> Result<(), SynthError> {
    for (inst, clip) in instances.iter().zip([&pair.before, &pair.after]) {
        let name = inst.audio_path.file_name().expect("audio path has a file name");
        corpus::write_wav(clip, &audio_dir.join(name))?;
    }
    Ok(())
}

/// Generates all three paired benchmarks under `out_dir`: WAV files in
/// `out_dir/audio/` and the manifest at `out_dir/manifest.jsonl`.
pub fn generate_benchmark(config: &SynthConfig, index: &CorpusIndex, seed: u64, out_dir: &Path) -> Result<SynthOutput, SynthError> {
    for task in Task::ALL {
        let count = config.task_counts.get(task);
        if !count.is_multiple_of(2) {
            return Err(SynthError::OddCount { task, count });
        }
    }
    if !config.temporal_gap_s.is_finite() || config.temporal_gap_s < 0.0 {
        return Err(SynthError::InvalidGap(config.temporal_gap_s));
    }

    let external = prepaired(index);
    let mut plan: Vec<(Task, usize, usize)> = Vec::new(); // (task, external pairs used, synthesized pairs)
    for task in Task::ALL {
        let pairs = config.task_counts.get(task) / 2;
        let ext = external.get(&task).map_or(0, Vec::len).min(pairs);
        plan.push((task, ext, pairs - ext));
    }
    let needed: BTreeSet<Task> = plan.iter().filter(|p| p.2 > 0).map(|p| p.0).collect();
    let pools = Pools::build(index, config, &needed)?;
    let shortfalls: Vec<String> = needed.iter().filter_map(|&t| pools.shortfall(t)).collect();
    if !shortfalls.is_empty() {
        return Err(SynthError::InsufficientCorpus(shortfalls));
    }

    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|source| SynthError::Io { path: audio_dir.clone(), source })?;

    let mut instances = Vec::with_capacity(config.task_counts.total());
    let mut stats = SynthStats::default();
    for &(task, ext, synth) in &plan {
        let mut built: Vec<[BenchmarkInstance; 2]> = Vec::with_capacity(ext + synth);

        for (i, (key, halves)) in external.get(&task).into_iter().flatten().take(ext).enumerate() {
            let decode = |e: &CorpusEntry| corpus::load_clip(&e.clip_path, config.canonical_rate);
            let p = halves[0].paired.as_ref().expect("paired entry");
            let pair = PairAudio {
                before: decode(halves[0])?,
                after: decode(halves[1])?,
                question: Question { text: p.question.clone(), spans: phrase_spans(&p.question, &p.event_phrases) },
                events: halves
                    .iter()
                    .zip(["external_before", "external_after"])
                    .map(|(e, slot)| Placement {
                        slot: slot.into(),
                        source_id: e.source_id.clone(),
                        label: key.clone(),
                        offset_samples: 0,
                    })
                    .collect(),
                background_id: None,
                gap_samples: None,
                before_clipped: 0,
                after_clipped: 0,
            };
            let inst = instances_for(task, i, seed, &pair);
            write_pair(&audio_dir, &inst, &pair)?;
            built.push(inst);
        }
        stats.prepaired_pairs += ext;

        let synthesized: Vec<[BenchmarkInstance; 2]> = (0..synth)
            .into_par_iter()
            .map(|j| {
                let pair_index = ext + j;
                let pair_seed = derive_seed(seed, task.as_str(), pair_index as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
                let pair = match task {
                    Task::Existence => pools.draw_existence(&mut rng)?,
                    Task::Temporal => pools.draw_temporal(&mut rng, config.temporal_gap_s)?,
                    Task::Attribute => {
                        pools.draw_attribute(&mut rng, config.attribute_alternate_questions && pair_index % 2 == 1)?
                    }
                };
                let inst = instances_for(task, pair_index, pair_seed, &pair);
                write_pair(&audio_dir, &inst, &pair)?;
                Ok(inst)
            })
            .collect::<Result<_, SynthError>>()?;
        built.extend(synthesized);

        stats.counts.insert(task, built.len() * 2);
        for inst in built.into_iter().flatten() {
            let c = inst.provenance.clipped_samples;
            if c > 0 {
                stats.outputs_with_clipping += 1;
            }
            stats.total_clipped_samples += c;
            stats.max_clipped_samples = stats.max_clipped_samples.max(c);
            instances.push(inst);
        }
    }

    let manifest = BenchmarkManifest {
        header: ManifestHeader {
            seed,
            canonical_rate: config.canonical_rate,
            task_counts: config.task_counts,
            config: serde_json::to_value(config).expect("config serializes"),
        },
        instances,
        base_dir: out_dir.to_path_buf(),
    };
    let manifest_path = out_dir.join("manifest.jsonl");
    manifest.write(&manifest_path)?;
    Ok(SynthOutput { manifest, manifest_path, stats })
}
