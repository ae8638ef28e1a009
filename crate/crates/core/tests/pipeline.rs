mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use hearcheck::adapters::{SimAdapter, SimKind, SimPolicy};
use hearcheck::benchmark::{BenchmarkManifest, PairRole, Task, TaskCounts, Truth};
use hearcheck::corpus::{self, quantize_i16, AudioClip};
use hearcheck::eval::{self, read_audit, read_records, EvalOptions};
use hearcheck::synthesis::{generate_benchmark, SynthConfig, SynthError};
use hearcheck::templates::{CAPTION_PROMPT, TEMPORAL_CAPTION_PROMPT};
use hearcheck::{protocol, Setting};

fn small_config(e: usize, t: usize, a: usize) -> SynthConfig {
    SynthConfig { task_counts: TaskCounts { existence: e, temporal: t, attribute: a }, ..SynthConfig::default() }
}

fn synth(dir: &Path, seed: u64, config: &SynthConfig) -> BenchmarkManifest {
    let corpus_manifest = common::toy_corpus(&dir.join("corpus"));
    let index = corpus::index_corpus(&corpus_manifest).unwrap();
    generate_benchmark(config, &index, seed, &dir.join("bench")).unwrap().manifest
}

fn i16s(clip: &AudioClip) -> Vec<i16> {
    clip.samples().iter().map(|&s| quantize_i16(s)).collect()
}

#[test]
fn pairs_are_balanced_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 11, &small_config(20, 12, 8));
    assert_eq!(m.count_by_task(), BTreeMap::from([(Task::Existence, 20), (Task::Temporal, 12), (Task::Attribute, 8)]));

    let mut by_pair: HashMap<&str, Vec<_>> = HashMap::new();
    for inst in &m.instances {
        by_pair.entry(&inst.pair_id).or_default().push(inst);
        assert_eq!(inst.ground_truth, inst.pair_role.truth());
        assert!(m.resolve_audio(inst).is_file());
        for (s, e) in &inst.phrase_spans {
            assert!(inst.question_text.is_char_boundary(*s) && *e <= inst.question_text.len());
        }
    }
    for (id, members) in by_pair {
        assert_eq!(members.len(), 2, "{id}");
        assert_eq!(members[0].question_text, members[1].question_text);
        assert_ne!(members[0].pair_role, members[1].pair_role);
    }
}

#[test]
fn existence_audio_files_match_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 5, &small_config(16, 0, 0));
    let corpus_dir = dir.path().join("corpus");
    let load = |id: &str, peak: f32| corpus::normalize(&corpus::load_clip(&corpus_dir.join(id), 16_000).unwrap(), peak);

    for pair in m.instances.chunks(2) {
        let (before, after) = (&pair[0], &pair[1]);
        assert_eq!((before.pair_role, after.pair_role), (PairRole::Before, PairRole::After));
        let bg = load(before.provenance.background_id.as_deref().unwrap(), 0.9);
        let mut mix = bg;
        for p in &before.provenance.events[..2] {
            mix = corpus::overlay_at(&mix, &load(&p.source_id, 0.5), p.offset_samples as usize).unwrap().clip;
        }
        let s_c = &before.provenance.events[2];
        assert_eq!(s_c.slot, "S_C");
        assert!(before.question_text.contains(&s_c.label));
        let rebuilt_before = corpus::overlay_at(&mix, &load(&s_c.source_id, 0.5), s_c.offset_samples as usize).unwrap().clip;

        let on_disk = |inst| i16s(&corpus::load_clip(&m.resolve_audio(inst), 16_000).unwrap());
        assert_eq!(on_disk(after), i16s(&mix));
        assert_eq!(on_disk(before), i16s(&rebuilt_before));
    }
}

#[test]
fn temporal_files_are_swapped_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 2, &small_config(0, 6, 0));
    for pair in m.instances.chunks(2) {
        let load = |i: usize| corpus::load_clip(&m.resolve_audio(&pair[i]), 16_000).unwrap();
        let (before, after) = (load(0), load(1));
        let ev = &pair[0].provenance.events;
        let gap = pair[0].provenance.gap_samples.unwrap() as usize;
        assert_eq!(gap, 8_000);
        let x_len = ev[1].offset_samples as usize - gap;
        let y_len = before.len() - x_len - gap;
        assert_eq!(before.len(), after.len());
        assert_eq!(&before.samples()[..x_len], &after.samples()[y_len + gap..]);
        assert_eq!(&before.samples()[x_len + gap..], &after.samples()[..y_len]);
        assert!(before.samples()[x_len..x_len + gap].iter().all(|&s| s == 0.0));
    }
}

#[test]
fn same_seed_same_bytes_different_seed_differs() {
    let config = small_config(8, 4, 4);
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, mb, mc) = (synth(a.path(), 3, &config), synth(b.path(), 3, &config), synth(c.path(), 4, &config));
    assert_eq!(ma.to_jsonl(), mb.to_jsonl());
    for inst in &ma.instances {
        assert_eq!(fs::read(ma.resolve_audio(inst)).unwrap(), fs::read(mb.resolve_audio(inst)).unwrap());
    }
    assert_ne!(ma.hash(), mc.hash());
    let back = BenchmarkManifest::read(&a.path().join("bench/manifest.jsonl")).unwrap();
    assert_eq!(back.instances, ma.instances);
    assert_eq!(back.hash(), ma.hash());
}

#[test]
fn synthesis_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_manifest = common::toy_corpus(&dir.path().join("corpus"));
    let index = corpus::index_corpus(&corpus_manifest).unwrap();
    let out = dir.path().join("bench");
    assert!(matches!(
        generate_benchmark(&small_config(3, 0, 0), &index, 1, &out),
        Err(SynthError::OddCount { task: Task::Existence, count: 3 })
    ));

    // Drop attribute clips so no swap is possible.
    let mut no_attr = index.clone();
    no_attr.entries.retain(|e| e.entity.as_deref() != Some("man") || e.action.as_deref() != Some("laugh"));
    no_attr.entries.retain(|e| e.entity.as_deref() != Some("woman") || e.action.as_deref() != Some("cough"));
    no_attr.entries.retain(|e| e.entity.as_deref() != Some("child"));
    match generate_benchmark(&small_config(2, 2, 2), &no_attr, 1, &out) {
        Err(SynthError::InsufficientCorpus(v)) => assert!(v.len() == 1 && v[0].starts_with("attribute")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn alternate_attribute_questions_keep_balance() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig { attribute_alternate_questions: true, ..small_config(0, 0, 8) };
    let m = synth(dir.path(), 9, &config);
    let before: Vec<_> = m.instances.iter().filter(|i| i.pair_role == PairRole::Before).collect();
    assert_eq!(before.len(), 4);
    assert!(m.instances.iter().filter(|i| i.ground_truth == Truth::No).count() == 4);
}

fn oracle(seed: u64) -> SimAdapter {
    SimAdapter::new(SimPolicy { seed, ..SimPolicy::new(SimKind::Oracle) }).unwrap()
}

#[test]
fn eval_resumes_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 1, &small_config(4, 4, 4));
    let out = dir.path().join("run");
    let options = EvalOptions { settings: vec![Setting::Original, Setting::Negative], ..EvalOptions::default() };
    let first = eval::run_eval(&m, &oracle(0), &options, &out).unwrap();
    assert_eq!(first.written, 24);
    let complete = fs::read_to_string(out.join("records.jsonl")).unwrap();

    // Simulate an interruption: keep 10 lines and half of the 11th.
    let lines: Vec<&str> = complete.lines().collect();
    let mut partial = lines[..10].join("\n");
    partial.push('\n');
    partial.push_str(&lines[10][..lines[10].len() / 2]);
    fs::write(out.join("records.jsonl"), partial).unwrap();

    let second = eval::run_eval(&m, &oracle(0), &options, &out).unwrap();
    assert_eq!((second.resumed, second.written), (10, 14));
    assert_eq!(fs::read_to_string(out.join("records.jsonl")).unwrap(), complete);

    let third = eval::run_eval(&m, &oracle(0), &options, &out).unwrap();
    assert_eq!((third.resumed, third.written), (24, 0));
    assert_eq!(fs::read_to_string(out.join("records.jsonl")).unwrap(), complete);
}

#[test]
fn match_and_silent_settings_are_audited() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 1, &small_config(2, 2, 2));
    let out = dir.path().join("run");
    let options = EvalOptions { settings: vec![Setting::Match, Setting::Silent], ..EvalOptions::default() };
    eval::run_eval(&m, &oracle(0), &options, &out).unwrap();

    let audit = read_audit(&out.join("audit.jsonl")).unwrap();
    let by_id: HashMap<_, _> = m.instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();
    for entry in audit.iter().filter(|e| e.setting == Setting::Match) {
        let inst = by_id[entry.instance_id.as_str()];
        assert_eq!(entry.rounds.len(), 2);
        let expected = if inst.task == Task::Temporal { TEMPORAL_CAPTION_PROMPT } else { CAPTION_PROMPT };
        assert_eq!(entry.rounds[0].turns.len(), 1);
        assert_eq!(entry.rounds[0].turns[0].text, expected);
        let second = &entry.rounds[1].turns;
        assert_eq!(second.len(), 3);
        assert_eq!(second[0].text, expected);
        assert_eq!(Some(&second[1].text), entry.rounds[0].response.as_ref());
        assert_eq!(second[2].text, inst.question_text);
        assert!(protocol::roles_alternate(second));
    }
    let records = read_records(&out.join("records.jsonl")).unwrap();
    let silent: Vec<_> = records.iter().filter(|r| r.setting == Setting::Silent).collect();
    assert_eq!(silent.len(), 6);
    assert!(silent.iter().all(|r| r.ground_truth == Truth::No && r.raw_text == "No"));
    let silence_files: Vec<_> = fs::read_dir(out.join("silence")).unwrap().collect();
    assert!(!silence_files.is_empty() && silence_files.len() <= 6);
}

#[test]
fn concurrent_silent_variants_share_one_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), 1, &small_config(2, 0, 0));
    let inst = &m.instances[0];
    let audio = m.resolve_audio(inst);
    let silence_dir = dir.path().join("silence");
    std::thread::scope(|s| {
        for _ in 0..16 {
            s.spawn(|| protocol::silent_variant(inst, &audio, &silence_dir).unwrap());
        }
    });
    let files: Vec<_> = fs::read_dir(&silence_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 1, "{files:?}");
}
