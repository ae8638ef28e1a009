//! Source corpus ingestion and the audio primitives every synthesized clip is
//! built from: decoding, peak normalization, overlay mixing and silence.
//!
//! All clips are mono `f32` at a canonical rate. Decoding mixes stereo down by
//! averaging and resamples with linear interpolation (no band limiting).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Canonical sample rate for every clip inside one benchmark run.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Peak that background clips are normalized to before mixing.
pub const DEFAULT_BACKGROUND_PEAK: f32 = 0.9;

/// Peak that event clips are normalized to before mixing.
pub const DEFAULT_EVENT_PEAK: f32 = 0.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unreadable audio file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("unsupported encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },
    #[error("audio file {0} contains no samples")]
    EmptyAudio(PathBuf),
    #[error("sample rate mismatch: {base} Hz vs {event} Hz")]
    RateMismatch { base: u32, event: u32 },
    #[error("silence duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("corpus manifest line {line}: {reason}")]
    ManifestParseError { line: usize, reason: String },
    #[error("corpus manifest line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("corpus manifest line {line}: clip path {path} does not exist")]
    DanglingPath { line: usize, path: PathBuf },
    #[error("cannot write {path}: {reason}")]
    WriteFailed { path: PathBuf, reason: String },
}

/// Decoded mono PCM audio.
#[derive(Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    source_id: String,
}

impl fmt::Debug for AudioClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioClip")
            .field("source_id", &self.source_id)
            .field("sample_rate", &self.sample_rate)
            .field("len", &self.samples.len())
            .finish()
    }
}

impl AudioClip {
    /// Builds a clip from raw samples. Samples outside `[-1, 1]` are clipped.
    pub fn from_samples(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        let samples = samples.into_iter().map(clip_sample).collect();
        Self { samples, sample_rate, source_id: source_id.into() }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> u16 {
        1
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    /// Concatenates clips of one sample rate back to back.
    pub fn concat(parts: &[&AudioClip], source_id: impl Into<String>) -> Result<Self, CorpusError> {
        let rate = parts.first().map_or(DEFAULT_SAMPLE_RATE, |c| c.sample_rate);
        let mut samples = Vec::with_capacity(parts.iter().map(|c| c.len()).sum());
        for part in parts {
            if part.sample_rate != rate {
                return Err(CorpusError::RateMismatch { base: rate, event: part.sample_rate });
            }
            samples.extend_from_slice(&part.samples);
        }
        Ok(Self { samples, sample_rate: rate, source_id: source_id.into() })
    }

    /// Zero-filled clip of exactly `len` samples.
    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate, source_id: format!("silence:{len}@{sample_rate}") }
    }
}

fn clip_sample(s: f32) -> f32 {
    if s.is_nan() {
        0.0
    } else {
        s.clamp(-1.0, 1.0)
    }
}

/// Decodes a RIFF/WAVE file into a mono clip at `canonical_rate`.
pub fn load_clip(path: &Path, canonical_rate: u32) -> Result<AudioClip, CorpusError> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(CorpusError::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: format!("{} channels (expected 1 or 2)", spec.channels),
        });
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound_error(path, e))?,
        (format, bits) => {
            return Err(CorpusError::UnsupportedEncoding {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {format:?} samples"),
            })
        }
    };

    let mono: Vec<f32> = if spec.channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|frame| ((f64::from(frame[0]) + f64::from(frame[1])) / 2.0) as f32)
            .collect()
    } else {
        interleaved
    };
    if mono.is_empty() {
        return Err(CorpusError::EmptyAudio(path.to_path_buf()));
    }

    let resampled = resample_linear(&mono, spec.sample_rate, canonical_rate);
    Ok(AudioClip::from_samples(resampled, canonical_rate, path.to_string_lossy()))
}

fn map_hound_error(path: &Path, err: hound::Error) -> CorpusError {
    match err {
        hound::Error::Unsupported => CorpusError::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: "non-PCM or unsupported WAVE format".into(),
        },
        other => CorpusError::UnreadableFile { path: path.to_path_buf(), reason: other.to_string() },
    }
}

/// Linear-interpolation resampler. Output sample `i` sits at input position
/// `i * from / to`; the output spans exactly the input's time range, so `n`
/// inputs give `floor((n - 1) * to / from) + 1` outputs.
pub fn resample_linear(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.len() <= 1 {
        return input.to_vec();
    }
    let (from, to) = (u64::from(from), u64::from(to));
    let out_len = ((input.len() as u64 - 1) * to / from + 1) as usize;
    (0..out_len as u64)
        .map(|i| {
            let pos = i * from;
            let k = (pos / to) as usize;
            let rem = pos % to;
            if rem == 0 || k + 1 >= input.len() {
                input[k.min(input.len() - 1)]
            } else {
                let a = f64::from(input[k]);
                let b = f64::from(input[k + 1]);
                (a + (b - a) * (rem as f64 / to as f64)) as f32
            }
        })
        .collect()
}

/// Scales `clip` so its absolute peak equals `target_peak`. Silent clips are
/// returned unchanged.
///
/// Panics if `target_peak` is not in `(0, 1]`.
pub fn normalize(clip: &AudioClip, target_peak: f32) -> AudioClip {
    assert!(
        target_peak > 0.0 && target_peak <= 1.0,
        "target peak must be in (0, 1], got {target_peak}"
    );
    let peak = clip.peak();
    if peak == 0.0 {
        return clip.clone();
    }
    // The product of two f32 values is exact in f64, so the peak sample maps
    // to exactly `target_peak` and a second pass is the identity.
    let target = f64::from(target_peak);
    let peak = f64::from(peak);
    let samples = clip.samples.iter().map(|&s| (f64::from(s) * target / peak) as f32).collect();
    AudioClip { samples, sample_rate: clip.sample_rate, source_id: clip.source_id.clone() }
}

/// Result of an overlay, with the number of samples that had to be hard clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub clip: AudioClip,
    pub clipped_samples: usize,
}

/// Adds `event` onto `base` starting `offset_s` seconds in.
pub fn overlay(base: &AudioClip, event: &AudioClip, offset_s: f64) -> Result<AudioClip, CorpusError> {
    let offset = (offset_s.max(0.0) * f64::from(base.sample_rate)).round() as usize;
    overlay_at(base, event, offset).map(|m| m.clip)
}

/// Sample-offset overlay. Output length is `max(len(base), offset + len(event))`
/// and every summed sample is hard clipped to `[-1, 1]`.
pub fn overlay_at(base: &AudioClip, event: &AudioClip, offset: usize) -> Result<Mix, CorpusError> {
    if base.sample_rate != event.sample_rate {
        return Err(CorpusError::RateMismatch { base: base.sample_rate, event: event.sample_rate });
    }
    let len = base.len().max(offset + event.len());
    let mut samples = Vec::with_capacity(len);
    samples.extend_from_slice(&base.samples);
    samples.resize(len, 0.0);
    let mut clipped_samples = 0;
    for (out, &e) in samples[offset..].iter_mut().zip(&event.samples) {
        let sum = *out + e;
        if sum.abs() > 1.0 {
            clipped_samples += 1;
        }
        *out = sum.clamp(-1.0, 1.0);
    }
    Ok(Mix {
        clip: AudioClip { samples, sample_rate: base.sample_rate, source_id: base.source_id.clone() },
        clipped_samples,
    })
}

/// All-zero clip of `round(duration_s * rate)` samples (at least one).
pub fn silence(duration_s: f64, rate: u32) -> Result<AudioClip, CorpusError> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(CorpusError::NonPositiveDuration(duration_s));
    }
    let len = ((duration_s * f64::from(rate)).round() as usize).max(1);
    Ok(AudioClip::zeros(len, rate))
}

/// Quantizes a sample to the 16-bit PCM value written to disk.
pub fn quantize_i16(s: f32) -> i16 {
    (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes `clip` as 16-bit mono PCM.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<(), CorpusError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let fail = |e: hound::Error| CorpusError::WriteFailed { path: path.to_path_buf(), reason: e.to_string() };
    let mut writer = hound::WavWriter::create(path, spec).map_err(fail)?;
    for &s in &clip.samples {
        writer.write_sample(quantize_i16(s)).map_err(fail)?;
    }
    writer.finalize().map_err(fail)
}

/// Reads the frame count and rate of a WAVE file without decoding it.
pub fn wav_header(path: &Path) -> Result<(u32, u32), CorpusError> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound_error(path, e))?;
    Ok((reader.duration(), reader.spec().sample_rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusRole {
    Background,
    Event,
    AttributeEvent,
    /// Externally paired audio that bypasses synthesis.
    Paired,
}

impl CorpusRole {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "background" => Some(Self::Background),
            "event" => Some(Self::Event),
            "attribute_event" => Some(Self::AttributeEvent),
            "paired" => Some(Self::Paired),
            _ => None,
        }
    }
}

/// Extra fields carried by `paired` entries: a clip that is already one half
/// of a before/after pair, with its question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSource {
    pub task: String,
    pub pair_key: String,
    pub pair_role: String,
    pub question: String,
    pub event_phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    /// Resolved path (manifest-relative paths are joined to the manifest directory).
    pub clip_path: PathBuf,
    /// Path exactly as written in the manifest; used as the stable source id.
    pub source_id: String,
    pub class_label: String,
    pub category: String,
    pub duration_s: f64,
    pub corpus_role: CorpusRole,
    pub entity: Option<String>,
    pub action: Option<String>,
    pub paired: Option<PairedSource>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub entries: Vec<CorpusEntry>,
}

impl CorpusIndex {
    pub fn by_role(&self, role: CorpusRole) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.corpus_role == role)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses and validates a JSON-lines corpus manifest.
pub fn index_corpus(manifest_path: &Path) -> Result<CorpusIndex, CorpusError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| CorpusError::UnreadableFile {
        path: manifest_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base_dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut entries = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| CorpusError::ManifestParseError { line, reason: e.to_string() })?;
        let obj = value.as_object().ok_or(CorpusError::ManifestParseError {
            line,
            reason: "expected a JSON object".into(),
        })?;
        let field = |name: &str| obj.get(name).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());

        let source_id = field("clip_path").ok_or(CorpusError::MissingField { line, field: "clip_path" })?;
        let role_str = field("corpus_role").ok_or(CorpusError::MissingField { line, field: "corpus_role" })?;
        let corpus_role = CorpusRole::parse(role_str).ok_or_else(|| CorpusError::ManifestParseError {
            line,
            reason: format!("unknown corpus_role `{role_str}`"),
        })?;

        let mut entity = None;
        let mut action = None;
        let mut paired = None;
        let class_label = match corpus_role {
            CorpusRole::Event => field("class_label").ok_or(CorpusError::MissingField { line, field: "class_label" })?.to_string(),
            CorpusRole::AttributeEvent => {
                let e = field("entity").ok_or(CorpusError::MissingField { line, field: "entity" })?;
                let a = field("action").ok_or(CorpusError::MissingField { line, field: "action" })?;
                entity = Some(e.to_string());
                action = Some(a.to_string());
                field("class_label").map_or_else(|| format!("{e} {a}"), str::to_string)
            }
            CorpusRole::Background => field("class_label").or_else(|| field("caption")).unwrap_or("").to_string(),
            CorpusRole::Paired => {
                let task = field("task").ok_or(CorpusError::MissingField { line, field: "task" })?;
                let pair_key = field("pair_key").ok_or(CorpusError::MissingField { line, field: "pair_key" })?;
                let pair_role = field("pair_role").ok_or(CorpusError::MissingField { line, field: "pair_role" })?;
                let question = field("question").ok_or(CorpusError::MissingField { line, field: "question" })?;
                if pair_role != "before" && pair_role != "after" {
                    return Err(CorpusError::ManifestParseError {
                        line,
                        reason: format!("pair_role must be before or after, got `{pair_role}`"),
                    });
                }
                let event_phrases: Vec<String> = obj
                    .get("event_phrases")
                    .and_then(Value::as_array)
                    .map(|v| v.iter().filter_map(Value::as_str).map(str::to_string).collect())
                    .unwrap_or_default();
                if let Some(p) = event_phrases.iter().find(|p| !question.contains(p.as_str())) {
                    return Err(CorpusError::ManifestParseError {
                        line,
                        reason: format!("event phrase `{p}` does not occur in the question"),
                    });
                }
                paired = Some(PairedSource {
                    task: task.to_string(),
                    pair_key: pair_key.to_string(),
                    pair_role: pair_role.to_string(),
                    question: question.to_string(),
                    event_phrases,
                });
                field("class_label").unwrap_or("").to_string()
            }
        };

        if !seen.insert(source_id.to_string()) {
            return Err(CorpusError::ManifestParseError {
                line,
                reason: format!("duplicate clip_path `{source_id}`"),
            });
        }
        let clip_path = base_dir.join(source_id);
        if !clip_path.is_file() {
            return Err(CorpusError::DanglingPath { line, path: clip_path });
        }
        let (frames, rate) = wav_header(&clip_path)?;
        entries.push(CorpusEntry {
            clip_path,
            source_id: source_id.to_string(),
            class_label,
            category: field("category").unwrap_or("").to_string(),
            duration_s: f64::from(frames) / f64::from(rate.max(1)),
            corpus_role,
            entity,
            action,
            paired,
        });
    }
    Ok(CorpusIndex { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip(samples: &[f32]) -> AudioClip {
        AudioClip::from_samples(samples.to_vec(), DEFAULT_SAMPLE_RATE, "t")
    }

    fn write_i16(path: &Path, rate: u32, channels: u16, samples: &[i16]) {
        let spec = hound::WavSpec { channels, sample_rate: rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn load_identity_rate_scales_by_32768() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let raw = [0i16, 16384, -32768, 32767, -1];
        write_i16(&path, 16_000, 1, &raw);
        let c = load_clip(&path, 16_000).unwrap();
        let expected: Vec<f32> = raw.iter().map(|&v| f32::from(v) / 32768.0).collect();
        assert_eq!(c.samples(), expected.as_slice());
        assert_eq!(c.channel_count(), 1);
    }

    #[test]
    fn upsample_doubles_with_midpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let raw = [100i16, -300, 2000, 7, -32768];
        write_i16(&path, 8_000, 1, &raw);
        let c = load_clip(&path, 16_000).unwrap();

        // Brute-force oracle: even outputs copy inputs, odd outputs are midpoints.
        let x: Vec<f64> = raw.iter().map(|&v| f64::from(v) / 32768.0).collect();
        let mut oracle = Vec::new();
        for k in 0..x.len() {
            oracle.push(x[k] as f32);
            if k + 1 < x.len() {
                oracle.push(((x[k] + x[k + 1]) / 2.0) as f32);
            }
        }
        assert_eq!(c.len(), 2 * raw.len() - 1);
        assert_eq!(c.samples(), oracle.as_slice());
    }

    #[test]
    fn stereo_opposite_channels_cancel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let frames: Vec<i16> = (0..20).flat_map(|_| [16384i16, -16384]).collect();
        write_i16(&path, 16_000, 2, &frames);
        let c = load_clip(&path, 16_000).unwrap();
        assert_eq!(c.len(), 20);
        assert!(c.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn load_float_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 16_000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for s in [0.25f32, -0.5, 0.75] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(load_clip(&path, 16_000).unwrap().samples(), &[0.25, -0.5, 0.75]);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.wav");
        assert!(matches!(load_clip(&missing, 16_000), Err(CorpusError::UnreadableFile { .. })));

        let garbage = dir.path().join("g.wav");
        fs::write(&garbage, b"not a wave file at all").unwrap();
        assert!(matches!(load_clip(&garbage, 16_000), Err(CorpusError::UnreadableFile { .. })));

        let empty = dir.path().join("e.wav");
        write_i16(&empty, 16_000, 1, &[]);
        assert!(matches!(load_clip(&empty, 16_000), Err(CorpusError::EmptyAudio(_))));

        let eight_bit = dir.path().join("8.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 16_000, bits_per_sample: 8, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&eight_bit, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_clip(&eight_bit, 16_000), Err(CorpusError::UnsupportedEncoding { .. })));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&clip(&[0.2, -0.4]), 0.8).samples(), &[0.4, -0.8]);
        let zero = clip(&[0.0; 8]);
        assert_eq!(normalize(&zero, 0.9), zero);
        let at_target = clip(&[0.9, -0.3, 0.45]);
        assert_eq!(normalize(&at_target, 0.9), at_target);
    }

    #[test]
    #[should_panic]
    fn normalize_rejects_zero_target() {
        normalize(&clip(&[0.1]), 0.0);
    }

    #[test]
    fn overlay_examples() {
        let x = clip(&[0.1, -0.2, 0.3]);
        let s = silence(1.0, DEFAULT_SAMPLE_RATE).unwrap();
        let out = overlay(&s, &x, 0.0).unwrap();
        assert_eq!(out.len(), 16_000);
        assert_eq!(&out.samples()[..3], x.samples());
        assert!(out.samples()[3..].iter().all(|&v| v == 0.0));

        let base = AudioClip::zeros(100, DEFAULT_SAMPLE_RATE);
        let ev = AudioClip::zeros(50, DEFAULT_SAMPLE_RATE);
        assert_eq!(overlay_at(&base, &ev, 80).unwrap().clip.len(), 130);

        let mix = overlay_at(&clip(&[0.6, 0.6]), &clip(&[0.6, -0.9]), 0).unwrap();
        assert_eq!(mix.clip.samples(), &[1.0, 0.6f32 + -0.9f32]);
        assert_eq!(mix.clipped_samples, 1);
        assert!((mix.clip.samples()[1] + 0.3).abs() < 1e-6);
    }

    #[test]
    fn overlay_rate_mismatch() {
        let a = AudioClip::zeros(4, 16_000);
        let b = AudioClip::zeros(4, 8_000);
        assert!(matches!(overlay(&a, &b, 0.0), Err(CorpusError::RateMismatch { base: 16_000, event: 8_000 })));
    }

    #[test]
    fn silence_lengths() {
        assert_eq!(silence(1.0, 16_000).unwrap().len(), 16_000);
        assert_eq!(silence(0.5, 8_000).unwrap().len(), 4_000);
        assert!(matches!(silence(0.0, 16_000), Err(CorpusError::NonPositiveDuration(_))));
        assert!(matches!(silence(-1.0, 16_000), Err(CorpusError::NonPositiveDuration(_))));
        let s = silence(0.25, 16_000).unwrap();
        assert_eq!(overlay(&s, &s, 0.0).unwrap(), s);
    }

    fn write_manifest(dir: &Path, lines: &[&str]) -> PathBuf {
        let p = dir.join("corpus.jsonl");
        fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    #[test]
    fn index_valid_and_invalid_manifests() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["bg.wav", "dog.wav", "cry.wav"] {
            write_i16(&dir.path().join(name), 16_000, 1, &[1; 8000]);
        }
        let ok = write_manifest(
            dir.path(),
            &[
                r#"{"clip_path":"bg.wav","corpus_role":"background","class_label":"people talking in a park"}"#,
                r#"{"clip_path":"dog.wav","corpus_role":"event","class_label":"dog barking","category":"animals"}"#,
                r#"{"clip_path":"cry.wav","corpus_role":"attribute_event","entity":"infant","action":"cry"}"#,
            ],
        );
        let index = index_corpus(&ok).unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(index.entries[1].duration_s, 0.5);
        assert_eq!(index.entries[2].class_label, "infant cry");

        let missing = write_manifest(
            dir.path(),
            &[
                r#"{"clip_path":"bg.wav","corpus_role":"background"}"#,
                r#"{"clip_path":"dog.wav","corpus_role":"event"}"#,
            ],
        );
        assert!(matches!(index_corpus(&missing), Err(CorpusError::MissingField { line: 2, field: "class_label" })));

        let dup = write_manifest(
            dir.path(),
            &[
                r#"{"clip_path":"dog.wav","corpus_role":"event","class_label":"dog barking"}"#,
                r#"{"clip_path":"dog.wav","corpus_role":"event","class_label":"dog barking"}"#,
            ],
        );
        match index_corpus(&dup) {
            Err(CorpusError::ManifestParseError { line: 2, reason }) => assert!(reason.contains("dog.wav")),
            other => panic!("unexpected {other:?}"),
        }

        let dangling = write_manifest(dir.path(), &[r#"{"clip_path":"gone.wav","corpus_role":"event","class_label":"x"}"#]);
        assert!(matches!(index_corpus(&dangling), Err(CorpusError::DanglingPath { line: 1, .. })));

        let attr = write_manifest(dir.path(), &[r#"{"clip_path":"cry.wav","corpus_role":"attribute_event","entity":"infant"}"#]);
        assert!(matches!(index_corpus(&attr), Err(CorpusError::MissingField { field: "action", .. })));

        let bad = write_manifest(dir.path(), &["{not json"]);
        assert!(matches!(index_corpus(&bad), Err(CorpusError::ManifestParseError { line: 1, .. })));
    }

    /// Samples on the 16-bit grid, the form every clip loaded from disk takes.
    fn grid_clip(max_len: usize, bound: i32) -> impl Strategy<Value = AudioClip> {
        prop::collection::vec(-bound..=bound, 1..max_len).prop_map(|v| {
            AudioClip::from_samples(v.into_iter().map(|k| k as f32 / 32768.0).collect(), DEFAULT_SAMPLE_RATE, "p")
        })
    }

    proptest! {
        #[test]
        fn overlay_associative_without_clipping(a in grid_clip(64, 10_000), b in grid_clip(64, 10_000), c in grid_clip(64, 10_000)) {
            let left = overlay_at(&overlay_at(&a, &b, 0).unwrap().clip, &c, 0).unwrap().clip;
            let right = overlay_at(&a, &overlay_at(&b, &c, 0).unwrap().clip, 0).unwrap().clip;
            prop_assert_eq!(left.samples(), right.samples());
        }

        #[test]
        fn overlay_with_silence_pads(a in grid_clip(64, 32_767), k in 0usize..100, n in 1usize..100) {
            let out = overlay_at(&a, &AudioClip::zeros(n, DEFAULT_SAMPLE_RATE), k).unwrap();
            let mut padded = a.samples().to_vec();
            padded.resize(a.len().max(k + n), 0.0);
            prop_assert_eq!(out.clip.samples(), padded.as_slice());
            prop_assert_eq!(out.clipped_samples, 0);
        }

        #[test]
        fn normalize_idempotent(v in prop::collection::vec(-1.0f32..=1.0, 1..64), p in 0.01f32..=1.0) {
            let once = normalize(&AudioClip::from_samples(v, DEFAULT_SAMPLE_RATE, "p"), p);
            let twice = normalize(&once, p);
            prop_assert_eq!(once.samples(), twice.samples());
            if once.peak() > 0.0 {
                prop_assert_eq!(once.peak(), p);
            }
        }

        #[test]
        fn wav_round_trip_within_quantization(v in prop::collection::vec(-1.0f32..=1.0, 1..256)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.wav");
            let c = AudioClip::from_samples(v, DEFAULT_SAMPLE_RATE, "p");
            write_wav(&c, &path).unwrap();
            let back = load_clip(&path, DEFAULT_SAMPLE_RATE).unwrap();
            prop_assert_eq!(back.len(), c.len());
            for (x, y) in c.samples().iter().zip(back.samples()) {
                prop_assert!((x - y).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
