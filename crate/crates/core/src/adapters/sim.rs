//! Simulated models with known, analytically checkable behaviour.

use serde::{Deserialize, Serialize};

use super::{check_dialogue, AdapterError, Capabilities, ModelAdapter, Reply, Request};
use crate::benchmark::Truth;
use crate::hash::unit_interval;
use crate::templates::{CAPTION_PROMPT, TEMPORAL_CAPTION_PROMPT};

/// Caption returned by the coin and oracle policies for caption prompts.
pub const SIM_CAPTION: &str = "The audio contains a mixture of sound events.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    AlwaysYes,
    AlwaysNo,
    /// "Yes" with probability `p_yes`, fixed per instance.
    Coin,
    /// Ground truth, flipped with probability `error_rate` per instance.
    Oracle,
    /// Text-only answerer for cascade prompts: says yes when the question's
    /// event phrase is mentioned in the audio description.
    CaptionKeyword,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPolicy {
    pub kind: SimKind,
    #[serde(default)]
    pub p_yes: f64,
    #[serde(default)]
    pub error_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimPolicy {
    pub fn new(kind: SimKind) -> Self {
        Self { kind, p_yes: 0.5, error_rate: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        for (name, v) in [("p_yes", self.p_yes), ("error_rate", self.error_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AdapterError::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    fn default_model_id(&self) -> String {
        match self.kind {
            SimKind::AlwaysYes => "sim-always_yes".into(),
            SimKind::AlwaysNo => "sim-always_no".into(),
            SimKind::Coin => format!("sim-coin-p{}", self.p_yes),
            SimKind::Oracle => format!("sim-oracle-e{}", self.error_rate),
            SimKind::CaptionKeyword => "sim-caption_keyword".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimAdapter {
    model_id: String,
    policy: SimPolicy,
}

fn yes_no(yes: bool) -> &'static str {
    if yes {
        "Yes"
    } else {
        "No"
    }
}

impl SimAdapter {
    pub fn new(policy: SimPolicy) -> Result<Self, AdapterError> {
        Self::with_id(policy.default_model_id(), policy)
    }

    pub fn with_id(model_id: impl Into<String>, policy: SimPolicy) -> Result<Self, AdapterError> {
        policy.validate()?;
        Ok(Self { model_id: model_id.into(), policy })
    }

    pub fn policy(&self) -> &SimPolicy {
        &self.policy
    }

    fn draw(&self, tag: &str, instance_id: &str) -> f64 {
        unit_interval(&[&self.policy.seed.to_le_bytes(), tag.as_bytes(), instance_id.as_bytes()])
    }
}

impl ModelAdapter for SimAdapter {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { accepts_audio: true, accepts_history: true, max_concurrency: usize::MAX }
    }

    fn respond(&self, request: &Request<'_>) -> Result<Reply, AdapterError> {
        check_dialogue(request.turns)?;
        let last = request.last_user_text().unwrap_or_default();
        let is_caption_prompt = last == CAPTION_PROMPT || last == TEMPORAL_CAPTION_PROMPT;
        let text = match self.policy.kind {
            SimKind::AlwaysYes => "Yes",
            SimKind::AlwaysNo => "No",
            SimKind::Coin | SimKind::Oracle if is_caption_prompt => SIM_CAPTION,
            SimKind::Coin => yes_no(self.draw("coin", &request.context.instance_id) < self.policy.p_yes),
            SimKind::Oracle => {
                let truth = request.context.ground_truth.ok_or_else(|| {
                    AdapterError::Config("oracle policy needs the instance ground truth".into())
                })?;
                let flip = self.draw("oracle", &request.context.instance_id) < self.policy.error_rate;
                yes_no((truth == Truth::Yes) != flip)
            }
            SimKind::CaptionKeyword => return Ok(Reply::text(keyword_answer(last))),
        };
        Ok(Reply::text(text))
    }
}

fn stem(word: &str) -> String {
    word.chars().filter(|c| c.is_alphanumeric()).take(4).collect::<String>().to_lowercase()
}

/// Position of the first caption word sharing a stem with any content word of
/// `phrase`, provided every content word is matched.
fn mention(caption: &[String], phrase: &str) -> Option<usize> {
    let words: Vec<String> = phrase
        .split_whitespace()
        .filter(|w| !matches!(w.to_lowercase().as_str(), "a" | "an" | "the" | "of" | "sound"))
        .map(stem)
        .filter(|s| !s.is_empty())
        .collect();
    if words.is_empty() {
        return None;
    }
    let positions: Option<Vec<usize>> = words.iter().map(|w| caption.iter().position(|c| c.starts_with(w.as_str()))).collect();
    positions.and_then(|p| p.into_iter().min())
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = text[from..].find(end)? + from;
    Some(&text[from..to])
}

/// Answers a cascade prompt (`Audio description: ...\nQuestion: ...`) from the
/// description text alone.
fn keyword_answer(prompt: &str) -> &'static str {
    let Some(caption) = between(prompt, "Audio description: ", "\nQuestion: ") else {
        return "I cannot answer without an audio description.";
    };
    let caption: Vec<String> = caption.split_whitespace().map(stem).collect();
    let question = prompt.split("\nQuestion: ").nth(1).unwrap_or_default();
    let question = question.lines().next().unwrap_or_default();
    if let Some(phrase) = between(question, "sound of ", " in the audio") {
        if let Some((first, second)) = phrase.split_once(" occur before the sound of ") {
            return match (mention(&caption, first), mention(&caption, second)) {
                (Some(a), Some(b)) => yes_no(a < b),
                _ => "No",
            };
        }
        return yes_no(mention(&caption, phrase).is_some());
    }
    "I cannot tell."
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::RequestContext;
    use crate::protocol::Turn;

    fn ask(adapter: &SimAdapter, id: &str, truth: Option<Truth>, text: &str) -> String {
        let turns = [Turn::user(text)];
        let req = Request { turns: &turns, audio: None, context: RequestContext { instance_id: id.into(), ground_truth: truth } };
        adapter.respond(&req).unwrap().text
    }

    #[test]
    fn constant_policies() {
        let yes = SimAdapter::new(SimPolicy::new(SimKind::AlwaysYes)).unwrap();
        let no = SimAdapter::new(SimPolicy::new(SimKind::AlwaysNo)).unwrap();
        for i in 0..10 {
            assert_eq!(ask(&yes, &i.to_string(), Some(Truth::No), "Is there?"), "Yes");
            assert_eq!(ask(&no, &i.to_string(), Some(Truth::Yes), "Is there?"), "No");
        }
    }

    #[test]
    fn degenerate_coin_and_perfect_oracle() {
        let coin = SimAdapter::new(SimPolicy { p_yes: 1.0, ..SimPolicy::new(SimKind::Coin) }).unwrap();
        let oracle = SimAdapter::new(SimPolicy { error_rate: 0.0, ..SimPolicy::new(SimKind::Oracle) }).unwrap();
        for i in 0..200 {
            let id = format!("inst-{i}");
            assert_eq!(ask(&coin, &id, None, "q"), "Yes");
            assert_eq!(ask(&oracle, &id, Some(Truth::No), "q"), "No");
            assert_eq!(ask(&oracle, &id, Some(Truth::Yes), "q"), "Yes");
        }
        assert_eq!(ask(&oracle, "x", Some(Truth::Yes), CAPTION_PROMPT), SIM_CAPTION);
    }

    #[test]
    fn oracle_is_order_independent() {
        let oracle = SimAdapter::new(SimPolicy { error_rate: 0.3, seed: 5, ..SimPolicy::new(SimKind::Oracle) }).unwrap();
        let forward: Vec<String> = (0..50).map(|i| ask(&oracle, &format!("i{i}"), Some(Truth::Yes), "q")).collect();
        let mut backward: Vec<String> = (0..50).rev().map(|i| ask(&oracle, &format!("i{i}"), Some(Truth::Yes), "q")).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn invalid_probabilities() {
        assert!(SimAdapter::new(SimPolicy { p_yes: 1.5, ..SimPolicy::new(SimKind::Coin) }).is_err());
        assert!(SimAdapter::new(SimPolicy { error_rate: -0.1, ..SimPolicy::new(SimKind::Oracle) }).is_err());
    }

    #[test]
    fn keyword_answers() {
        let p = |cap: &str, q: &str| keyword_answer(&format!("Audio description: {cap}\nQuestion: {q}\nAnswer yes or no."));
        assert_eq!(p("a cat meows", "Is there a sound of dog barking in the audio?"), "No");
        assert_eq!(p("a dog barks loudly", "Is there a sound of dog barking in the audio?"), "Yes");
        assert_eq!(
            p("a dog barks, then a car horn honks", "Does the sound of dog barking occur before the sound of car horn in the audio?"),
            "Yes"
        );
        assert_eq!(
            p("a car horn honks, then a dog barks", "Does the sound of dog barking occur before the sound of car horn in the audio?"),
            "No"
        );
        assert_eq!(p("", "Is there a sound of thunder in the audio?"), "No");
    }
}
