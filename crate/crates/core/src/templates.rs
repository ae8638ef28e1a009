//! Question templates and the small amount of English morphology they need.

/// Prompt used for the first MATCH round on existence and attribute items,
/// and for cascade captioning.
pub const CAPTION_PROMPT: &str = "Describe the audio.";

/// First MATCH round prompt for temporal-order items.
pub const TEMPORAL_CAPTION_PROMPT: &str = "Describe the audio by focusing on the sequence and timing of sound events.";

/// A rendered question plus the byte spans of its event phrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub text: String,
    pub spans: Vec<(usize, usize)>,
}

struct Builder {
    text: String,
    spans: Vec<(usize, usize)>,
}

impl Builder {
    fn new() -> Self {
        Self { text: String::new(), spans: Vec::new() }
    }

    fn lit(mut self, s: &str) -> Self {
        self.text.push_str(s);
        self
    }

    fn phrase(mut self, s: &str) -> Self {
        let start = self.text.len();
        self.text.push_str(s);
        self.spans.push((start, self.text.len()));
        self
    }

    fn build(self) -> Question {
        Question { text: self.text, spans: self.spans }
    }
}

/// `Is there a sound of {label} in the audio?`
pub fn existence_question(label: &str) -> Question {
    Builder::new().lit("Is there a sound of ").phrase(label).lit(" in the audio?").build()
}

/// `Does the sound of {first} occur before the sound of {second} in the audio?`
pub fn temporal_question(first: &str, second: &str) -> Question {
    Builder::new()
        .lit("Does the sound of ")
        .phrase(first)
        .lit(" occur before the sound of ")
        .phrase(second)
        .lit(" in the audio?")
        .build()
}

/// `Is there a sound of {article} {entity} {action-ing} in the audio?`
///
/// The span covers the entity and gerund, not the article.
pub fn attribute_question(entity: &str, action: &str) -> Question {
    let article = article_for(entity);
    let phrase = format!("{entity} {}", gerund(action));
    let mut b = Builder::new().lit("Is there a sound of ");
    if let Some(a) = article {
        b = b.lit(a).lit(" ");
    }
    b.phrase(&phrase).lit(" in the audio?").build()
}

/// Nouns used without an indefinite article.
const MASS_NOUNS: &[&str] = &[
    "people", "children", "men", "women", "water", "rain", "wind", "traffic", "music", "fire",
    "thunder", "applause", "laughter", "speech", "machinery", "birds", "dogs", "cats", "crowd noise",
];

/// Nouns whose spelling misleads the vowel rule.
const AN_EXCEPTIONS: &[&str] = &["hour", "honest", "heir"];
const A_EXCEPTIONS: &[&str] = &["one", "unicorn", "user", "unit", "university", "european", "uniform"];

/// Indefinite article for a countable noun phrase; `None` for mass or plural
/// phrases and phrases that already carry a determiner.
pub fn article_for(phrase: &str) -> Option<&'static str> {
    let lower = phrase.trim().to_lowercase();
    let first = lower.split_whitespace().next()?;
    if matches!(first, "a" | "an" | "the" | "some" | "two" | "several" | "many") || MASS_NOUNS.contains(&lower.as_str()) {
        return None;
    }
    if AN_EXCEPTIONS.contains(&first) {
        return Some("an");
    }
    if A_EXCEPTIONS.contains(&first) {
        return Some("a");
    }
    match first.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => Some("an"),
        _ => Some("a"),
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Present participle of a verb: `cry` → `crying`, `bark` → `barking`,
/// `sneeze` → `sneezing`, `die` → `dying`, `sit` → `sitting`.
/// Multi-word actions inflect the first word only.
pub fn gerund(action: &str) -> String {
    let action = action.trim();
    let (verb, rest) = match action.split_once(' ') {
        Some((v, r)) => (v, Some(r)),
        None => (action, None),
    };
    let lower = verb.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let n = chars.len();
    let inflected = if lower.ends_with("ing") && n > 4 {
        verb.to_string()
    } else if lower.ends_with("ie") {
        format!("{}ying", &verb[..verb.len() - 2])
    } else if lower.ends_with('e') && !lower.ends_with("ee") && !lower.ends_with("ye") && !lower.ends_with("oe") && n > 2 {
        format!("{}ing", &verb[..verb.len() - 1])
    } else if n == 3 && !is_vowel(chars[0]) && is_vowel(chars[1]) && !is_vowel(chars[2]) && !matches!(chars[2], 'w' | 'x' | 'y') {
        format!("{verb}{}ing", chars[2])
    } else {
        format!("{verb}ing")
    };
    match rest {
        Some(r) => format!("{inflected} {r}"),
        None => inflected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_texts() {
        assert_eq!(existence_question("dog barking").text, "Is there a sound of dog barking in the audio?");
        assert_eq!(
            temporal_question("dog barking", "car horn").text,
            "Does the sound of dog barking occur before the sound of car horn in the audio?"
        );
        assert_eq!(attribute_question("infant", "cry").text, "Is there a sound of an infant crying in the audio?");
        assert_eq!(attribute_question("woman", "laugh").text, "Is there a sound of a woman laughing in the audio?");
        assert_eq!(attribute_question("people", "cheer").text, "Is there a sound of people cheering in the audio?");
    }

    #[test]
    fn spans_cover_phrases() {
        let q = temporal_question("dog", "dog barking");
        let phrases: Vec<&str> = q.spans.iter().map(|&(s, e)| &q.text[s..e]).collect();
        assert_eq!(phrases, ["dog", "dog barking"]);
        let q = attribute_question("infant", "cry");
        assert_eq!(&q.text[q.spans[0].0..q.spans[0].1], "infant crying");
    }

    #[test]
    fn gerunds() {
        for (verb, expected) in [
            ("cry", "crying"),
            ("laugh", "laughing"),
            ("bark", "barking"),
            ("sneeze", "sneezing"),
            ("die", "dying"),
            ("sit", "sitting"),
            ("see", "seeing"),
            ("sing", "singing"),
            ("singing", "singing"),
            ("mow", "mowing"),
            ("clear throat", "clearing throat"),
        ] {
            assert_eq!(gerund(verb), expected, "{verb}");
        }
    }

    #[test]
    fn articles() {
        assert_eq!(article_for("infant"), Some("an"));
        assert_eq!(article_for("woman"), Some("a"));
        assert_eq!(article_for("hour hand"), Some("an"));
        assert_eq!(article_for("unicorn"), Some("a"));
        assert_eq!(article_for("rain"), None);
        assert_eq!(article_for("the crowd"), None);
    }
}
