//! Detects responses where a model declined to transcribe.

use std::sync::LazyLock;

/// Messages observed from models that refuse low-resolution inputs.
pub const OBSERVED_REFUSALS: [&str; 3] = [
    "Unfortunately, I am unable to extract text",
    "I can't directly extract text",
    "The image contains text in what appears to be",
];

const INABILITY_PHRASES: [&str; 9] = [
    "i can't",
    "i cannot",
    "i can not",
    "i am unable",
    "i'm unable",
    "i am not able",
    "i'm not able",
    "i'm sorry, but i",
    "unable to extract",
];

#[derive(Debug, Clone)]
pub struct RefusalClassifier {
    patterns: Vec<String>,
    inability: Vec<String>,
}

impl Default for RefusalClassifier {
    fn default() -> Self {
        Self::new(OBSERVED_REFUSALS.iter().map(|s| s.to_string()))
    }
}

fn canonical(s: &str) -> String {
    s.replace(['\u{2019}', '\u{2018}'], "'")
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_arabic_script(c: char) -> bool {
    matches!(
        c,
        '\u{0600}'..='\u{06FF}'
            | '\u{0750}'..='\u{077F}'
            | '\u{08A0}'..='\u{08FF}'
            | '\u{FB50}'..='\u{FDFF}'
            | '\u{FE70}'..='\u{FEFF}'
    )
}

impl RefusalClassifier {
    /// Case-insensitive substring patterns; the inability heuristic is always on.
    pub fn new(patterns: impl IntoIterator<Item = String>) -> Self {
        Self {
            patterns: patterns.into_iter().map(|p| canonical(&p)).collect(),
            inability: INABILITY_PHRASES.iter().map(|p| p.to_string()).collect(),
        }
    }

    pub fn with_extra_patterns(mut self, extra: impl IntoIterator<Item = String>) -> Self {
        self.patterns.extend(extra.into_iter().map(|p| canonical(&p)));
        self
    }

    pub fn is_refusal(&self, text: &str) -> bool {
        let t = canonical(text);
        if t.is_empty() {
            return false;
        }
        if self.patterns.iter().any(|p| t.contains(p.as_str())) {
            return true;
        }
        !text.chars().any(is_arabic_script) && self.inability.iter().any(|p| t.contains(p.as_str()))
    }
}

static DEFAULT: LazyLock<RefusalClassifier> = LazyLock::new(RefusalClassifier::default);

pub fn classify_refusal(text: &str) -> bool {
    DEFAULT.is_refusal(text)
}
