//! Text normalization and word/character error rates.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UnicodeForm {
    Nfc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationPolicy {
    pub unicode_form: UnicodeForm,
    pub strip_zero_width: bool,
    pub collapse_whitespace: bool,
    pub strip_bidi_controls: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self {
            unicode_form: UnicodeForm::Nfc,
            strip_zero_width: true,
            collapse_whitespace: true,
            strip_bidi_controls: true,
        }
    }
}

fn is_zero_width(c: char) -> bool {
    matches!(c, '\u{200B}' | '\u{200C}' | '\u{200D}' | '\u{2060}' | '\u{FEFF}')
}

fn is_bidi_control(c: char) -> bool {
    matches!(
        c,
        '\u{061C}' | '\u{200E}' | '\u{200F}' | '\u{202A}'..='\u{202E}' | '\u{2066}'..='\u{2069}'
    )
}

/// Canonicalizes a transcript for comparison.
///
/// Format characters are stripped before composition so that removing them
/// cannot expose a new composable pair afterwards; this keeps the function
/// idempotent.
pub fn normalize_text(s: &str, policy: &NormalizationPolicy) -> String {
    let stripped = s.chars().filter(|&c| {
        !(policy.strip_zero_width && is_zero_width(c)
            || policy.strip_bidi_controls && is_bidi_control(c))
    });
    let composed: String = match policy.unicode_form {
        UnicodeForm::Nfc => stripped.nfc().collect(),
    };
    if policy.collapse_whitespace {
        composed.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        composed
    }
}

/// Operation counts of one minimum-cost alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
    }
}

/// Unit-cost Levenshtein alignment of `reference` against `hypothesis`.
///
/// Keeps the full cost table so the alignment can be walked back into
/// substitution/insertion/deletion counts. On ties the backtrace prefers a
/// diagonal step, then deletion, then insertion.
pub fn edit_ops<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let cols = m + 1;
    let mut cost = vec![0u32; (n + 1) * cols];
    for j in 0..=m {
        cost[j] = j as u32;
    }
    for i in 1..=n {
        cost[i * cols] = i as u32;
        for j in 1..=m {
            let diag = cost[(i - 1) * cols + j - 1] + u32::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[(i - 1) * cols + j] + 1;
            let ins = cost[i * cols + j - 1] + 1;
            cost[i * cols + j] = diag.min(del).min(ins);
        }
    }

    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * cols + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if cost[(i - 1) * cols + j - 1] + u32::from(!same) == here {
                if !same {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[(i - 1) * cols + j] + 1 == here {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcrScore {
    pub wer: f64,
    pub cer: f64,
    pub word: EditCounts,
    pub char: EditCounts,
    pub reference_token_count: usize,
    pub reference_char_count: usize,
}

impl OcrScore {
    pub fn substitutions(&self) -> usize {
        self.word.substitutions
    }

    pub fn insertions(&self) -> usize {
        self.word.insertions
    }

    pub fn deletions(&self) -> usize {
        self.word.deletions
    }
}

/// WER over space-separated tokens and CER over codepoints, both after
/// normalization. Punctuation stays attached to its token.
pub fn word_error_rate(
    reference: &str,
    hypothesis: &str,
    policy: &NormalizationPolicy,
) -> Result<OcrScore> {
    let reference = normalize_text(reference, policy);
    let hypothesis = normalize_text(hypothesis, policy);
    let ref_tokens: Vec<&str> = reference.split_whitespace().collect();
    if ref_tokens.is_empty() {
        return Err(Error::EmptyReference);
    }
    let hyp_tokens: Vec<&str> = hypothesis.split_whitespace().collect();
    let ref_chars: Vec<char> = reference.chars().collect();
    let hyp_chars: Vec<char> = hypothesis.chars().collect();

    let word = edit_ops(&ref_tokens, &hyp_tokens);
    let char = edit_ops(&ref_chars, &hyp_chars);
    Ok(OcrScore {
        wer: word.distance() as f64 / ref_tokens.len() as f64,
        cer: char.distance() as f64 / ref_chars.len() as f64,
        word,
        char,
        reference_token_count: ref_tokens.len(),
        reference_char_count: ref_chars.len(),
    })
}
