//! Text cleaning shared by training and inference: Unicode lowercase,
//! whitespace runs collapsed to one ASCII space, outer whitespace trimmed.
//! No punctuation stripping and no diacritic folding.

use std::fmt;

use crate::corpus::Dataset;

/// Normalized text. Only constructible through [`normalize_text`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CleanText(String);

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for CleanText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CleanText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Locale-independent lowercase of one char, keeping a one-to-one mapping.
///
/// Full lowercasing can expand a character (`İ` becomes `i` plus a combining
/// dot), which would break the length bound; those characters keep their
/// simple single-char mapping when one exists.
fn simple_lower(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        // U+0130 is the only char whose full lowercase is multi-char; its
        // simple mapping is plain `i`.
        _ if c == '\u{0130}' => 'i',
        _ => c,
    }
}

pub fn normalize_text(raw: &str) -> CleanText {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(simple_lower(c));
    }
    CleanText(out)
}

/// Rewrites every text through [`normalize_text`].
pub fn preprocess_dataset(dataset: &Dataset) -> Dataset {
    dataset.map_texts(|t| normalize_text(t).into_string())
}
