//! Rule-based sentence segmentation and numeric-content classification.
//!
//! Problem text is split at `.`, `?`, or `!` followed by whitespace and an
//! uppercase letter (or end of text). Decimal points never match because a
//! digit, not whitespace, follows them; a fixed abbreviation list guards the
//! remaining false positives. The rules are deliberately simple: benchmark
//! prose is simple declarative English, and determinism matters more than
//! linguistic coverage here.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Abbreviations that end in a period but never end a sentence.
const DEFAULT_ABBREVIATIONS: &[&str] =
    &["Mr.", "Mrs.", "Dr.", "St.", "etc.", "e.g.", "i.e.", "vs."];

/// Sentences shorter than this (after trimming) merge into a neighbor.
const MIN_SENTENCE_CHARS: usize = 2;

/// One sentence of a problem, with its position and numeric classification.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
    pub has_number: bool,
    pub is_final: bool,
}

/// True iff the text contains an ASCII digit.
///
/// Spelled-out numbers ("three", "half") deliberately do not count: the
/// with-numbers distractor category is defined by numerals.
pub fn contains_number(text: &str) -> bool {
    text.bytes().any(|b| b.is_ascii_digit())
}

/// Sentence splitter with a configurable abbreviation guard.
#[derive(Debug, Clone)]
pub struct Segmenter {
    /// Lowercased abbreviation tokens, each including the trailing period.
    abbreviations: BTreeSet<String>,
}

impl Default for Segmenter {
    fn default() -> Segmenter {
        Segmenter {
            abbreviations: DEFAULT_ABBREVIATIONS
                .iter()
                .map(|a| a.to_lowercase())
                .collect(),
        }
    }
}

impl Segmenter {
    /// Load an abbreviation list from a plain-text file: one token per line,
    /// `#` starts a comment line, blank lines ignored. Replaces the default
    /// list entirely.
    pub fn from_abbreviation_file(path: &Path) -> Result<Segmenter> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let abbreviations: BTreeSet<String> = raw
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_lowercase())
            .collect();
        if abbreviations.is_empty() {
            return Err(Error::data(format!(
                "abbreviation file {} contains no entries",
                path.display()
            )));
        }
        Ok(Segmenter { abbreviations })
    }

    /// Split text into sentences.
    ///
    /// The sentences cover the whitespace-normalized text exactly: joining
    /// them back with single spaces reproduces it. Empty or all-whitespace
    /// input yields no sentences.
    pub fn segment(&self, text: &str) -> Vec<Sentence> {
        let normalized = normalize_whitespace(text);
        if normalized.is_empty() {
            return Vec::new();
        }

        let chars: Vec<char> = normalized.chars().collect();
        let mut pieces: Vec<String> = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let c = chars[i];
            if matches!(c, '.' | '?' | '!') && self.is_boundary(&chars, i) {
                let piece: String = chars[start..=i].iter().collect();
                pieces.push(piece.trim().to_string());
                // Skip the separating whitespace.
                start = i + 1;
                while start < chars.len() && chars[start] == ' ' {
                    start += 1;
                }
                i = start;
                continue;
            }
            i += 1;
        }
        if start < chars.len() {
            let piece: String = chars[start..].iter().collect();
            let piece = piece.trim().to_string();
            if !piece.is_empty() {
                pieces.push(piece);
            }
        }

        let pieces = merge_short_pieces(pieces);
        let last = pieces.len().saturating_sub(1);
        pieces
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence {
                has_number: contains_number(&text),
                is_final: index == last,
                text,
                index,
            })
            .collect()
    }

    /// Decide whether the terminator at `i` ends a sentence: end of text, or
    /// whitespace followed by an uppercase letter, and (for periods) the word
    /// ending here is not a known abbreviation.
    fn is_boundary(&self, chars: &[char], i: usize) -> bool {
        let at_end = chars[i + 1..].iter().all(|c| *c == ' ');
        if !at_end {
            if chars[i + 1] != ' ' {
                return false;
            }
            let next = chars[i + 1..].iter().find(|c| **c != ' ');
            if !next.is_some_and(|c| c.is_uppercase()) {
                return false;
            }
        }
        if chars[i] == '.' {
            let word_start = chars[..i]
                .iter()
                .rposition(|c| *c == ' ')
                .map_or(0, |p| p + 1);
            let word: String = chars[word_start..=i].iter().collect();
            if self.abbreviations.contains(&word.to_lowercase()) {
                return false;
            }
        }
        true
    }
}

/// Collapse all whitespace runs to single spaces and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Merge pieces shorter than the minimum into the preceding piece (or the
/// following one when there is no preceding piece).
fn merge_short_pieces(pieces: Vec<String>) -> Vec<String> {
    let mut merged: Vec<String> = Vec::with_capacity(pieces.len());
    let mut pending_prefix: Option<String> = None;
    for piece in pieces {
        let piece = match pending_prefix.take() {
            Some(prefix) => format!("{prefix} {piece}"),
            None => piece,
        };
        if piece.trim().chars().count() < MIN_SENTENCE_CHARS {
            match merged.last_mut() {
                Some(prev) => {
                    prev.push(' ');
                    prev.push_str(&piece);
                }
                None => pending_prefix = Some(piece),
            }
        } else {
            merged.push(piece);
        }
    }
    if let Some(prefix) = pending_prefix {
        // Everything was short; keep it as one sentence rather than drop it.
        merged.push(prefix);
    }
    merged
}
