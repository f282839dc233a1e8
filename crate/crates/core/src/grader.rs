//! Answer extraction and grading.
//!
//! A model response is reduced to one number by trying three rules in order:
//! the last `\boxed{…}` span, the text after the last `####` marker, and
//! finally the last standalone number anywhere in the response. A rule only
//! counts as firing when its span normalizes to a number; otherwise the next
//! rule gets a chance. Grading compares exact rationals, with an opt-in
//! absolute tolerance for decimal corpora.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::number::CanonicalNumber;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionRule {
    Boxed,
    HashMarker,
    LastNumber,
    None,
}

/// The number pulled out of a response, with the rule that found it and the
/// raw text span it came from. `value` is present exactly when a rule fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub value: Option<CanonicalNumber>,
    pub extraction_rule: ExtractionRule,
    pub raw_span: String,
}

impl ExtractedAnswer {
    fn none() -> ExtractedAnswer {
        ExtractedAnswer {
            value: None,
            extraction_rule: ExtractionRule::None,
            raw_span: String::new(),
        }
    }
}

static NUMBER_TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    // A standalone number: optional sign, digits with optional thousands
    // separators, optional decimal part, optional percent.
    Regex::new(r"[-+]?\d+(?:,\d{3})*(?:\.\d+)?%?").expect("static regex")
});

/// Extract the final numeric answer from a response.
///
/// Rules are tried in order (boxed, then `####`, then last number); a rule
/// fires only if its span normalizes, so an unparseable `\boxed{…}` falls
/// through rather than producing an empty answer. When nothing parses the
/// result carries no value and the `none` rule.
pub fn extract_answer(response_text: &str) -> ExtractedAnswer {
    if let Some(span) = last_boxed_span(response_text) {
        if let Ok(value) = normalize_number(&span) {
            return ExtractedAnswer {
                value: Some(value),
                extraction_rule: ExtractionRule::Boxed,
                raw_span: span,
            };
        }
    }
    if let Some(span) = hash_marker_span(response_text) {
        if let Ok(value) = normalize_number(&span) {
            return ExtractedAnswer {
                value: Some(value),
                extraction_rule: ExtractionRule::HashMarker,
                raw_span: span,
            };
        }
    }
    if let Some(span) = last_number_span(response_text) {
        if let Ok(value) = normalize_number(&span) {
            return ExtractedAnswer {
                value: Some(value),
                extraction_rule: ExtractionRule::LastNumber,
                raw_span: span,
            };
        }
    }
    ExtractedAnswer::none()
}

/// Content of the last `\boxed{…}` in the text, handling nested braces.
fn last_boxed_span(text: &str) -> Option<String> {
    const MARKER: &str = "\\boxed{";
    let start = text.rfind(MARKER)?;
    let inner_start = start + MARKER.len();
    let mut depth = 1usize;
    for (i, c) in text[inner_start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[inner_start..inner_start + i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

/// Text after the last `####` marker, up to the end of its line.
fn hash_marker_span(text: &str) -> Option<String> {
    let (_, tail) = text.rsplit_once("####")?;
    let line = tail.lines().next().unwrap_or(tail);
    Some(line.trim().to_string())
}

/// The last standalone number token in the text.
fn last_number_span(text: &str) -> Option<String> {
    NUMBER_TOKEN
        .find_iter(text)
        .last()
        .map(|m| m.as_str().to_string())
}

/// Normalize a raw extracted span into a canonical number.
///
/// Strips `$`, `,`, non-breaking spaces, and text-mode markup (backslash
/// escapes, `\text{…}` wrappers, markdown emphasis); a trailing `%` divides
/// the value by 100. Spans containing more than one number are rejected.
pub fn normalize_number(raw: &str) -> Result<CanonicalNumber> {
    if raw.trim().is_empty() {
        return Err(Error::data("empty answer span"));
    }
    let mut s = raw.trim().to_string();
    // LaTeX text wrappers: \text{...}, \mbox{...} — keep the inner content.
    for wrapper in ["\\text", "\\mbox"] {
        while let Some(start) = s.find(wrapper) {
            let after = start + wrapper.len();
            if s[after..].starts_with('{') {
                if let Some(close) = s[after..].find('}') {
                    let inner = s[after + 1..after + close].to_string();
                    s.replace_range(start..after + close + 1, &inner);
                    continue;
                }
            }
            break;
        }
    }
    // Remaining markup characters carry no numeric meaning.
    let s: String = s
        .chars()
        .filter(|c| !matches!(c, '\\' | '*' | '{' | '}' | '\u{a0}'))
        .collect();
    let s = s.trim();

    let percent = s.contains('%');
    let cleaned: String = s.chars().filter(|c| *c != '%').collect();
    let cleaned = cleaned.trim();
    // Reject spans with several numbers ("3 or 4"): after removing currency
    // and separator characters the remainder must be one number.
    let value = CanonicalNumber::normalize(cleaned)?;
    if percent {
        let num = value.numerator();
        let den = value
            .denominator()
            .checked_mul(100)
            .ok_or_else(|| Error::data("percent value out of range"))?;
        return CanonicalNumber::new(num, den);
    }
    Ok(value)
}

/// Grading verdict: the extracted value must be present and equal the gold
/// exactly; `tolerance` (absolute, default 0) opts into approximate equality
/// for decimal corpora.
pub fn grade(extracted: &ExtractedAnswer, gold: &CanonicalNumber, tolerance: f64) -> bool {
    match &extracted.value {
        Some(value) => value.approx_eq(gold, tolerance),
        None => false,
    }
}

/// One grader regression fixture: a response, the gold answer, and the
/// expected verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraderFixture {
    pub response_text: String,
    pub gold: CanonicalNumber,
    pub expected_verdict: bool,
}

/// Load a line-delimited grader fixture file.
pub fn load_grader_fixtures(path: &Path) -> Result<Vec<GraderFixture>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut fixtures = Vec::new();
    for (line_no, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: GraderFixture = serde_json::from_str(line).map_err(|e| {
            Error::data(format!(
                "{}: line {}: invalid grader fixture: {e}",
                path.display(),
                line_no + 1
            ))
        })?;
        fixtures.push(f);
    }
    if fixtures.is_empty() {
        return Err(Error::data(format!(
            "empty grader fixture file: {}",
            path.display()
        )));
    }
    Ok(fixtures)
}
