//! Benchmark corpus loading, gold-answer parsing, and validation.
//!
//! A corpus is a line-delimited file of problem records. Three input shapes
//! are supported:
//!
//! * `gsm8k` — objects with `question` and `answer`; the gold answer follows
//!   the final `####` marker inside `answer`.
//! * `aime` — objects with `id`, `problem`, and an integer `answer` in 0..=999.
//! * `generic` — objects with `id`, `question`, and `gold`.
//!
//! The canonical output shape is generic-compatible: `id`, `question`, `gold`,
//! `sentence_count`, one object per line.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::number::CanonicalNumber;
use crate::segmenter::{Segmenter, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    Gsm8k,
    Aime,
    Generic,
}

impl std::fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SourceFormat::Gsm8k => "gsm8k",
            SourceFormat::Aime => "aime",
            SourceFormat::Generic => "generic",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<SourceFormat> {
        match s {
            "gsm8k" => Ok(SourceFormat::Gsm8k),
            "aime" => Ok(SourceFormat::Aime),
            "generic" => Ok(SourceFormat::Generic),
            other => Err(Error::config(format!(
                "unknown corpus format {other:?} (expected gsm8k, aime, or generic)"
            ))),
        }
    }
}

/// One benchmark item with its segmented text and parsed gold answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub id: String,
    pub question: String,
    pub sentences: Vec<Sentence>,
    pub gold: CanonicalNumber,
    pub source_format: SourceFormat,
}

impl Problem {
    /// Sentence count, the quantity the Equal/Excessive intensities scale by.
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    /// The final sentence, which states the question's goal.
    pub fn question_sentence(&self) -> Result<&Sentence> {
        self.sentences
            .last()
            .ok_or_else(|| Error::data(format!("problem {} has no sentences", self.id)))
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    pub format: SourceFormat,
    pub problems: Vec<Problem>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }
}

/// Load a corpus file, segmenting each question and parsing each gold answer.
///
/// `name` defaults to the file stem; it prefixes generated ids for formats
/// that carry none of their own.
pub fn load_corpus(
    path: &Path,
    format: SourceFormat,
    name: Option<&str>,
    segmenter: &Segmenter,
) -> Result<Corpus> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = match name {
        Some(n) => n.to_string(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".to_string()),
    };

    let mut problems = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (line_no, line) in raw.lines().enumerate() {
        let line_no = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::data(format!("line {line_no}: invalid record: {e}")))?;
        let problem = parse_record(&value, format, &name, line_no, segmenter)?;
        if !seen_ids.insert(problem.id.clone()) {
            return Err(Error::data(format!(
                "line {line_no}: duplicate problem id {:?}",
                problem.id
            )));
        }
        problems.push(problem);
    }

    if problems.is_empty() {
        return Err(Error::data(format!("empty corpus: {}", path.display())));
    }
    Ok(Corpus {
        name,
        format,
        problems,
    })
}

fn parse_record(
    value: &serde_json::Value,
    format: SourceFormat,
    corpus_name: &str,
    line_no: usize,
    segmenter: &Segmenter,
) -> Result<Problem> {
    let str_field = |field: &str| -> Result<&str> {
        value.get(field).and_then(|v| v.as_str()).ok_or_else(|| {
            Error::data(format!(
                "line {line_no}: missing or non-string field `{field}`"
            ))
        })
    };

    let (id, question, gold) = match format {
        SourceFormat::Gsm8k => {
            let question = str_field("question")?;
            let answer = str_field("answer")?;
            let gold = parse_gold_answer(answer, format)
                .map_err(|e| Error::data(format!("line {line_no}: field `answer`: {e}")))?;
            (format!("{corpus_name}-{line_no:04}"), question, gold)
        }
        SourceFormat::Aime => {
            let id = field_as_string(value, "id")
                .ok_or_else(|| Error::data(format!("line {line_no}: missing field `id`")))?;
            let question = str_field("problem")?;
            let answer = field_as_string(value, "answer")
                .ok_or_else(|| Error::data(format!("line {line_no}: missing field `answer`")))?;
            let gold = parse_gold_answer(&answer, format)
                .map_err(|e| Error::data(format!("line {line_no}: field `answer`: {e}")))?;
            (id, question, gold)
        }
        SourceFormat::Generic => {
            let id = field_as_string(value, "id")
                .ok_or_else(|| Error::data(format!("line {line_no}: missing field `id`")))?;
            let question = str_field("question")?;
            let gold = field_as_string(value, "gold")
                .ok_or_else(|| Error::data(format!("line {line_no}: missing field `gold`")))?;
            let gold = parse_gold_answer(&gold, format)
                .map_err(|e| Error::data(format!("line {line_no}: field `gold`: {e}")))?;
            (id, question, gold)
        }
    };

    if question.trim().is_empty() {
        return Err(Error::data(format!(
            "line {line_no}: field `question` is empty"
        )));
    }
    let sentences = segmenter.segment(question);
    if sentences.is_empty() {
        return Err(Error::data(format!(
            "line {line_no}: question produced no sentences"
        )));
    }
    Ok(Problem {
        id,
        question: question.to_string(),
        sentences,
        gold,
        source_format: format,
    })
}

/// Read a field that may be a JSON string or number as text.
fn field_as_string(value: &serde_json::Value, field: &str) -> Option<String> {
    match value.get(field)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parse a raw gold-answer value according to the corpus format.
///
/// For gsm8k the answer text must contain a `####` marker; the number after
/// the final marker is the gold. For aime the gold must be an integer in
/// 0..=999. `$`, `,`, `%`, and surrounding whitespace are stripped.
pub fn parse_gold_answer(raw: &str, format: SourceFormat) -> Result<CanonicalNumber> {
    if raw.trim().is_empty() {
        return Err(Error::data("empty answer"));
    }
    match format {
        SourceFormat::Gsm8k => {
            let tail = raw
                .rsplit_once("####")
                .map(|(_, tail)| tail)
                .ok_or_else(|| Error::data("no #### marker in answer"))?;
            let tail = tail.lines().next().unwrap_or(tail);
            CanonicalNumber::normalize(tail)
        }
        SourceFormat::Aime => {
            let n = CanonicalNumber::normalize(raw)?;
            if n.denominator() != 1 {
                return Err(Error::data(format!(
                    "aime answer must be an integer, got {n}"
                )));
            }
            if !(0..=999).contains(&n.numerator()) {
                return Err(Error::data(format!(
                    "aime answer must be in 0..=999, got {n}"
                )));
            }
            Ok(n)
        }
        SourceFormat::Generic => CanonicalNumber::normalize(raw),
    }
}

/// Canonical output record: generic-compatible with a sentence count added.
#[derive(Debug, Serialize, Deserialize)]
struct CanonicalRecord {
    id: String,
    question: String,
    gold: CanonicalNumber,
    sentence_count: usize,
}

/// Write the canonical corpus file: one generic-format object per line with
/// `id`, `gold`, and `sentence_count` made explicit.
pub fn write_canonical(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in &corpus.problems {
        let record = CanonicalRecord {
            id: p.id.clone(),
            question: p.question.clone(),
            gold: p.gold,
            sentence_count: p.sentence_count(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::json(format!("canonical record {}", p.id), e))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Per-problem statistics from [`validate_corpus`].
#[derive(Debug, Clone, Serialize)]
pub struct ProblemStats {
    pub id: String,
    pub sentence_count: usize,
    pub numeric_sentences: usize,
    pub final_is_question: bool,
}

/// Report-only corpus health check.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub per_problem: Vec<ProblemStats>,
    /// Problems with fewer than 2 sentences: the instruction-missing variant
    /// cannot be built for these.
    pub short_problems: Vec<String>,
    /// Problems whose question text is empty or unsegmentable.
    pub invalid_problems: Vec<String>,
    /// Problems whose final sentence does not end with a question mark.
    pub no_question_sentence: Vec<String>,
    pub total_sentences: usize,
    pub total_numeric_sentences: usize,
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport {
        per_problem: Vec::with_capacity(corpus.len()),
        short_problems: Vec::new(),
        invalid_problems: Vec::new(),
        no_question_sentence: Vec::new(),
        total_sentences: 0,
        total_numeric_sentences: 0,
    };
    for p in &corpus.problems {
        let numeric = p.sentences.iter().filter(|s| s.has_number).count();
        let final_is_question = p.sentences.last().is_some_and(|s| s.text.ends_with('?'));
        report.per_problem.push(ProblemStats {
            id: p.id.clone(),
            sentence_count: p.sentence_count(),
            numeric_sentences: numeric,
            final_is_question,
        });
        if p.question.trim().is_empty() || p.sentences.is_empty() {
            report.invalid_problems.push(p.id.clone());
        }
        if p.sentence_count() < 2 {
            report.short_problems.push(p.id.clone());
        }
        if !final_is_question {
            report.no_question_sentence.push(p.id.clone());
        }
        report.total_sentences += p.sentence_count();
        report.total_numeric_sentences += numeric;
    }
    report
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        writeln!(s, "problems: {}", self.per_problem.len()).ok();
        writeln!(
            s,
            "sentences: {} total, {} with digits",
            self.total_sentences, self.total_numeric_sentences
        )
        .ok();
        for stats in &self.per_problem {
            writeln!(
                s,
                "  {}: {} sentences, {} with digits{}",
                stats.id,
                stats.sentence_count,
                stats.numeric_sentences,
                if stats.final_is_question {
                    ""
                } else {
                    " [final sentence is not a question]"
                }
            )
            .ok();
        }
        if !self.short_problems.is_empty() {
            writeln!(
                s,
                "problems too short for instruction-missing ({}): {}",
                self.short_problems.len(),
                self.short_problems.join(", ")
            )
            .ok();
        }
        if !self.invalid_problems.is_empty() {
            writeln!(
                s,
                "invalid problems ({}): {}",
                self.invalid_problems.len(),
                self.invalid_problems.join(", ")
            )
            .ok();
        }
        f.write_str(s.trim_end())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(dir: &tempfile::TempDir, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    #[test]
    fn gsm8k_gold_follows_final_marker() {
        let gold = parse_gold_answer(
            "She sells 16 - 3 - 4 = 9 eggs. She makes 9 * 2 = $18.\n#### 18",
            SourceFormat::Gsm8k,
        )
        .unwrap();
        assert_eq!(gold, CanonicalNumber::from_integer(18));
    }

    #[test]
    fn gsm8k_zero_and_separator_cases() {
        assert_eq!(
            parse_gold_answer("#### 0", SourceFormat::Gsm8k).unwrap(),
            CanonicalNumber::from_integer(0)
        );
        // Comma stripping checked against longhand: 1,234 is 1*1000+234.
        let expected = CanonicalNumber::from_integer(1000 + 234);
        assert_eq!(
            parse_gold_answer("#### 1,234", SourceFormat::Gsm8k).unwrap(),
            expected
        );
    }

    #[test]
    fn gsm8k_requires_marker() {
        assert!(parse_gold_answer("the answer is 18", SourceFormat::Gsm8k).is_err());
    }

    #[test]
    fn gsm8k_marker_takes_first_line_of_tail() {
        let gold = parse_gold_answer("#### 42\ntrailing note", SourceFormat::Gsm8k).unwrap();
        assert_eq!(gold, CanonicalNumber::from_integer(42));
    }

    #[test]
    fn aime_golds_are_bounded_integers() {
        assert_eq!(
            parse_gold_answer("204", SourceFormat::Aime).unwrap(),
            CanonicalNumber::from_integer(204)
        );
        assert!(parse_gold_answer("1000", SourceFormat::Aime).is_err());
        assert!(parse_gold_answer("-1", SourceFormat::Aime).is_err());
        assert!(parse_gold_answer("12.5", SourceFormat::Aime).is_err());
    }

    #[test]
    fn load_gsm8k_fixture_preserves_order_and_assigns_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "tiny.jsonl",
            &[
                r#"{"question": "Ann has 3 cats. Each cat eats 2 cans a day. How many cans per day?", "answer": "3 * 2 = 6. #### 6"}"#,
                r#"{"question": "Bob ran 5 miles. Then he ran 4 more. How far did he run?", "answer": "5 + 4 = 9. #### 9"}"#,
                r#"{"question": "Cara read 10 pages. She has 20 left. How many pages total?", "answer": "10 + 20 = 30. #### 30"}"#,
            ],
        );
        let corpus = load_corpus(&path, SourceFormat::Gsm8k, None, &Segmenter::default()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.name, "tiny");
        assert_eq!(corpus.problems[0].id, "tiny-0001");
        assert_eq!(corpus.problems[2].id, "tiny-0003");
        assert_eq!(corpus.problems[1].gold, CanonicalNumber::from_integer(9));
        assert_eq!(corpus.problems[0].sentence_count(), 3);
    }

    #[test]
    fn empty_file_is_an_empty_corpus_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(&dir, "empty.jsonl", &[]);
        let err = load_corpus(&path, SourceFormat::Gsm8k, None, &Segmenter::default()).unwrap_err();
        assert!(err.to_string().contains("empty corpus"), "got: {err}");
    }

    #[test]
    fn malformed_record_names_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bad.jsonl",
            &[
                "{\"question\": \"Fine question with 1 number. What is it?\", \"answer\": \"#### 1\"}",
                r#"{"question": "Missing the answer field. What now?"}"#,
            ],
        );
        let err = load_corpus(&path, SourceFormat::Gsm8k, None, &Segmenter::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "got: {msg}");
        assert!(msg.contains("`answer`"), "got: {msg}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "dup.jsonl",
            &[
                r#"{"id": "p1", "question": "One thing costs 4 coins. How much for two?", "gold": "8"}"#,
                r#"{"id": "p1", "question": "A pen costs 3 coins. How much for three?", "gold": "9"}"#,
            ],
        );
        let err =
            load_corpus(&path, SourceFormat::Generic, None, &Segmenter::default()).unwrap_err();
        assert!(
            err.to_string().contains("duplicate problem id"),
            "got: {err}"
        );
    }

    #[test]
    fn aime_records_parse_with_their_own_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "aime.jsonl",
            &[
                r#"{"id": "aime-i-1", "problem": "Compute the sum of 17 and 25. Express the result as an integer.", "answer": 42}"#,
            ],
        );
        let corpus = load_corpus(&path, SourceFormat::Aime, None, &Segmenter::default()).unwrap();
        assert_eq!(corpus.problems[0].id, "aime-i-1");
        assert_eq!(corpus.problems[0].gold, CanonicalNumber::from_integer(42));
    }

    #[test]
    fn canonical_round_trip_preserves_problems() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "src.jsonl",
            &[
                r#"{"question": "Dee owns 7 hens. Each lays 2 eggs daily. How many eggs a day?", "answer": "7*2=14. #### 14"}"#,
                r#"{"question": "Ed has 12 marbles. He gives away 5. How many remain?", "answer": "12-5=7. #### 7"}"#,
            ],
        );
        let seg = Segmenter::default();
        let corpus = load_corpus(&path, SourceFormat::Gsm8k, None, &seg).unwrap();
        let canon = dir.path().join("canonical.jsonl");
        write_canonical(&corpus, &canon).unwrap();
        let reloaded = load_corpus(&canon, SourceFormat::Generic, Some("src"), &seg).unwrap();
        assert_eq!(corpus.len(), reloaded.len());
        for (a, b) in corpus.problems.iter().zip(&reloaded.problems) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.question, b.question);
            assert_eq!(a.gold, b.gold);
            assert_eq!(a.sentences, b.sentences);
        }
    }

    #[test]
    fn validation_counts_sentences_and_flags_short_problems() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "v.jsonl",
            &[
                r#"{"id": "long", "question": "Janet's ducks lay 16 eggs per day. She eats three for breakfast every morning and bakes muffins for her friends every day with four. She sells the remainder at the farmers' market daily for $2 per fresh duck egg. How much in dollars does she make every day at the farmers' market?", "gold": "18"}"#,
                r#"{"id": "short", "question": "What is 2 plus 2?", "gold": "4"}"#,
            ],
        );
        let corpus =
            load_corpus(&path, SourceFormat::Generic, None, &Segmenter::default()).unwrap();
        let report = validate_corpus(&corpus);
        assert_eq!(report.per_problem[0].sentence_count, 4);
        assert_eq!(report.short_problems, vec!["short".to_string()]);
        assert!(report.no_question_sentence.is_empty());
        assert!(report.invalid_problems.is_empty());
    }
}
