//! Aggregation of per-item grading into accuracy tables, degradation deltas,
//! and intensity curves, with CSV, markdown, and plot-data emission.
//!
//! Counts are kept exact; percentages are rendered only at the edges, at two
//! decimals with half-even rounding. Deltas are differences of the rounded
//! values, so the printed delta always equals the difference of the printed
//! accuracies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grader::ExtractedAnswer;
use crate::perturb::{IntensityLevel, PerturbationKind};

/// One graded evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub base_id: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
    pub model_name: String,
    pub extracted: ExtractedAnswer,
    pub correct: bool,
    #[serde(with = "duration_millis")]
    pub latency_ms: Duration,
    pub attempt_count: u32,
}

impl EvalRecord {
    /// Uniqueness key within a run.
    pub fn key(&self) -> (String, PerturbationKind, Option<IntensityLevel>, String) {
        (
            self.base_id.clone(),
            self.kind,
            self.level,
            self.model_name.clone(),
        )
    }
}

pub(crate) mod duration_millis {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        d: &Duration,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Duration, D::Error> {
        let ms = u64::deserialize(deserializer)?;
        Ok(Duration::from_millis(ms))
    }
}

/// `100 · n_correct / n_items` in hundredths of a percent, rounded half-even.
///
/// All table rendering and delta arithmetic goes through this integer form so
/// printed deltas match printed accuracies exactly.
pub fn accuracy_scaled(n_correct: usize, n_items: usize) -> i64 {
    assert!(n_items > 0, "accuracy of an empty cell");
    assert!(n_correct <= n_items);
    let numerator = n_correct as i128 * 10_000;
    let n = n_items as i128;
    let quotient = numerator / n;
    let remainder = numerator % n;
    let rounded = match (2 * remainder).cmp(&n) {
        std::cmp::Ordering::Less => quotient,
        std::cmp::Ordering::Greater => quotient + 1,
        std::cmp::Ordering::Equal => {
            if quotient % 2 == 0 {
                quotient
            } else {
                quotient + 1
            }
        }
    };
    rounded as i64
}

/// Render hundredths-of-a-percent as a 2-decimal string ("6353" → "63.53").
pub fn format_scaled(value: i64) -> String {
    let sign = if value < 0 { "-" } else { "" };
    let abs = value.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

/// Accuracy for one (model, kind, level) combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub model_name: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
    pub n_items: usize,
    pub n_correct: usize,
}

impl AccuracyCell {
    pub fn accuracy_scaled(&self) -> i64 {
        accuracy_scaled(self.n_correct, self.n_items)
    }

    pub fn accuracy_string(&self) -> String {
        format_scaled(self.accuracy_scaled())
    }
}

/// Accuracy drop of one cell relative to the model's Original cell, in
/// hundredths of a percent (positive = degradation).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub model_name: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
    pub drop_scaled: i64,
}

impl Delta {
    pub fn drop_string(&self) -> String {
        format_scaled(self.drop_scaled)
    }
}

/// Run provenance recorded alongside the numbers. The timestamp never
/// reaches CSV/markdown/plot-data output, which must be byte-deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub corpus_name: String,
    pub pool_hash: String,
    pub global_seed: u64,
    /// Items skipped at perturbation time; excluded from numerator and
    /// denominator alike.
    pub excluded_items: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub cells: Vec<AccuracyCell>,
    pub deltas: Vec<Delta>,
    pub warnings: Vec<String>,
    pub metadata: ReportMetadata,
}

impl Report {
    pub fn cell(
        &self,
        model: &str,
        kind: PerturbationKind,
        level: Option<IntensityLevel>,
    ) -> Option<&AccuracyCell> {
        self.cells
            .iter()
            .find(|c| c.model_name == model && c.kind == kind && c.level == level)
    }

    pub fn delta(
        &self,
        model: &str,
        kind: PerturbationKind,
        level: Option<IntensityLevel>,
    ) -> Option<&Delta> {
        self.deltas
            .iter()
            .find(|d| d.model_name == model && d.kind == kind && d.level == level)
    }
}

/// Fold evaluation records into a report.
///
/// Records are grouped by (model, kind, level); duplicates on the full
/// (base_id, kind, level, model) key are an error listing the offenders.
/// Every non-Original cell gets a delta against its model's Original cell;
/// when that cell is absent the delta is omitted with a warning.
pub fn aggregate(records: &[EvalRecord], metadata: ReportMetadata) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::data("no evaluation records to aggregate"));
    }

    let mut seen: BTreeSet<(String, String, String, String)> = BTreeSet::new();
    let mut duplicates: Vec<String> = Vec::new();
    for r in records {
        let key = (
            r.base_id.clone(),
            r.kind.to_string(),
            r.level.map(|l| l.to_string()).unwrap_or_default(),
            r.model_name.clone(),
        );
        if !seen.insert(key) {
            duplicates.push(format!(
                "({}, {}, {}, {})",
                r.base_id,
                r.kind,
                r.level.map_or_else(|| "-".to_string(), |l| l.to_string()),
                r.model_name
            ));
        }
    }
    if !duplicates.is_empty() {
        duplicates.sort();
        duplicates.dedup();
        let shown = duplicates.iter().take(10).cloned().collect::<Vec<_>>();
        let suffix = if duplicates.len() > shown.len() {
            format!(" and {} more", duplicates.len() - shown.len())
        } else {
            String::new()
        };
        return Err(Error::data(format!(
            "duplicate evaluation records for {}{}",
            shown.join(", "),
            suffix
        )));
    }

    type CellKey = (String, PerturbationKind, Option<IntensityLevel>);
    let mut groups: BTreeMap<CellKey, (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = groups
            .entry((r.model_name.clone(), r.kind, r.level))
            .or_insert((0, 0));
        entry.0 += 1;
        entry.1 += usize::from(r.correct);
    }

    let cells: Vec<AccuracyCell> = groups
        .into_iter()
        .map(
            |((model_name, kind, level), (n_items, n_correct))| AccuracyCell {
                model_name,
                kind,
                level,
                n_items,
                n_correct,
            },
        )
        .collect();

    let mut deltas = Vec::new();
    let mut warnings = Vec::new();
    for cell in &cells {
        if cell.kind == PerturbationKind::Original {
            continue;
        }
        let original = cells.iter().find(|c| {
            c.model_name == cell.model_name
                && c.kind == PerturbationKind::Original
                && c.level.is_none()
        });
        match original {
            Some(orig) => deltas.push(Delta {
                model_name: cell.model_name.clone(),
                kind: cell.kind,
                level: cell.level,
                drop_scaled: orig.accuracy_scaled() - cell.accuracy_scaled(),
            }),
            None => {
                let warning = format!(
                    "no Original cell for model {}; delta omitted for ({}, {})",
                    cell.model_name,
                    cell.kind,
                    cell.level
                        .map_or_else(|| "-".to_string(), |l| l.to_string()),
                );
                log::warn!("{warning}");
                warnings.push(warning);
            }
        }
    }

    Ok(Report {
        cells,
        deltas,
        warnings,
        metadata,
    })
}

/// The intensity curve for one (model, kind): the Original point followed by
/// each present level in ladder order. Points are (level_index, scaled
/// accuracy) with Original at index 0 and Excessive at index 5. A run that
/// never evaluated the original problems yields a curve starting at index 1,
/// matching how [`aggregate`] treats a missing Original cell.
pub fn degradation_curve(
    report: &Report,
    model: &str,
    kind: PerturbationKind,
) -> Result<Vec<(usize, i64)>> {
    let mut curve = Vec::new();
    if let Some(original) = report.cell(model, PerturbationKind::Original, None) {
        curve.push((0usize, original.accuracy_scaled()));
    }

    if kind.is_leveled() {
        let present: Vec<&AccuracyCell> = report
            .cells
            .iter()
            .filter(|c| c.model_name == model && c.kind == kind)
            .collect();
        if present.is_empty() {
            return Err(Error::data(format!(
                "degradation curve: no ({model}, {kind}) cells"
            )));
        }
        for (idx, level) in IntensityLevel::ALL.iter().enumerate() {
            if let Some(cell) = present.iter().find(|c| c.level == Some(*level)) {
                curve.push((idx + 1, cell.accuracy_scaled()));
            }
        }
    } else {
        let cell = report.cell(model, kind, None).ok_or_else(|| {
            Error::data(format!("degradation curve: missing ({model}, {kind}) cell"))
        })?;
        curve.push((1, cell.accuracy_scaled()));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Markdown,
    Plotdata,
}

/// Emit the report in one format, returning the files written.
///
/// All three formats are byte-deterministic given the report: rows are fully
/// sorted and no timestamps are included.
pub fn emit(report: &Report, format: EmitFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.cells.is_empty() {
        return Err(Error::data("refusing to emit a report with no cells"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    match format {
        EmitFormat::Csv => {
            let path = out_dir.join("report.csv");
            std::fs::write(&path, render_csv(report)?).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        EmitFormat::Markdown => {
            let path = out_dir.join("report.md");
            std::fs::write(&path, render_markdown(report)).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        EmitFormat::Plotdata => emit_plotdata(report, out_dir),
    }
}

/// One parsed CSV row; also the unit of the emit→parse→emit fixed point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvRow {
    pub model: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
    pub n_items: usize,
    pub n_correct: usize,
    pub accuracy: String,
    pub delta_vs_original: String,
}

pub fn to_csv_rows(report: &Report) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = report
        .cells
        .iter()
        .map(|cell| {
            let delta = report
                .delta(&cell.model_name, cell.kind, cell.level)
                .map(|d| d.drop_string())
                .unwrap_or_default();
            CsvRow {
                model: cell.model_name.clone(),
                kind: cell.kind,
                level: cell.level,
                n_items: cell.n_items,
                n_correct: cell.n_correct,
                accuracy: cell.accuracy_string(),
                delta_vs_original: delta,
            }
        })
        .collect();
    rows.sort_by(|a, b| (&a.model, a.kind, a.level).cmp(&(&b.model, b.kind, b.level)));
    rows
}

pub fn render_csv(report: &Report) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "model",
            "kind",
            "level",
            "n_items",
            "n_correct",
            "accuracy",
            "delta_vs_original",
        ])
        .map_err(|e| Error::data(format!("csv write: {e}")))?;
    for row in to_csv_rows(report) {
        writer
            .write_record([
                row.model.as_str(),
                row.kind.as_str(),
                row.level.map_or("", |l| l.as_str()),
                &row.n_items.to_string(),
                &row.n_correct.to_string(),
                &row.accuracy,
                &row.delta_vs_original,
            ])
            .map_err(|e| Error::data(format!("csv write: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::data(format!("csv write: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(format!("csv encoding: {e}")))
}

/// Parse a report CSV back into rows (the inverse of [`render_csv`]).
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("csv line {}: {e}", i + 2)))?;
        if record.len() != 7 {
            return Err(Error::data(format!(
                "csv line {}: expected 7 columns, got {}",
                i + 2,
                record.len()
            )));
        }
        let level = match &record[2] {
            "" => None,
            name => Some(name.parse::<IntensityLevel>()?),
        };
        rows.push(CsvRow {
            model: record[0].to_string(),
            kind: record[1].parse()?,
            level,
            n_items: record[3]
                .parse()
                .map_err(|e| Error::data(format!("csv line {}: n_items: {e}", i + 2)))?,
            n_correct: record[4]
                .parse()
                .map_err(|e| Error::data(format!("csv line {}: n_correct: {e}", i + 2)))?,
            accuracy: record[5].to_string(),
            delta_vs_original: record[6].to_string(),
        });
    }
    Ok(rows)
}

fn kind_heading(kind: PerturbationKind) -> &'static str {
    match kind {
        PerturbationKind::Original => "Original",
        PerturbationKind::WithNumbers => "Perturbation with numbers",
        PerturbationKind::WithoutNumbers => "Perturbation without numbers",
        PerturbationKind::InstructionMissing => "Question instruction missing",
    }
}

pub fn render_markdown(report: &Report) -> String {
    let mut out = String::new();
    writeln!(out, "# Accuracy report").ok();
    writeln!(out).ok();
    writeln!(out, "- corpus: {}", report.metadata.corpus_name).ok();
    writeln!(out, "- pool hash: {}", report.metadata.pool_hash).ok();
    writeln!(out, "- global seed: {}", report.metadata.global_seed).ok();
    writeln!(out, "- excluded items: {}", report.metadata.excluded_items).ok();

    let models: BTreeSet<&str> = report.cells.iter().map(|c| c.model_name.as_str()).collect();
    let kinds: BTreeSet<PerturbationKind> = report
        .cells
        .iter()
        .map(|c| c.kind)
        .filter(|k| *k != PerturbationKind::Original)
        .collect();

    let fmt_cell = |model: &str, kind: PerturbationKind, level: Option<IntensityLevel>| {
        report
            .cell(model, kind, level)
            .map(|c| c.accuracy_string())
            .unwrap_or_else(|| "-".to_string())
    };

    for kind in kinds {
        writeln!(out).ok();
        writeln!(out, "## {} (accuracy, %)", kind_heading(kind)).ok();
        writeln!(out).ok();
        if kind.is_leveled() {
            writeln!(
                out,
                "| Model | Original | Baseline | Low | Medium | Equal | Excessive |"
            )
            .ok();
            writeln!(out, "|---|---|---|---|---|---|---|").ok();
            for model in &models {
                let mut row = format!(
                    "| {} | {}",
                    model,
                    fmt_cell(model, PerturbationKind::Original, None)
                );
                for level in IntensityLevel::ALL {
                    write!(row, " | {}", fmt_cell(model, kind, Some(level))).ok();
                }
                writeln!(out, "{row} |").ok();
            }
        } else {
            writeln!(out, "| Model | Original | Missing |").ok();
            writeln!(out, "|---|---|---|").ok();
            for model in &models {
                writeln!(
                    out,
                    "| {} | {} | {} |",
                    model,
                    fmt_cell(model, PerturbationKind::Original, None),
                    fmt_cell(model, kind, None)
                )
                .ok();
            }
        }
    }

    if !report.warnings.is_empty() {
        writeln!(out).ok();
        writeln!(out, "## Warnings").ok();
        writeln!(out).ok();
        for w in &report.warnings {
            writeln!(out, "- {w}").ok();
        }
    }
    out
}

/// Make a model/kind pair safe for a filename.
fn sanitize_for_filename(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn emit_plotdata(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut series: BTreeSet<(String, PerturbationKind)> = BTreeSet::new();
    for cell in &report.cells {
        if cell.kind != PerturbationKind::Original {
            series.insert((cell.model_name.clone(), cell.kind));
        }
    }
    let mut written = Vec::new();
    for (model, kind) in series {
        let curve = degradation_curve(report, &model, kind)?;
        let mut body = String::new();
        writeln!(body, "# level_index accuracy").ok();
        for (idx, scaled) in curve {
            writeln!(body, "{idx} {}", format_scaled(scaled)).ok();
        }
        let path = out_dir.join(format!(
            "{}__{}.dat",
            sanitize_for_filename(&model),
            kind.as_str()
        ));
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Write evaluation records as line-delimited JSON.
pub fn write_records(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::json(format!("eval record {}", r.base_id), e))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load evaluation records from line-delimited JSON.
pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (line_no, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EvalRecord = serde_json::from_str(line).map_err(|e| {
            Error::data(format!(
                "{}: line {}: invalid eval record: {e}",
                path.display(),
                line_no + 1
            ))
        })?;
        records.push(r);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grader::{ExtractedAnswer, ExtractionRule};
    use crate::number::CanonicalNumber;

    fn record(
        base_id: &str,
        kind: PerturbationKind,
        level: Option<IntensityLevel>,
        model: &str,
        correct: bool,
    ) -> EvalRecord {
        EvalRecord {
            base_id: base_id.to_string(),
            kind,
            level,
            model_name: model.to_string(),
            extracted: ExtractedAnswer {
                value: Some(CanonicalNumber::from_integer(1)),
                extraction_rule: ExtractionRule::Boxed,
                raw_span: "1".to_string(),
            },
            correct,
            latency_ms: Duration::from_millis(5),
            attempt_count: 1,
        }
    }

    /// Build `n` records for one cell with exactly `c` correct.
    fn cell_records(
        kind: PerturbationKind,
        level: Option<IntensityLevel>,
        model: &str,
        n: usize,
        c: usize,
    ) -> Vec<EvalRecord> {
        (0..n)
            .map(|i| record(&format!("item-{i:05}"), kind, level, model, i < c))
            .collect()
    }

    /// Find a correct-count whose rendered accuracy hits `target` hundredths
    /// of a percent at the given denominator.
    fn correct_count_for(target: i64, n: usize) -> usize {
        (0..=n)
            .find(|&c| accuracy_scaled(c, n) == target)
            .unwrap_or_else(|| panic!("no count renders {target} over {n}"))
    }

    #[test]
    fn half_even_rounding_matches_hand_cases() {
        // 1/3 → 33.33%; 2/3 → 66.67%.
        assert_eq!(accuracy_scaled(1, 3), 3333);
        assert_eq!(accuracy_scaled(2, 3), 6667);
        // Exact halves round to even: 0.125% of 400 → 12.5 → 12.
        assert_eq!(accuracy_scaled(5, 4000), 12);
        // 0.375% of 400 → 37.5 → 38.
        assert_eq!(accuracy_scaled(15, 4000), 38);
        assert_eq!(accuracy_scaled(0, 7), 0);
        assert_eq!(accuracy_scaled(7, 7), 10000);
        assert_eq!(format_scaled(6353), "63.53");
        assert_eq!(format_scaled(-25), "-0.25");
        assert_eq!(format_scaled(10000), "100.00");
    }

    #[test]
    fn published_delta_cases_reproduce() {
        // 63.53 original vs 11.98 excessive → 51.55; and 94.09 vs 67.32 →
        // 26.77, both over a 1319-item denominator.
        let n = 1319;
        let mut records = Vec::new();
        records.extend(cell_records(
            PerturbationKind::Original,
            None,
            "model-a",
            n,
            correct_count_for(6353, n),
        ));
        records.extend(cell_records(
            PerturbationKind::WithNumbers,
            Some(IntensityLevel::Excessive),
            "model-a",
            n,
            correct_count_for(1198, n),
        ));
        records.extend(cell_records(
            PerturbationKind::Original,
            None,
            "model-b",
            n,
            correct_count_for(9409, n),
        ));
        records.extend(cell_records(
            PerturbationKind::WithNumbers,
            Some(IntensityLevel::Excessive),
            "model-b",
            n,
            correct_count_for(6732, n),
        ));

        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let delta_a = report
            .delta(
                "model-a",
                PerturbationKind::WithNumbers,
                Some(IntensityLevel::Excessive),
            )
            .unwrap();
        assert_eq!(delta_a.drop_string(), "51.55");
        let delta_b = report
            .delta(
                "model-b",
                PerturbationKind::WithNumbers,
                Some(IntensityLevel::Excessive),
            )
            .unwrap();
        assert_eq!(delta_b.drop_string(), "26.77");
    }

    #[test]
    fn all_correct_records_make_flat_100s() {
        let mut records = cell_records(PerturbationKind::Original, None, "m", 50, 50);
        for level in IntensityLevel::ALL {
            records.extend(cell_records(
                PerturbationKind::WithoutNumbers,
                Some(level),
                "m",
                50,
                50,
            ));
        }
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        for cell in &report.cells {
            assert_eq!(cell.accuracy_string(), "100.00");
        }
        for delta in &report.deltas {
            assert_eq!(delta.drop_scaled, 0);
        }
    }

    #[test]
    fn duplicates_are_rejected_with_offenders_listed() {
        let mut records = cell_records(PerturbationKind::Original, None, "m", 5, 5);
        records.push(records[0].clone());
        let err = aggregate(&records, ReportMetadata::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate"), "got: {msg}");
        assert!(msg.contains("item-00000"), "got: {msg}");
    }

    #[test]
    fn empty_records_are_rejected() {
        assert!(aggregate(&[], ReportMetadata::default()).is_err());
    }

    #[test]
    fn missing_original_omits_delta_with_warning() {
        let records = cell_records(
            PerturbationKind::WithNumbers,
            Some(IntensityLevel::Baseline),
            "m",
            10,
            5,
        );
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        assert!(report.deltas.is_empty());
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("no Original cell"));
    }

    #[test]
    fn aggregate_matches_brute_force_recount() {
        // Independent recount: a naive loop over every (model, kind, level)
        // combination seen in the records.
        let mut records = Vec::new();
        records.extend(cell_records(PerturbationKind::Original, None, "m1", 13, 9));
        records.extend(cell_records(
            PerturbationKind::WithNumbers,
            Some(IntensityLevel::Low),
            "m1",
            13,
            4,
        ));
        records.extend(cell_records(
            PerturbationKind::InstructionMissing,
            None,
            "m2",
            7,
            2,
        ));
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        for cell in &report.cells {
            let mut n = 0usize;
            let mut c = 0usize;
            for r in &records {
                if r.model_name == cell.model_name && r.kind == cell.kind && r.level == cell.level {
                    n += 1;
                    c += usize::from(r.correct);
                }
            }
            assert_eq!((cell.n_items, cell.n_correct), (n, c));
        }
    }

    #[test]
    fn degradation_curve_reproduces_a_published_six_point_ladder() {
        // Original 94.09 then 94.01, 93.78, 92.57, 92.27, 90.21 across the
        // five levels. With a 10000-item denominator, a count of c renders
        // exactly c hundredths of a percent, so each point is exact.
        let n = 10_000;
        let targets = [9409i64, 9401, 9378, 9257, 9227, 9021];
        let mut records = cell_records(
            PerturbationKind::Original,
            None,
            "m",
            n,
            correct_count_for(targets[0], n),
        );
        for (level, target) in IntensityLevel::ALL.iter().zip(&targets[1..]) {
            records.extend(cell_records(
                PerturbationKind::WithNumbers,
                Some(*level),
                "m",
                n,
                correct_count_for(*target, n),
            ));
        }
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let curve = degradation_curve(&report, "m", PerturbationKind::WithNumbers).unwrap();
        assert_eq!(curve.len(), 6);
        let indices: Vec<usize> = curve.iter().map(|(i, _)| *i).collect();
        assert_eq!(indices, [0, 1, 2, 3, 4, 5]);
        let values: Vec<i64> = curve.iter().map(|(_, v)| *v).collect();
        assert_eq!(values, targets);
        let rendered: Vec<String> = values.iter().map(|v| format_scaled(*v)).collect();
        assert_eq!(
            rendered,
            ["94.09", "94.01", "93.78", "92.57", "92.27", "90.21"]
        );
    }

    #[test]
    fn single_level_run_gives_two_point_curve() {
        let mut records = cell_records(PerturbationKind::Original, None, "m", 10, 9);
        records.extend(cell_records(
            PerturbationKind::WithoutNumbers,
            Some(IntensityLevel::Equal),
            "m",
            10,
            7,
        ));
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let curve = degradation_curve(&report, "m", PerturbationKind::WithoutNumbers).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0].0, 0);
        assert_eq!(curve[1].0, 4, "Equal sits at ladder index 4");
    }

    #[test]
    fn curve_errors_name_whats_missing() {
        let records = cell_records(PerturbationKind::Original, None, "m", 10, 9);
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let err = degradation_curve(&report, "m", PerturbationKind::WithNumbers).unwrap_err();
        assert!(err.to_string().contains("with-numbers"), "got: {err}");
        let err = degradation_curve(&report, "ghost", PerturbationKind::WithNumbers).unwrap_err();
        assert!(err.to_string().contains("ghost"), "got: {err}");
    }

    #[test]
    fn csv_round_trips_and_is_a_fixed_point() {
        let mut records = cell_records(PerturbationKind::Original, None, "m", 10, 9);
        records.extend(cell_records(
            PerturbationKind::WithNumbers,
            Some(IntensityLevel::Baseline),
            "m",
            10,
            6,
        ));
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let csv1 = render_csv(&report).unwrap();
        let rows = parse_csv(&csv1).unwrap();
        assert_eq!(rows, to_csv_rows(&report));
        // Re-render the parsed rows through a second report-free pass.
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "model",
                "kind",
                "level",
                "n_items",
                "n_correct",
                "accuracy",
                "delta_vs_original",
            ])
            .unwrap();
        for row in &rows {
            writer
                .write_record([
                    row.model.as_str(),
                    row.kind.as_str(),
                    row.level.map_or("", |l| l.as_str()),
                    &row.n_items.to_string(),
                    &row.n_correct.to_string(),
                    &row.accuracy,
                    &row.delta_vs_original,
                ])
                .unwrap();
        }
        let csv2 = String::from_utf8(writer.into_inner().unwrap()).unwrap();
        assert_eq!(csv1, csv2);
    }

    #[test]
    fn markdown_shows_the_missing_column_for_instruction_tables() {
        let mut records = cell_records(PerturbationKind::Original, None, "m", 10, 9);
        records.extend(cell_records(
            PerturbationKind::InstructionMissing,
            None,
            "m",
            10,
            2,
        ));
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let md = render_markdown(&report);
        assert!(md.contains("| Model | Original | Missing |"), "got:\n{md}");
        assert!(md.contains("| m | 90.00 | 20.00 |"), "got:\n{md}");
    }

    #[test]
    fn emit_refuses_empty_reports() {
        let report = Report {
            cells: Vec::new(),
            deltas: Vec::new(),
            warnings: Vec::new(),
            metadata: ReportMetadata::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let err = emit(&report, EmitFormat::Csv, dir.path()).unwrap_err();
        assert!(err.to_string().contains("no cells"));
        assert!(!dir.path().join("report.csv").exists(), "no empty file");
    }

    #[test]
    fn emitted_files_are_deterministic() {
        let mut records = cell_records(PerturbationKind::Original, None, "m", 10, 9);
        records.extend(cell_records(
            PerturbationKind::WithoutNumbers,
            Some(IntensityLevel::Low),
            "m",
            10,
            5,
        ));
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        for format in [EmitFormat::Csv, EmitFormat::Markdown, EmitFormat::Plotdata] {
            let a = emit(&report, format, dir1.path()).unwrap();
            let b = emit(&report, format, dir2.path()).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                assert_eq!(
                    std::fs::read(pa).unwrap(),
                    std::fs::read(pb).unwrap(),
                    "nondeterministic {format:?}"
                );
            }
        }
    }

    #[test]
    fn plotdata_files_are_named_by_model_and_kind() {
        let mut records = cell_records(PerturbationKind::Original, None, "org/model v2", 4, 4);
        records.extend(cell_records(
            PerturbationKind::WithNumbers,
            Some(IntensityLevel::Baseline),
            "org/model v2",
            4,
            2,
        ));
        let report = aggregate(&records, ReportMetadata::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit(&report, EmitFormat::Plotdata, dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        assert!(files[0]
            .file_name()
            .unwrap()
            .to_string_lossy()
            .contains("org-model-v2__with-numbers.dat"));
        let body = std::fs::read_to_string(&files[0]).unwrap();
        assert!(body.contains("0 100.00"));
        assert!(body.contains("1 50.00"));
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let records = cell_records(
            PerturbationKind::WithNumbers,
            Some(IntensityLevel::Medium),
            "m",
            3,
            2,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        write_records(&records, &path).unwrap();
        let reloaded = load_records(&path).unwrap();
        assert_eq!(records, reloaded);
    }
}
