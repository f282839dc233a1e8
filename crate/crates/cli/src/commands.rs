//! Implementations of the subcommands, shared between `main` and the
//! one-shot `reproduce` pipeline.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use perturbench::client::{
    run_eval, BackendMode, EndpointConfig, EvalOptions, MockPolicy, RunSummary, ScriptedResponses,
};
use perturbench::corpus::{load_corpus, validate_corpus, Corpus};
use perturbench::perturb::{
    build_variant_dataset, load_variants, write_variants, DistractorPool, Exclusion,
    IntensityLevel, PerturbationKind, PerturbedProblem, Relaxation,
};
use perturbench::report::{aggregate, emit, load_records, EmitFormat, Report, ReportMetadata};
use perturbench::segmenter::Segmenter;
use perturbench::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{variant_file_name, RunConfig};

// ---------------------------------------------------------------------------
// Shared plumbing.

pub fn build_segmenter(config: &RunConfig) -> Result<Segmenter> {
    match &config.segmenter.abbreviations {
        Some(path) => Segmenter::from_abbreviation_file(path),
        None => Ok(Segmenter::default()),
    }
}

pub fn load_configured_corpus(config: &RunConfig, segmenter: &Segmenter) -> Result<Corpus> {
    load_corpus(
        &config.corpus.path,
        config.corpus.format,
        Some(&config.corpus_name()),
        segmenter,
    )
}

pub fn load_pool(config: &RunConfig) -> Result<DistractorPool> {
    match &config.perturb.pool {
        Some(path) => DistractorPool::from_file(path),
        None => Ok(DistractorPool::embedded().clone()),
    }
}

fn variants_dir(config: &RunConfig) -> PathBuf {
    config.output.dir.join("variants")
}

fn records_path(config: &RunConfig) -> PathBuf {
    config.output.dir.join("records.jsonl")
}

fn write_jsonl<T: Serialize>(rows: &[T], path: &Path, what: &str) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let line =
            serde_json::to_string(row).map_err(|e| Error::json(format!("{what} record"), e))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// validate

pub fn cmd_validate(config: &RunConfig) -> Result<()> {
    let segmenter = build_segmenter(config)?;
    let corpus = load_configured_corpus(config, &segmenter)?;
    let report = validate_corpus(&corpus);

    println!("corpus: {} ({} problems)", corpus.name, corpus.len());
    println!("sentences: {}", report.total_sentences);
    println!("numeric sentences: {}", report.total_numeric_sentences);
    println!(
        "short problems (<2 sentences): {}",
        report.short_problems.len()
    );
    println!("unsegmentable problems: {}", report.invalid_problems.len());
    println!(
        "problems without a final question mark: {}",
        report.no_question_sentence.len()
    );
    for id in &report.short_problems {
        log::warn!("{id}: fewer than 2 sentences; instruction-missing will skip it");
    }
    for id in &report.no_question_sentence {
        log::warn!("{id}: final sentence does not end with a question mark");
    }
    if !report.invalid_problems.is_empty() {
        return Err(Error::data(format!(
            "{} problems have no usable sentences: {}",
            report.invalid_problems.len(),
            report.invalid_problems.join(", ")
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// perturb

/// What one variant build produced, for counters and the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantFileInfo {
    pub file: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
    pub items: usize,
}

#[derive(Debug)]
pub struct PerturbOutcome {
    pub files: Vec<VariantFileInfo>,
    pub exclusions: Vec<Exclusion>,
    pub relaxations: Vec<Relaxation>,
}

pub fn cmd_perturb(config: &RunConfig) -> Result<PerturbOutcome> {
    let segmenter = build_segmenter(config)?;
    let corpus = load_configured_corpus(config, &segmenter)?;
    let pool = load_pool(config)?;

    let dir = variants_dir(config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut outcome = PerturbOutcome {
        files: Vec::new(),
        exclusions: Vec::new(),
        relaxations: Vec::new(),
    };
    for (kind, level) in config.variant_combinations() {
        let output = build_variant_dataset(&corpus, kind, level, config.perturb.seed, &pool)?;
        let file = variant_file_name(kind, level);
        let path = dir.join(&file);
        write_variants(&output.items, &path)?;
        println!(
            "{file}: {} items ({} excluded)",
            output.items.len(),
            output.exclusions.len()
        );
        outcome.files.push(VariantFileInfo {
            file,
            kind,
            level,
            items: output.items.len(),
        });
        outcome.exclusions.extend(output.exclusions);
        outcome.relaxations.extend(output.relaxations);
    }

    write_jsonl(
        &outcome.exclusions,
        &dir.join("exclusions.jsonl"),
        "exclusion",
    )?;
    write_jsonl(
        &outcome.relaxations,
        &dir.join("relaxations.jsonl"),
        "relaxation",
    )?;
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// eval

/// Endpoint stand-ins for the mock backends; the base url is descriptive
/// only (nothing connects to it) but participates in cache keys.
fn mock_endpoint(label: &str) -> EndpointConfig {
    EndpointConfig::new(format!("mock://{label}"), label)
}

fn backend_pieces(config: &RunConfig) -> Result<(EndpointConfig, BackendMode)> {
    use crate::config::BackendConfig;
    Ok(match &config.eval.backend {
        BackendConfig::GoldOracle => (
            mock_endpoint("gold-oracle"),
            BackendMode::Mock(MockPolicy::GoldOracle),
        ),
        BackendConfig::Distracted { strength } => (
            mock_endpoint("distracted"),
            BackendMode::Mock(MockPolicy::Distracted {
                strength: *strength,
            }),
        ),
        BackendConfig::Scripted { responses } => {
            let responses = ScriptedResponses::load(responses)?;
            (
                mock_endpoint("scripted"),
                BackendMode::Mock(MockPolicy::Scripted(std::sync::Arc::new(responses))),
            )
        }
        BackendConfig::Http { endpoint } => (
            endpoint.clone(),
            BackendMode::Http {
                cache_dir: config.eval.cache_dir.clone(),
            },
        ),
    })
}

/// Load every variant file this configuration expects.
fn load_configured_variants(config: &RunConfig) -> Result<Vec<PerturbedProblem>> {
    let dir = variants_dir(config);
    let mut items = Vec::new();
    for (kind, level) in config.variant_combinations() {
        let path = dir.join(variant_file_name(kind, level));
        if !path.is_file() {
            return Err(Error::data(format!(
                "variant file {} not found; run `perturbench perturb` first",
                path.display()
            )));
        }
        items.extend(load_variants(&path)?);
    }
    Ok(items)
}

pub fn cmd_eval(config: &RunConfig, resume: bool) -> Result<RunSummary> {
    let segmenter = build_segmenter(config)?;
    let corpus = load_configured_corpus(config, &segmenter)?;
    let items = load_configured_variants(config)?;
    let (endpoint, mode) = backend_pieces(config)?;

    std::fs::create_dir_all(&config.output.dir).map_err(|e| Error::io(&config.output.dir, e))?;
    if config.eval.backend.is_http() {
        std::fs::create_dir_all(&config.eval.cache_dir)
            .map_err(|e| Error::io(&config.eval.cache_dir, e))?;
    }

    let options = EvalOptions {
        concurrency: config.eval.concurrency,
        tolerance: config.eval.tolerance,
        resume,
    };
    let records = records_path(config);
    eprintln!(
        "evaluating {} items against {} with {} worker(s)",
        items.len(),
        config.eval.backend.model_label(),
        options.concurrency
    );
    let summary = run_eval(
        &items,
        &corpus,
        &endpoint,
        &config.prompt,
        &mode,
        &options,
        &records,
    )?;
    eprintln!(
        "evaluated {} items ({} resumed) -> {} records in {}",
        summary.evaluated,
        summary.resumed,
        summary.total_records,
        records.display()
    );
    Ok(summary)
}

// ---------------------------------------------------------------------------
// report

fn count_exclusions(config: &RunConfig) -> usize {
    let path = variants_dir(config).join("exclusions.jsonl");
    match std::fs::read_to_string(&path) {
        Ok(raw) => raw.lines().filter(|l| !l.trim().is_empty()).count(),
        Err(_) => 0,
    }
}

pub fn build_report(config: &RunConfig, records_file: &Path) -> Result<Report> {
    let records = load_records(records_file)?;
    let pool = load_pool(config)?;
    let metadata = ReportMetadata {
        corpus_name: config.corpus_name(),
        pool_hash: pool.content_hash(),
        global_seed: config.perturb.seed,
        excluded_items: count_exclusions(config),
        generated_at: None,
    };
    aggregate(&records, metadata)
}

pub fn cmd_report(config: &RunConfig, records_file: Option<&Path>) -> Result<Vec<String>> {
    let default_records = records_path(config);
    let records_file = records_file.unwrap_or(&default_records);
    let report = build_report(config, records_file)?;

    let out = &config.output.dir;
    let mut written = Vec::new();
    written.extend(emit(&report, EmitFormat::Csv, out)?);
    let md_files = emit(&report, EmitFormat::Markdown, out)?;
    written.extend(md_files.iter().cloned());
    written.extend(emit(&report, EmitFormat::Plotdata, &out.join("plots"))?);

    // The human-readable table also goes to stdout for shell use.
    let markdown = std::fs::read_to_string(&md_files[0]).map_err(|e| Error::io(&md_files[0], e))?;
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(markdown.as_bytes())
        .map_err(|e| Error::io("stdout", e))?;

    let names = written
        .iter()
        .map(|p| {
            p.strip_prefix(out)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        })
        .collect::<Vec<_>>();
    for name in &names {
        eprintln!("wrote {}", out.join(name).display());
    }
    Ok(names)
}

// ---------------------------------------------------------------------------
// reproduce

/// Frozen description of a completed run: enough to repeat it exactly and
/// to check that a repeat used the same inputs. This is the only artifact
/// that records a wall-clock time.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub created_at_unix: u64,
    pub config_hash: String,
    pub pool_hash: String,
    pub global_seed: u64,
    pub config: RunConfig,
    pub variant_files: Vec<VariantFileInfo>,
    pub excluded_items: usize,
    pub records_file: String,
    pub report_files: Vec<String>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::json(format!("manifest {}", path.display()), e))
}

pub fn cmd_reproduce(config: &RunConfig, resume: bool) -> Result<()> {
    let perturb = cmd_perturb(config)?;
    cmd_eval(config, resume)?;
    let report_files = cmd_report(config, None)?;

    let pool = load_pool(config)?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        created_at_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config_hash: config.config_hash(),
        pool_hash: pool.content_hash(),
        global_seed: config.perturb.seed,
        config: config.clone(),
        variant_files: perturb.files,
        excluded_items: perturb.exclusions.len(),
        records_file: "records.jsonl".to_string(),
        report_files,
    };
    let path = config.output.dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
