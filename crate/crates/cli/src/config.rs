//! Run configuration: one declarative TOML file describing a whole run,
//! with command-line flags overriding individual values.
//!
//! Paths inside a config file resolve relative to the file's directory;
//! paths given as flags resolve relative to the working directory. The
//! fully resolved configuration is what gets frozen into a run manifest,
//! so a manifest re-run sees exactly the values the original run used.

use std::path::{Component, Path, PathBuf};

use perturbench::client::{EndpointConfig, PromptTemplate};
use perturbench::corpus::SourceFormat;
use perturbench::perturb::{IntensityLevel, PerturbationKind};
use perturbench::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fully resolved run configuration. Every command works off this struct;
/// the `reproduce` manifest embeds it verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub segmenter: SegmenterConfig,
    pub perturb: PerturbConfig,
    pub prompt: PromptTemplate,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub format: SourceFormat,
    /// Corpus name used in ids and reports; defaults to the file stem.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    /// Abbreviation list file; `None` uses the built-in list.
    pub abbreviations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub kinds: Vec<PerturbationKind>,
    /// Levels applied to each leveled kind; unleveled kinds ignore this.
    pub levels: Vec<IntensityLevel>,
    pub seed: u64,
    /// Distractor pool file; `None` uses the embedded pool.
    pub pool: Option<PathBuf>,
    /// Whether levels were given explicitly (flag or config key) rather
    /// than defaulted. Kept so a re-run validates the same way.
    #[serde(default)]
    pub levels_explicit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub concurrency: usize,
    /// Numeric tolerance for grading; 0 means exact.
    pub tolerance: f64,
    pub cache_dir: PathBuf,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Which backend answers the prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BackendConfig {
    /// Offline mock that always answers with the gold answer.
    GoldOracle,
    /// Offline mock that gets confused by digit-bearing distractors.
    Distracted {
        #[serde(default = "default_strength")]
        strength: f64,
    },
    /// Offline replay of a fixed response file keyed by cache key.
    Scripted { responses: PathBuf },
    /// A real chat-completion endpoint.
    Http {
        #[serde(flatten)]
        endpoint: EndpointConfig,
    },
}

fn default_strength() -> f64 {
    1.0
}

impl BackendConfig {
    /// Model name recorded for this backend's answers.
    pub fn model_label(&self) -> String {
        match self {
            BackendConfig::GoldOracle => "gold-oracle".to_string(),
            BackendConfig::Distracted { .. } => "distracted".to_string(),
            BackendConfig::Scripted { .. } => "scripted".to_string(),
            BackendConfig::Http { endpoint } => endpoint.model_name.clone(),
        }
    }

    pub fn is_http(&self) -> bool {
        matches!(self, BackendConfig::Http { .. })
    }
}

/// Command-line overrides shared by the subcommands. Every field is
/// optional; unset fields fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Corpus file (JSONL).
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,

    /// Corpus format: gsm8k, aime, or generic.
    #[arg(long, value_name = "FORMAT", value_parser = parse_format)]
    pub format: Option<SourceFormat>,

    /// Corpus name used in ids and reports (defaults to the file stem).
    #[arg(long, value_name = "NAME")]
    pub name: Option<String>,

    /// Comma-separated perturbation kinds (original, with-numbers,
    /// without-numbers, instruction-missing) or `all`.
    #[arg(long, value_name = "KINDS", value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,

    /// Comma-separated intensity levels (baseline, low, medium, equal,
    /// excessive) or `all`. Only meaningful for leveled kinds.
    #[arg(long, value_name = "LEVELS", value_delimiter = ',')]
    pub levels: Option<Vec<String>>,

    /// Global random seed for perturbation sampling.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,

    /// Distractor pool file (defaults to the embedded pool).
    #[arg(long, value_name = "PATH")]
    pub pool: Option<PathBuf>,

    /// Output directory for generated files.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Response cache directory (defaults to `<out>/cache`).
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,

    /// Worker threads for evaluation.
    #[arg(long, value_name = "N")]
    pub concurrency: Option<usize>,
}

fn parse_format(raw: &str) -> Result<SourceFormat> {
    raw.parse()
}

// ---------------------------------------------------------------------------
// Config file shape (everything optional).

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    corpus: Option<FileCorpus>,
    segmenter: Option<FileSegmenter>,
    perturb: Option<FilePerturb>,
    prompt: Option<PromptTemplate>,
    eval: Option<FileEval>,
    output: Option<FileOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCorpus {
    path: Option<PathBuf>,
    format: Option<String>,
    name: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSegmenter {
    abbreviations: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePerturb {
    kinds: Option<Vec<String>>,
    levels: Option<Vec<String>>,
    seed: Option<u64>,
    pool: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEval {
    concurrency: Option<usize>,
    tolerance: Option<f64>,
    cache_dir: Option<PathBuf>,
    backend: Option<BackendConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOutput {
    dir: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Resolution.

fn parse_kind_list(raw: &[String]) -> Result<Vec<PerturbationKind>> {
    let mut kinds = Vec::new();
    for token in raw {
        let token = token.trim();
        if token.eq_ignore_ascii_case("all") {
            for k in PerturbationKind::ALL {
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
        } else {
            let kind: PerturbationKind = token.parse()?;
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
    }
    Ok(kinds)
}

fn parse_level_list(raw: &[String]) -> Result<Vec<IntensityLevel>> {
    let mut levels = Vec::new();
    for token in raw {
        let token = token.trim();
        if token.eq_ignore_ascii_case("all") {
            for l in IntensityLevel::ALL {
                if !levels.contains(&l) {
                    levels.push(l);
                }
            }
        } else {
            let level: IntensityLevel = token.parse()?;
            if !levels.contains(&level) {
                levels.push(level);
            }
        }
    }
    Ok(levels)
}

/// Join `path` onto `base` when relative; absolute paths pass through.
fn rebase(base: &Path, path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

/// Strip `.` components so `./out` and `out` compare equal.
fn normalized(path: &Path) -> PathBuf {
    path.components()
        .filter(|c| !matches!(c, Component::CurDir))
        .collect()
}

/// Load the config file (if any), apply flag overrides, fill defaults, and
/// validate the result.
pub fn load_run_config(config_path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let (file, file_dir) = match config_path {
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let parsed: FileConfig = toml::from_str(&raw)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            let dir = path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .to_path_buf();
            (parsed, dir)
        }
        None => (FileConfig::default(), PathBuf::from(".")),
    };

    let file_corpus = file.corpus.unwrap_or_default();
    let file_segmenter = file.segmenter.unwrap_or_default();
    let file_perturb = file.perturb.unwrap_or_default();
    let file_eval = file.eval.unwrap_or_default();
    let file_output = file.output.unwrap_or_default();

    let corpus_path = match (&overrides.corpus, file_corpus.path) {
        (Some(flag), _) => flag.clone(),
        (None, Some(path)) => rebase(&file_dir, path),
        (None, None) => {
            return Err(Error::config(
                "no corpus given: pass --corpus or set [corpus] path in the config file",
            ))
        }
    };
    let format = match (overrides.format, file_corpus.format) {
        (Some(flag), _) => flag,
        (None, Some(raw)) => raw.parse()?,
        (None, None) => SourceFormat::Gsm8k,
    };
    let corpus_name = overrides.name.clone().or(file_corpus.name);

    let abbreviations = file_segmenter
        .abbreviations
        .map(|path| rebase(&file_dir, path));

    let kinds = match (&overrides.kinds, file_perturb.kinds) {
        (Some(flag), _) => parse_kind_list(flag)?,
        (None, Some(raw)) => parse_kind_list(&raw)?,
        (None, None) => PerturbationKind::ALL.to_vec(),
    };
    let levels_explicit = overrides.levels.is_some() || file_perturb.levels.is_some();
    let levels = match (&overrides.levels, file_perturb.levels) {
        (Some(flag), _) => parse_level_list(flag)?,
        (None, Some(raw)) => parse_level_list(&raw)?,
        (None, None) => IntensityLevel::ALL.to_vec(),
    };
    let seed = overrides.seed.or(file_perturb.seed).unwrap_or(42);
    let pool = match (&overrides.pool, file_perturb.pool) {
        (Some(flag), _) => Some(flag.clone()),
        (None, Some(path)) => Some(rebase(&file_dir, path)),
        (None, None) => None,
    };

    let output_dir = match (&overrides.out, file_output.dir) {
        (Some(flag), _) => flag.clone(),
        (None, Some(path)) => rebase(&file_dir, path),
        (None, None) => PathBuf::from("out"),
    };

    let concurrency = overrides.concurrency.or(file_eval.concurrency).unwrap_or(1);
    let tolerance = file_eval.tolerance.unwrap_or(0.0);
    let cache_dir = match (&overrides.cache_dir, file_eval.cache_dir) {
        (Some(flag), _) => flag.clone(),
        (None, Some(path)) => rebase(&file_dir, path),
        (None, None) => output_dir.join("cache"),
    };
    let backend = file_eval.backend.unwrap_or(BackendConfig::GoldOracle);

    let config = RunConfig {
        corpus: CorpusConfig {
            path: corpus_path,
            format,
            name: corpus_name,
        },
        segmenter: SegmenterConfig { abbreviations },
        perturb: PerturbConfig {
            kinds,
            levels,
            seed,
            pool,
            levels_explicit,
        },
        prompt: file.prompt.unwrap_or_default(),
        eval: EvalConfig {
            concurrency,
            tolerance,
            cache_dir,
            backend,
        },
        output: OutputConfig { dir: output_dir },
    };
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Check every cross-field invariant; called by [`load_run_config`] and
    /// again when a manifest is re-run.
    pub fn validate(&self) -> Result<()> {
        if !self.corpus.path.is_file() {
            return Err(Error::config(format!(
                "corpus file {} does not exist",
                self.corpus.path.display()
            )));
        }
        if self.perturb.kinds.is_empty() {
            return Err(Error::config(
                "at least one perturbation kind must be selected",
            ));
        }
        let any_leveled = self.perturb.kinds.iter().any(|k| k.is_leveled());
        if any_leveled && self.perturb.levels.is_empty() {
            return Err(Error::config(
                "leveled perturbation kinds need at least one intensity level",
            ));
        }
        if self.perturb.levels_explicit && !any_leveled {
            return Err(Error::config(format!(
                "intensity levels were given but none of the requested kinds ({}) takes a level",
                self.perturb
                    .kinds
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        if let Some(pool) = &self.perturb.pool {
            if !pool.is_file() {
                return Err(Error::config(format!(
                    "distractor pool file {} does not exist",
                    pool.display()
                )));
            }
        }
        if let Some(abbr) = &self.segmenter.abbreviations {
            if !abbr.is_file() {
                return Err(Error::config(format!(
                    "abbreviation file {} does not exist",
                    abbr.display()
                )));
            }
        }
        if self.eval.concurrency == 0 {
            return Err(Error::config("concurrency must be at least 1"));
        }
        if !self.eval.tolerance.is_finite() || self.eval.tolerance < 0.0 {
            return Err(Error::config("tolerance must be a finite value >= 0"));
        }
        if normalized(&self.output.dir) == normalized(&self.eval.cache_dir) {
            return Err(Error::config(format!(
                "output dir and cache dir must be distinct (both are {})",
                self.output.dir.display()
            )));
        }
        match &self.eval.backend {
            BackendConfig::Distracted { strength } => {
                if !(0.0..=1.0).contains(strength) {
                    return Err(Error::config(format!(
                        "distracted strength must be within [0, 1], got {strength}"
                    )));
                }
            }
            BackendConfig::Scripted { responses } => {
                if !responses.is_file() {
                    return Err(Error::config(format!(
                        "scripted response file {} does not exist",
                        responses.display()
                    )));
                }
            }
            BackendConfig::Http { endpoint } => endpoint.validate()?,
            BackendConfig::GoldOracle => {}
        }
        Ok(())
    }

    /// The (kind, level) pairs this run generates, in a stable order:
    /// kinds as configured, levels as configured within each leveled kind.
    pub fn variant_combinations(&self) -> Vec<(PerturbationKind, Option<IntensityLevel>)> {
        let mut combos = Vec::new();
        for &kind in &self.perturb.kinds {
            if kind.is_leveled() {
                for &level in &self.perturb.levels {
                    combos.push((kind, Some(level)));
                }
            } else {
                combos.push((kind, None));
            }
        }
        combos
    }

    /// Corpus name after defaulting: explicit name, else the file stem.
    pub fn corpus_name(&self) -> String {
        match &self.corpus.name {
            Some(name) => name.clone(),
            None => self
                .corpus
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".to_string()),
        }
    }

    /// SHA-256 of the canonical JSON serialization; frozen into manifests
    /// so re-runs can prove they used the same configuration.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// File name for one variant dataset.
pub fn variant_file_name(kind: PerturbationKind, level: Option<IntensityLevel>) -> String {
    match level {
        Some(level) => format!("variants__{kind}__{level}.jsonl"),
        None => format!("variants__{kind}.jsonl"),
    }
}
