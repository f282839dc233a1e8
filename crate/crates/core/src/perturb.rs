//! Construction of perturbed problem variants.
//!
//! Three perturbations are supported, plus a pass-through Original variant:
//!
//! * **WithoutNumbers** — digit-free factual statements sampled from a fixed
//!   20-sentence pool and inserted at random slots.
//! * **WithNumbers** — digit-bearing non-final sentences sampled from other
//!   problems in the corpus (donors) and inserted at random slots.
//! * **InstructionMissing** — the final sentence (the question instruction)
//!   is removed; nothing is inserted.
//!
//! Distractor counts scale with the intensity level: 1, 2, 3, N, or 2N
//! sentences, where N is the original problem's sentence count. Insertions
//! land immediately before an original sentence, never after the final one,
//! so the question instruction stays last.
//!
//! All sampling is driven by a per-problem generator seeded from a stable
//! 64-bit hash of (global seed, problem id, kind, level), which makes output
//! independent of corpus iteration order and of which other variants are
//! built in the same run.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::Digest;

use crate::corpus::{Corpus, Problem};
use crate::error::{Error, Result};
use crate::segmenter::contains_number;

/// Attempts per draw before a sampling constraint is relaxed.
const SAMPLE_BUDGET: usize = 64;

/// Content-word Jaccard overlap at or above this value fails the
/// semantic-difference check for with-numbers donors.
pub const JACCARD_THRESHOLD: f64 = 0.25;

/// Reference mean sentence length (chars) for the target benchmarks' prose;
/// pool sentences must fall within ±60% of it.
const REFERENCE_MEAN_SENTENCE_CHARS: f64 = 60.0;

const DEFAULT_POOL_TEXT: &str = include_str!("pool_default.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Original,
    WithNumbers,
    WithoutNumbers,
    InstructionMissing,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::Original,
        PerturbationKind::WithNumbers,
        PerturbationKind::WithoutNumbers,
        PerturbationKind::InstructionMissing,
    ];

    /// Whether this kind takes an intensity level.
    pub fn is_leveled(&self) -> bool {
        matches!(
            self,
            PerturbationKind::WithNumbers | PerturbationKind::WithoutNumbers
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationKind::Original => "original",
            PerturbationKind::WithNumbers => "with-numbers",
            PerturbationKind::WithoutNumbers => "without-numbers",
            PerturbationKind::InstructionMissing => "instruction-missing",
        }
    }
}

impl std::fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<PerturbationKind> {
        match s {
            "original" => Ok(PerturbationKind::Original),
            "with-numbers" => Ok(PerturbationKind::WithNumbers),
            "without-numbers" => Ok(PerturbationKind::WithoutNumbers),
            "instruction-missing" => Ok(PerturbationKind::InstructionMissing),
            other => Err(Error::config(format!(
                "unknown perturbation kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntensityLevel {
    Baseline,
    Low,
    Medium,
    Equal,
    Excessive,
}

impl IntensityLevel {
    pub const ALL: [IntensityLevel; 5] = [
        IntensityLevel::Baseline,
        IntensityLevel::Low,
        IntensityLevel::Medium,
        IntensityLevel::Equal,
        IntensityLevel::Excessive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IntensityLevel::Baseline => "baseline",
            IntensityLevel::Low => "low",
            IntensityLevel::Medium => "medium",
            IntensityLevel::Equal => "equal",
            IntensityLevel::Excessive => "excessive",
        }
    }
}

impl std::fmt::Display for IntensityLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IntensityLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<IntensityLevel> {
        match s {
            "baseline" => Ok(IntensityLevel::Baseline),
            "low" => Ok(IntensityLevel::Low),
            "medium" => Ok(IntensityLevel::Medium),
            "equal" => Ok(IntensityLevel::Equal),
            "excessive" => Ok(IntensityLevel::Excessive),
            other => Err(Error::config(format!("unknown intensity level {other:?}"))),
        }
    }
}

/// Number of distractors to insert at a given level for an N-sentence problem.
pub fn intensity_count(level: IntensityLevel, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::data("intensity_count: problem has zero sentences"));
    }
    Ok(match level {
        IntensityLevel::Baseline => 1,
        IntensityLevel::Low => 2,
        IntensityLevel::Medium => 3,
        IntensityLevel::Equal => n,
        IntensityLevel::Excessive => 2 * n,
    })
}

/// 64-bit FNV-1a over raw bytes: the stable cross-platform hash used for
/// per-problem seed derivation.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive the per-problem generator seed for one variant.
pub fn derive_problem_seed(
    global_seed: u64,
    base_id: &str,
    kind: PerturbationKind,
    level: Option<IntensityLevel>,
) -> u64 {
    let level_name = level.map_or("none", |l| l.as_str());
    fnv1a64(format!("{global_seed}|{base_id}|{kind}|{level_name}").as_bytes())
}

/// The fixed pool of digit-free factual statements used for WithoutNumbers
/// perturbations.
#[derive(Debug, Clone)]
pub struct DistractorPool {
    sentences: Vec<String>,
    pub provenance: String,
}

static EMBEDDED_POOL: LazyLock<DistractorPool> = LazyLock::new(|| {
    DistractorPool::parse(DEFAULT_POOL_TEXT, "embedded-default").expect("embedded pool is valid")
});

impl DistractorPool {
    /// Validate and build a pool: exactly 20 sentences, all digit-free, each
    /// within ±60% of the reference mean sentence length.
    pub fn new(sentences: Vec<String>, provenance: impl Into<String>) -> Result<DistractorPool> {
        if sentences.len() != 20 {
            return Err(Error::data(format!(
                "distractor pool must contain exactly 20 sentences, got {}",
                sentences.len()
            )));
        }
        let min = (REFERENCE_MEAN_SENTENCE_CHARS * 0.4) as usize;
        let max = (REFERENCE_MEAN_SENTENCE_CHARS * 1.6) as usize;
        for (i, s) in sentences.iter().enumerate() {
            if contains_number(s) {
                return Err(Error::data(format!(
                    "pool sentence {} contains a digit: {s:?}",
                    i + 1
                )));
            }
            let len = s.chars().count();
            if !(min..=max).contains(&len) {
                return Err(Error::data(format!(
                    "pool sentence {} is {len} chars, outside {min}..={max}: {s:?}",
                    i + 1
                )));
            }
        }
        Ok(DistractorPool {
            sentences,
            provenance: provenance.into(),
        })
    }

    /// The default embedded pool.
    pub fn embedded() -> &'static DistractorPool {
        &EMBEDDED_POOL
    }

    /// Load a pool file: plain text, one sentence per line, `#` comments.
    pub fn from_file(path: &Path) -> Result<DistractorPool> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DistractorPool::parse(&raw, path.display().to_string())
    }

    fn parse(raw: &str, provenance: impl Into<String>) -> Result<DistractorPool> {
        let sentences: Vec<String> = raw
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        DistractorPool::new(sentences, provenance)
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// SHA-256 (hex) of the pool content, recorded in reports and manifests.
    pub fn content_hash(&self) -> String {
        let mut hasher = sha2::Sha256::new();
        for s in &self.sentences {
            hasher.update(s.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Draw `k` pool sentences: the first `min(k, pool size)` without
/// replacement, any further draws with replacement. Order is draw order.
pub fn sample_without_numbers(
    pool: &DistractorPool,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    if pool.is_empty() {
        return Err(Error::data("empty distractor pool"));
    }
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let distinct = k.min(pool.len());
    for i in 0..distinct {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut draws: Vec<String> = indices[..distinct]
        .iter()
        .map(|&i| pool.sentences[i].clone())
        .collect();
    for _ in distinct..k {
        let i = rng.random_range(0..pool.len());
        draws.push(pool.sentences[i].clone());
    }
    Ok(draws)
}

/// One with-numbers draw: the donor sentence and the donor problem's id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DonorDraw {
    pub text: String,
    pub donor_id: String,
}

/// Result of [`sample_with_numbers`], recording any relaxed constraints.
#[derive(Debug, Clone)]
pub struct SampledWithNumbers {
    pub draws: Vec<DonorDraw>,
    /// The no-duplicates constraint was dropped to fill the request.
    pub relaxed_uniqueness: bool,
    /// The digit-presence constraint was dropped to fill the request.
    pub relaxed_digit: bool,
}

/// Draw `k` digit-bearing non-final sentences from donor problems.
///
/// Each draw picks a uniform donor other than the target, then a uniform
/// non-final sentence of that donor, rejecting candidates that lack a digit,
/// overlap the target too much (content-word Jaccard ≥ 0.25), or duplicate a
/// previous draw. When the attempt budget runs out the uniqueness constraint
/// is relaxed first, then digit presence; the semantic-difference check is
/// never relaxed.
pub fn sample_with_numbers(
    corpus: &Corpus,
    target: &Problem,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampledWithNumbers> {
    let donors: Vec<&Problem> = corpus
        .problems
        .iter()
        .filter(|p| p.id != target.id)
        .collect();
    if donors.is_empty() {
        return Err(Error::data(format!(
            "corpus too small for with-numbers sampling (no donor other than {})",
            target.id
        )));
    }

    let target_tokens = content_words(&target.question);
    let mut out = SampledWithNumbers {
        draws: Vec::with_capacity(k),
        relaxed_uniqueness: false,
        relaxed_digit: false,
    };
    let mut seen: BTreeSet<String> = BTreeSet::new();

    #[derive(Clone, Copy, PartialEq)]
    enum Phase {
        Strict,
        NoUniqueness,
        NoDigit,
    }

    'draws: for _ in 0..k {
        for phase in [Phase::Strict, Phase::NoUniqueness, Phase::NoDigit] {
            for _ in 0..SAMPLE_BUDGET {
                let donor = donors[rng.random_range(0..donors.len())];
                let n = donor.sentence_count();
                if n < 2 {
                    // Single-sentence donors have no non-final sentence.
                    continue;
                }
                let candidate = &donor.sentences[rng.random_range(0..n - 1)];
                if phase != Phase::NoDigit && !candidate.has_number {
                    continue;
                }
                let overlap = jaccard(&target_tokens, &content_words(&candidate.text));
                if overlap >= JACCARD_THRESHOLD {
                    continue;
                }
                if phase == Phase::Strict && seen.contains(&candidate.text) {
                    continue;
                }
                match phase {
                    Phase::Strict => {}
                    Phase::NoUniqueness => out.relaxed_uniqueness = true,
                    Phase::NoDigit => out.relaxed_digit = true,
                }
                seen.insert(candidate.text.clone());
                out.draws.push(DonorDraw {
                    text: candidate.text.clone(),
                    donor_id: donor.id.clone(),
                });
                continue 'draws;
            }
        }
        return Err(Error::data(format!(
            "exhausted sampling budget for with-numbers distractors targeting {} \
             (even after relaxing uniqueness and digit constraints)",
            target.id
        )));
    }
    Ok(out)
}

/// Lowercased content words: alphanumeric tokens of length ≥ 2 that are not
/// stopwords.
fn content_words(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .filter(|t| !STOPWORDS.contains(t))
        .map(str::to_string)
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    intersection as f64 / union as f64
}

static STOPWORDS: &[&str] = &[
    "about", "after", "again", "all", "also", "an", "and", "another", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "both", "but", "by", "can", "could", "did", "do",
    "does", "down", "during", "each", "every", "few", "for", "from", "had", "has", "have",
    "having", "he", "her", "here", "hers", "him", "his", "how", "if", "in", "into", "is", "it",
    "its", "just", "many", "me", "more", "most", "much", "my", "no", "nor", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "our", "out", "over", "own", "per", "she", "so",
    "some", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were",
    "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
    "you", "your",
];

/// One inserted distractor with its placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    /// Insert immediately before original sentence `slot` (0-based); the slot
    /// range excludes the position after the final sentence.
    pub slot: usize,
    #[serde(rename = "text")]
    pub distractor_text: String,
    pub donor_id: Option<String>,
    /// Position among insertions sharing a slot, in draw order. Derived from
    /// list order; not part of the wire format.
    #[serde(skip)]
    pub order_within_slot: usize,
}

/// Seed derivation inputs, recorded for reproducibility.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub global_seed: u64,
    pub base_id: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
}

/// A perturbed variant of one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedProblem {
    pub base_id: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
    pub rendered_text: String,
    pub insertions: Vec<Insertion>,
    pub seed_lineage: SeedLineage,
}

impl PerturbedProblem {
    /// Count of insertions whose text carries a digit — the quantity the
    /// Distracted mock's confusion probability scales with.
    pub fn digit_bearing_insertions(&self) -> usize {
        self.insertions
            .iter()
            .filter(|i| contains_number(&i.distractor_text))
            .count()
    }
}

fn lineage(
    global_seed: u64,
    problem: &Problem,
    kind: PerturbationKind,
    level: Option<IntensityLevel>,
) -> SeedLineage {
    SeedLineage {
        global_seed,
        base_id: problem.id.clone(),
        kind,
        level,
    }
}

/// The unperturbed variant: the whitespace-normalized original question.
pub fn original_variant(problem: &Problem, global_seed: u64) -> PerturbedProblem {
    PerturbedProblem {
        base_id: problem.id.clone(),
        kind: PerturbationKind::Original,
        level: None,
        rendered_text: join_sentences(problem),
        insertions: Vec::new(),
        seed_lineage: lineage(global_seed, problem, PerturbationKind::Original, None),
    }
}

/// Remove the final sentence — the question instruction.
pub fn drop_question_instruction(problem: &Problem, global_seed: u64) -> Result<PerturbedProblem> {
    if problem.sentence_count() < 2 {
        return Err(Error::data(format!(
            "problem {} has fewer than 2 sentences; nothing would remain without its question",
            problem.id
        )));
    }
    let kept: Vec<&str> = problem.sentences[..problem.sentence_count() - 1]
        .iter()
        .map(|s| s.text.as_str())
        .collect();
    Ok(PerturbedProblem {
        base_id: problem.id.clone(),
        kind: PerturbationKind::InstructionMissing,
        level: None,
        rendered_text: kept.join(" "),
        insertions: Vec::new(),
        seed_lineage: lineage(
            global_seed,
            problem,
            PerturbationKind::InstructionMissing,
            None,
        ),
    })
}

/// Assign each distractor a uniform slot in 0..N-1 and interleave.
///
/// Distractors sharing a slot keep draw order; the final original sentence is
/// always last in the rendering.
pub fn insert_distractors(
    problem: &Problem,
    distractors: Vec<(String, Option<String>)>,
    kind: PerturbationKind,
    level: Option<IntensityLevel>,
    global_seed: u64,
    rng: &mut ChaCha8Rng,
) -> PerturbedProblem {
    let n = problem.sentence_count();
    let mut per_slot: HashMap<usize, usize> = HashMap::new();
    let mut insertions: Vec<Insertion> = Vec::with_capacity(distractors.len());
    for (text, donor_id) in distractors {
        let slot = rng.random_range(0..n);
        let order = per_slot.entry(slot).or_insert(0);
        insertions.push(Insertion {
            slot,
            distractor_text: text,
            donor_id,
            order_within_slot: *order,
        });
        *order += 1;
    }

    let mut parts: Vec<&str> = Vec::with_capacity(n + insertions.len());
    for (idx, sentence) in problem.sentences.iter().enumerate() {
        for ins in insertions.iter().filter(|i| i.slot == idx) {
            parts.push(&ins.distractor_text);
        }
        parts.push(&sentence.text);
    }

    PerturbedProblem {
        base_id: problem.id.clone(),
        kind,
        level,
        rendered_text: parts.join(" "),
        insertions,
        seed_lineage: lineage(global_seed, problem, kind, level),
    }
}

/// Remove the recorded insertions from a rendered text, reconstructing the
/// whitespace-normalized original question.
pub fn strip_insertions(rendered: &str, insertions: &[Insertion]) -> Result<String> {
    let mut ordered: Vec<&Insertion> = insertions.iter().collect();
    ordered.sort_by_key(|i| (i.slot, i.order_within_slot));

    let mut text = rendered.to_string();
    let mut cursor = 0usize;
    for ins in ordered {
        let needle = ins.distractor_text.as_str();
        let Some(rel) = text[cursor..].find(needle) else {
            return Err(Error::data(format!(
                "insertion text not found while inverting: {needle:?}"
            )));
        };
        let pos = cursor + rel;
        let mut end = pos + needle.len();
        if text[end..].starts_with(' ') {
            end += 1;
        }
        text.replace_range(pos..end, "");
        cursor = pos;
    }
    Ok(text.trim().to_string())
}

fn join_sentences(problem: &Problem) -> String {
    problem
        .sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A problem skipped during dataset construction, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exclusion {
    pub base_id: String,
    pub kind: PerturbationKind,
    pub level: Option<IntensityLevel>,
    pub reason: String,
}

/// A sampling-constraint relaxation that occurred for one problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Relaxation {
    pub base_id: String,
    pub relaxed_uniqueness: bool,
    pub relaxed_digit: bool,
}

/// Result of building one variant dataset.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    /// Variants sorted by base id.
    pub items: Vec<PerturbedProblem>,
    pub exclusions: Vec<Exclusion>,
    pub relaxations: Vec<Relaxation>,
}

/// Build the full variant dataset for one (kind, level) combination.
///
/// Problems that cannot receive the variant (for example single-sentence
/// problems under InstructionMissing, or targets whose donor sampling
/// exhausts its budget) are skipped and reported as exclusions rather than
/// failing the build.
pub fn build_variant_dataset(
    corpus: &Corpus,
    kind: PerturbationKind,
    level: Option<IntensityLevel>,
    global_seed: u64,
    pool: &DistractorPool,
) -> Result<BuildOutput> {
    match (kind.is_leveled(), level) {
        (true, None) => {
            return Err(Error::config(format!(
                "kind {kind} requires an intensity level"
            )))
        }
        (false, Some(l)) => {
            return Err(Error::config(format!(
                "kind {kind} does not take an intensity level (got {l})"
            )))
        }
        _ => {}
    }
    if kind == PerturbationKind::WithNumbers && corpus.len() < 2 {
        return Err(Error::data(
            "with-numbers perturbation needs at least 2 problems for donor sampling",
        ));
    }

    let mut out = BuildOutput {
        items: Vec::with_capacity(corpus.len()),
        exclusions: Vec::new(),
        relaxations: Vec::new(),
    };

    for problem in &corpus.problems {
        let seed = derive_problem_seed(global_seed, &problem.id, kind, level);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match kind {
            PerturbationKind::Original => {
                out.items.push(original_variant(problem, global_seed));
            }
            PerturbationKind::InstructionMissing => {
                match drop_question_instruction(problem, global_seed) {
                    Ok(item) => out.items.push(item),
                    Err(e) => out.exclusions.push(Exclusion {
                        base_id: problem.id.clone(),
                        kind,
                        level,
                        reason: e.to_string(),
                    }),
                }
            }
            PerturbationKind::WithoutNumbers => {
                let level_v = level.expect("validated above");
                let k = intensity_count(level_v, problem.sentence_count())?;
                let draws = sample_without_numbers(pool, k, &mut rng)?;
                let distractors = draws.into_iter().map(|t| (t, None)).collect();
                out.items.push(insert_distractors(
                    problem,
                    distractors,
                    kind,
                    level,
                    global_seed,
                    &mut rng,
                ));
            }
            PerturbationKind::WithNumbers => {
                let level_v = level.expect("validated above");
                let k = intensity_count(level_v, problem.sentence_count())?;
                match sample_with_numbers(corpus, problem, k, &mut rng) {
                    Ok(sampled) => {
                        if sampled.relaxed_uniqueness || sampled.relaxed_digit {
                            log::warn!(
                                "relaxed sampling constraints for {} (uniqueness: {}, digit: {})",
                                problem.id,
                                sampled.relaxed_uniqueness,
                                sampled.relaxed_digit
                            );
                            out.relaxations.push(Relaxation {
                                base_id: problem.id.clone(),
                                relaxed_uniqueness: sampled.relaxed_uniqueness,
                                relaxed_digit: sampled.relaxed_digit,
                            });
                        }
                        let distractors = sampled
                            .draws
                            .into_iter()
                            .map(|d| (d.text, Some(d.donor_id)))
                            .collect();
                        out.items.push(insert_distractors(
                            problem,
                            distractors,
                            kind,
                            level,
                            global_seed,
                            &mut rng,
                        ));
                    }
                    Err(e) => out.exclusions.push(Exclusion {
                        base_id: problem.id.clone(),
                        kind,
                        level,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }

    out.items.sort_by(|a, b| a.base_id.cmp(&b.base_id));
    out.exclusions.sort_by(|a, b| a.base_id.cmp(&b.base_id));
    out.relaxations.sort_by(|a, b| a.base_id.cmp(&b.base_id));
    Ok(out)
}

/// Write variants as line-delimited JSON.
pub fn write_variants(items: &[PerturbedProblem], path: &Path) -> Result<()> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::json(format!("variant {}", item.base_id), e))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a variant file, restoring per-slot insertion order from list order.
pub fn load_variants(path: &Path) -> Result<Vec<PerturbedProblem>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (line_no, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut item: PerturbedProblem = serde_json::from_str(line).map_err(|e| {
            Error::data(format!(
                "{}: line {}: invalid variant record: {e}",
                path.display(),
                line_no + 1
            ))
        })?;
        let mut per_slot: HashMap<usize, usize> = HashMap::new();
        for ins in &mut item.insertions {
            let order = per_slot.entry(ins.slot).or_insert(0);
            ins.order_within_slot = *order;
            *order += 1;
        }
        items.push(item);
    }
    Ok(items)
}

/// Write the sidecar exclusion report.
pub fn write_exclusions(exclusions: &[Exclusion], path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in exclusions {
        let line = serde_json::to_string(e)
            .map_err(|err| Error::json(format!("exclusion {}", e.base_id), err))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_exclusions(path: &Path) -> Result<Vec<Exclusion>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (line_no, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: Exclusion = serde_json::from_str(line).map_err(|err| {
            Error::data(format!(
                "{}: line {}: invalid exclusion record: {err}",
                path.display(),
                line_no + 1
            ))
        })?;
        out.push(e);
    }
    Ok(out)
}
