//! Offline mock backends: a gold oracle, a tunable distractible solver whose
//! error rate grows with injected digit-bearing material, and a scripted
//! responder for replaying fixtures.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::perturb::{fnv1a64, PerturbedProblem};

use super::{Backend, CompletionRecord, Prompt};

/// Scripted fixture responses addressed by cache key.
#[derive(Debug, Clone, Default)]
pub struct ScriptedResponses {
    map: BTreeMap<String, String>,
}

impl ScriptedResponses {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        ScriptedResponses {
            map: pairs.into_iter().collect(),
        }
    }

    /// Load `{"cache_key": …, "response_text": …}` JSON lines.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = BTreeMap::new();
        for (line_no, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
                Error::data(format!(
                    "{}: line {}: invalid scripted response: {e}",
                    path.display(),
                    line_no + 1
                ))
            })?;
            let key = value["cache_key"].as_str().ok_or_else(|| {
                Error::data(format!(
                    "{}: line {}: missing string field `cache_key`",
                    path.display(),
                    line_no + 1
                ))
            })?;
            let text = value["response_text"].as_str().ok_or_else(|| {
                Error::data(format!(
                    "{}: line {}: missing string field `response_text`",
                    path.display(),
                    line_no + 1
                ))
            })?;
            if map.insert(key.to_string(), text.to_string()).is_some() {
                return Err(Error::data(format!(
                    "{}: duplicate scripted response for cache key {key}",
                    path.display()
                )));
            }
        }
        if map.is_empty() {
            return Err(Error::data(format!(
                "no scripted responses in {}",
                path.display()
            )));
        }
        Ok(ScriptedResponses { map })
    }

    pub fn get(&self, cache_key: &str) -> Result<&str> {
        self.map
            .get(cache_key)
            .map(String::as_str)
            .ok_or_else(|| Error::data(format!("no scripted response for cache key {cache_key}")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// What the mock backend does with each item.
#[derive(Debug, Clone)]
pub enum MockPolicy {
    /// Always answers with the gold value.
    GoldOracle,
    /// With probability `min(1, strength · d/(d+2))`, where `d` is the
    /// number of digit-bearing insertions in the item, answers with the
    /// first number found in an inserted distractor instead of gold. Error
    /// rate climbs with injected numeric material and is zero on clean
    /// text. `strength` is meaningful in [0, 1].
    Distracted { strength: f64 },
    /// Replays fixture responses by cache key.
    Scripted(Arc<ScriptedResponses>),
}

impl MockPolicy {
    pub fn distracted() -> Self {
        MockPolicy::Distracted { strength: 1.0 }
    }
}

fn answer_text(rendered: &str) -> String {
    format!("Working through the quantities step by step gives \\boxed{{{rendered}}}.")
}

/// The first number appearing in the first digit-bearing insertion — the
/// value the distracted mock latches onto. Returns None when no insertion
/// carries a digit.
fn first_distractor_number(item: &PerturbedProblem) -> Option<String> {
    for insertion in &item.insertions {
        let text = &insertion.distractor_text;
        if let Some(start) = text.find(|c: char| c.is_ascii_digit()) {
            let rest = &text[start..];
            let mut end = 0;
            let mut seen_dot = false;
            for (i, c) in rest.char_indices() {
                if c.is_ascii_digit() {
                    end = i + 1;
                } else if c == '.'
                    && !seen_dot
                    && rest[i + 1..].starts_with(|d: char| d.is_ascii_digit())
                {
                    seen_dot = true;
                } else {
                    break;
                }
            }
            return Some(rest[..end].to_string());
        }
    }
    None
}

/// Deterministic per-item seed for mock behavior, independent of the seed
/// stream used for perturbation sampling.
fn mock_seed(item: &PerturbedProblem) -> u64 {
    let level = item.level.map_or("none", |l| l.as_str());
    let input = format!(
        "{}|{}|{}|{}|mock",
        item.seed_lineage.global_seed,
        item.base_id,
        item.kind.as_str(),
        level
    );
    fnv1a64(input.as_bytes())
}

/// Produce a completion for one item without any network access.
///
/// Identical inputs produce byte-identical records.
pub fn mock_complete(
    policy: &MockPolicy,
    item: &PerturbedProblem,
    corpus: &Corpus,
    cache_key: String,
    prompt: Prompt,
) -> Result<CompletionRecord> {
    let lookup_gold = || {
        corpus.get(&item.base_id).map(|p| p.gold).ok_or_else(|| {
            Error::data(format!(
                "mock backend: base problem {} not in corpus {}",
                item.base_id, corpus.name
            ))
        })
    };
    let response_text = match policy {
        MockPolicy::Scripted(responses) => responses.get(&cache_key)?.to_string(),
        MockPolicy::GoldOracle => answer_text(&lookup_gold()?.render()),
        MockPolicy::Distracted { strength } => {
            let gold = lookup_gold()?;
            let mut rng = ChaCha8Rng::seed_from_u64(mock_seed(item));
            let d = item.digit_bearing_insertions() as f64;
            let p_wrong = (strength * d / (d + 2.0)).clamp(0.0, 1.0);
            let distractor_number = first_distractor_number(item);
            match distractor_number {
                Some(number) if rng.random::<f64>() < p_wrong => answer_text(&number),
                _ => answer_text(&gold.render()),
            }
        }
    };
    Ok(CompletionRecord {
        cache_key,
        prompt,
        response_text,
        latency_ms: Duration::ZERO,
        attempt_count: 1,
        backend: Backend::Mock,
    })
}
