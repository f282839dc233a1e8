//! The evaluation loop: a bounded worker pool that prompts a backend for
//! each perturbed item, grades the reply, and appends records to disk so an
//! interrupted run can resume where it stopped.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::grader::{extract_answer, grade};
use crate::perturb::PerturbedProblem;
use crate::report::{load_records, write_records, EvalRecord};

use super::http::{cached_complete, RateLimiter};
use super::mock::{mock_complete, MockPolicy};
use super::{cache_key, render_prompt, EndpointConfig, PromptTemplate};

/// Which backend answers the prompts.
#[derive(Debug, Clone)]
pub enum BackendMode {
    /// Live requests through the on-disk completion cache.
    Http { cache_dir: std::path::PathBuf },
    /// Offline mock; never touches the network or the cache directory.
    Mock(MockPolicy),
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Worker threads; at least 1.
    pub concurrency: usize,
    /// Grading tolerance; 0.0 means exact rational equality.
    pub tolerance: f64,
    /// Keep records already on disk and skip their items. When false, an
    /// existing records file is replaced.
    pub resume: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            concurrency: 1,
            tolerance: 0.0,
            resume: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    /// Items evaluated in this invocation.
    pub evaluated: usize,
    /// Items skipped because a record already existed.
    pub resumed: usize,
    /// Records in the file after the run (may include other models' rows).
    pub total_records: usize,
}

fn record_key(r: &EvalRecord) -> (String, String, String, String) {
    (
        r.base_id.clone(),
        r.kind.to_string(),
        r.level.map(|l| l.to_string()).unwrap_or_default(),
        r.model_name.clone(),
    )
}

fn item_key(item: &PerturbedProblem, model: &str) -> (String, String, String, String) {
    (
        item.base_id.clone(),
        item.kind.to_string(),
        item.level.map(|l| l.to_string()).unwrap_or_default(),
        model.to_string(),
    )
}

fn evaluate_one(
    item: &PerturbedProblem,
    corpus: &Corpus,
    endpoint: &EndpointConfig,
    template: &PromptTemplate,
    mode: &BackendMode,
    limiter: &RateLimiter,
    tolerance: f64,
) -> Result<EvalRecord> {
    let prompt = render_prompt(template, &item.rendered_text)?;
    let key = cache_key(endpoint, &prompt);
    let completion = match mode {
        BackendMode::Http { cache_dir } => {
            limiter.wait();
            cached_complete(cache_dir, endpoint, &prompt)?
        }
        BackendMode::Mock(policy) => mock_complete(policy, item, corpus, key, prompt)?,
    };
    let gold = corpus
        .get(&item.base_id)
        .ok_or_else(|| {
            Error::data(format!(
                "evaluation: base problem {} not in corpus {}",
                item.base_id, corpus.name
            ))
        })?
        .gold;
    let extracted = extract_answer(&completion.response_text);
    let correct = grade(&extracted, &gold, tolerance);
    Ok(EvalRecord {
        base_id: item.base_id.clone(),
        kind: item.kind,
        level: item.level,
        model_name: endpoint.model_name.clone(),
        extracted,
        correct,
        latency_ms: completion.latency_ms,
        attempt_count: completion.attempt_count,
    })
}

/// Evaluate every item against the backend, appending graded records to
/// `records_path`.
///
/// Items already present in the file (same base id, kind, level, and model)
/// are skipped when resuming. Each record is flushed as soon as it is
/// graded, so a failed run keeps everything finished before the failure; the
/// first error stops the workers and is returned. On success the file is
/// rewritten atomically in sorted order.
pub fn run_eval(
    items: &[PerturbedProblem],
    corpus: &Corpus,
    endpoint: &EndpointConfig,
    template: &PromptTemplate,
    mode: &BackendMode,
    options: &EvalOptions,
    records_path: &Path,
) -> Result<RunSummary> {
    endpoint.validate()?;
    if options.concurrency == 0 {
        return Err(Error::config("concurrency must be at least 1"));
    }

    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item_key(item, &endpoint.model_name)) {
            return Err(Error::data(format!(
                "duplicate evaluation item: {} {} {}",
                item.base_id,
                item.kind,
                item.level
                    .map_or_else(|| "-".to_string(), |l| l.to_string())
            )));
        }
        if corpus.get(&item.base_id).is_none() {
            return Err(Error::data(format!(
                "evaluation: base problem {} not in corpus {}",
                item.base_id, corpus.name
            )));
        }
    }

    if !options.resume && records_path.exists() {
        std::fs::remove_file(records_path).map_err(|e| Error::io(records_path, e))?;
    }
    let existing = if records_path.exists() {
        load_records(records_path)?
    } else {
        Vec::new()
    };
    let done: BTreeSet<_> = existing.iter().map(record_key).collect();
    let pending: Vec<&PerturbedProblem> = items
        .iter()
        .filter(|item| !done.contains(&item_key(item, &endpoint.model_name)))
        .collect();
    let resumed = items.len() - pending.len();
    if resumed > 0 {
        log::info!(
            "resuming: {resumed} of {} items already recorded",
            items.len()
        );
    }

    if !pending.is_empty() {
        if let Some(parent) = records_path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(records_path)
            .map_err(|e| Error::io(records_path, e))?;
        let writer = Mutex::new(std::io::BufWriter::new(file));
        let queue: Mutex<VecDeque<&PerturbedProblem>> =
            Mutex::new(pending.iter().copied().collect());
        let stop = AtomicBool::new(false);
        let first_error: Mutex<Option<Error>> = Mutex::new(None);
        let completed = AtomicUsize::new(0);
        let limiter = RateLimiter::new(endpoint.requests_per_minute);
        let total = pending.len();
        let workers = options.concurrency.min(total).max(1);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let item = match queue.lock().expect("queue poisoned").pop_front() {
                        Some(item) => item,
                        None => break,
                    };
                    let outcome = evaluate_one(
                        item,
                        corpus,
                        endpoint,
                        template,
                        mode,
                        &limiter,
                        options.tolerance,
                    )
                    .and_then(|record| {
                        let line = serde_json::to_string(&record).map_err(|e| {
                            Error::json(format!("eval record {}", record.base_id), e)
                        })?;
                        let mut w = writer.lock().expect("writer poisoned");
                        writeln!(w, "{line}").map_err(|e| Error::io(records_path, e))?;
                        w.flush().map_err(|e| Error::io(records_path, e))?;
                        Ok(())
                    });
                    match outcome {
                        Ok(()) => {
                            let n = completed.fetch_add(1, Ordering::SeqCst) + 1;
                            log::info!("evaluated {n}/{total}");
                        }
                        Err(e) => {
                            let mut slot = first_error.lock().expect("error slot poisoned");
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            stop.store(true, Ordering::SeqCst);
                            break;
                        }
                    }
                });
            }
        });

        if let Some(error) = first_error.into_inner().expect("error slot poisoned") {
            log::warn!(
                "evaluation stopped after {} of {total} items; finished records are preserved in {}",
                completed.load(Ordering::SeqCst),
                records_path.display()
            );
            return Err(error);
        }
    }

    // Success: rewrite the file sorted and atomically.
    let mut merged = load_records(records_path)?;
    merged.sort_by_key(record_key);
    let tmp = records_path.with_extension("jsonl.tmp");
    write_records(&merged, &tmp)?;
    std::fs::rename(&tmp, records_path).map_err(|e| Error::io(records_path, e))?;

    Ok(RunSummary {
        evaluated: pending.len(),
        resumed,
        total_records: merged.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::mock::ScriptedResponses;
    use crate::corpus::{Problem, SourceFormat};
    use crate::number::CanonicalNumber;
    use crate::perturb::original_variant;
    use crate::segmenter::Segmenter;
    use perturbench_testserver::{Action, ScriptedServer};
    use std::sync::Arc;

    fn corpus_of(n: usize) -> Corpus {
        let segmenter = Segmenter::default();
        let problems = (0..n)
            .map(|i| {
                let question = format!(
                    "Vera packed {} boxes on day one. She packed {} more boxes later. How many boxes did she pack?",
                    i + 2,
                    i + 5
                );
                Problem {
                    id: format!("r-{i:02}"),
                    question: question.clone(),
                    sentences: segmenter.segment(&question),
                    gold: CanonicalNumber::from_integer((2 * i + 7) as i128),
                    source_format: SourceFormat::Generic,
                }
            })
            .collect();
        Corpus {
            name: "runner-fixture".to_string(),
            format: SourceFormat::Generic,
            problems,
        }
    }

    fn originals(corpus: &Corpus) -> Vec<PerturbedProblem> {
        corpus
            .problems
            .iter()
            .map(|p| original_variant(p, 7))
            .collect()
    }

    fn endpoint(model: &str) -> EndpointConfig {
        let mut config = EndpointConfig::new("mock://offline", model);
        config.retry_base_ms = 10;
        config
    }

    #[test]
    fn gold_oracle_run_grades_everything_correct() {
        let corpus = corpus_of(5);
        let items = originals(&corpus);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let summary = run_eval(
            &items,
            &corpus,
            &endpoint("oracle"),
            &PromptTemplate::default(),
            &BackendMode::Mock(MockPolicy::GoldOracle),
            &EvalOptions::default(),
            &path,
        )
        .unwrap();
        assert_eq!(summary.evaluated, 5);
        assert_eq!(summary.resumed, 0);
        assert_eq!(summary.total_records, 5);
        let records = load_records(&path).unwrap();
        assert_eq!(records.len(), 5);
        assert!(records.iter().all(|r| r.correct));
        let ids: Vec<_> = records.iter().map(|r| r.base_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted, "records are rewritten in sorted order");
    }

    #[test]
    fn second_run_resumes_and_evaluates_nothing() {
        let corpus = corpus_of(4);
        let items = originals(&corpus);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let ep = endpoint("oracle");
        let mode = BackendMode::Mock(MockPolicy::GoldOracle);
        run_eval(
            &items,
            &corpus,
            &ep,
            &PromptTemplate::default(),
            &mode,
            &EvalOptions::default(),
            &path,
        )
        .unwrap();
        let before = std::fs::read_to_string(&path).unwrap();
        let summary = run_eval(
            &items,
            &corpus,
            &ep,
            &PromptTemplate::default(),
            &mode,
            &EvalOptions::default(),
            &path,
        )
        .unwrap();
        assert_eq!(summary.evaluated, 0);
        assert_eq!(summary.resumed, 4);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), before);
    }

    #[test]
    fn failure_preserves_finished_records_and_resume_completes_the_rest() {
        let corpus = corpus_of(4);
        let items = originals(&corpus);
        let ep = endpoint("scripted-model");
        let template = PromptTemplate::default();

        // Script responses for the first three items only.
        let keyed: Vec<(String, String)> = items
            .iter()
            .take(3)
            .map(|item| {
                let prompt = render_prompt(&template, &item.rendered_text).unwrap();
                let gold = corpus.get(&item.base_id).unwrap().gold;
                (
                    cache_key(&ep, &prompt),
                    format!("the total is \\boxed{{{}}}", gold.render()),
                )
            })
            .collect();
        let partial = ScriptedResponses::from_pairs(keyed.clone());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let options = EvalOptions::default();
        let err = run_eval(
            &items,
            &corpus,
            &ep,
            &template,
            &BackendMode::Mock(MockPolicy::Scripted(Arc::new(partial))),
            &options,
            &path,
        )
        .unwrap_err();
        assert!(err.to_string().contains("no scripted response"));
        let kept = load_records(&path).unwrap();
        assert_eq!(kept.len(), 3, "finished records survive the failure");

        // Add the missing response and resume: only the fourth item runs.
        let mut complete = keyed;
        let last = &items[3];
        let prompt = render_prompt(&template, &last.rendered_text).unwrap();
        let gold = corpus.get(&last.base_id).unwrap().gold;
        complete.push((
            cache_key(&ep, &prompt),
            format!("the total is \\boxed{{{}}}", gold.render()),
        ));
        let summary = run_eval(
            &items,
            &corpus,
            &ep,
            &template,
            &BackendMode::Mock(MockPolicy::Scripted(Arc::new(
                ScriptedResponses::from_pairs(complete),
            ))),
            &options,
            &path,
        )
        .unwrap();
        assert_eq!(summary.evaluated, 1);
        assert_eq!(summary.resumed, 3);
        assert_eq!(summary.total_records, 4);
        assert!(load_records(&path).unwrap().iter().all(|r| r.correct));
    }

    #[test]
    fn duplicate_items_are_rejected_up_front() {
        let corpus = corpus_of(2);
        let mut items = originals(&corpus);
        items.push(items[0].clone());
        let dir = tempfile::tempdir().unwrap();
        let err = run_eval(
            &items,
            &corpus,
            &endpoint("m"),
            &PromptTemplate::default(),
            &BackendMode::Mock(MockPolicy::GoldOracle),
            &EvalOptions::default(),
            &dir.path().join("records.jsonl"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {err}");
    }

    #[test]
    fn unknown_base_id_is_rejected_up_front() {
        let corpus = corpus_of(2);
        let other = corpus_of(3);
        let items = originals(&other); // r-02 not in the 2-problem corpus
        let dir = tempfile::tempdir().unwrap();
        let err = run_eval(
            &items,
            &corpus,
            &endpoint("m"),
            &PromptTemplate::default(),
            &BackendMode::Mock(MockPolicy::GoldOracle),
            &EvalOptions::default(),
            &dir.path().join("records.jsonl"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("r-02"), "got: {err}");
    }

    #[test]
    fn concurrent_workers_produce_complete_sorted_output() {
        let corpus = corpus_of(20);
        let items = originals(&corpus);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let options = EvalOptions {
            concurrency: 4,
            ..EvalOptions::default()
        };
        let summary = run_eval(
            &items,
            &corpus,
            &endpoint("oracle"),
            &PromptTemplate::default(),
            &BackendMode::Mock(MockPolicy::GoldOracle),
            &options,
            &path,
        )
        .unwrap();
        assert_eq!(summary.evaluated, 20);
        let records = load_records(&path).unwrap();
        assert_eq!(records.len(), 20);
        let keys: Vec<_> = records.iter().map(record_key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn fresh_run_replaces_existing_records() {
        let corpus = corpus_of(2);
        let items = originals(&corpus);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        std::fs::write(&path, "not a record\n").unwrap();
        let options = EvalOptions {
            resume: false,
            ..EvalOptions::default()
        };
        let summary = run_eval(
            &items,
            &corpus,
            &endpoint("oracle"),
            &PromptTemplate::default(),
            &BackendMode::Mock(MockPolicy::GoldOracle),
            &options,
            &path,
        )
        .unwrap();
        assert_eq!(summary.evaluated, 2);
        assert_eq!(load_records(&path).unwrap().len(), 2);
    }

    #[test]
    fn http_mode_runs_through_the_cache() {
        let corpus = corpus_of(2);
        let items = originals(&corpus);
        let golds: Vec<String> = items
            .iter()
            .map(|i| corpus.get(&i.base_id).unwrap().gold.render())
            .collect();
        let server = ScriptedServer::start(vec![
            Action::ok_completion(&format!("sum: \\boxed{{{}}}", golds[0])),
            Action::ok_completion(&format!("sum: \\boxed{{{}}}", golds[1])),
        ]);
        let mut ep = EndpointConfig::new(server.base_url(), "live-model");
        ep.retry_base_ms = 10;
        let dir = tempfile::tempdir().unwrap();
        let cache_dir = dir.path().join("cache");
        let records = dir.path().join("records.jsonl");
        let mode = BackendMode::Http {
            cache_dir: cache_dir.clone(),
        };
        let summary = run_eval(
            &items,
            &corpus,
            &ep,
            &PromptTemplate::default(),
            &mode,
            &EvalOptions::default(),
            &records,
        )
        .unwrap();
        assert_eq!(summary.evaluated, 2);
        assert!(load_records(&records).unwrap().iter().all(|r| r.correct));
        assert_eq!(server.request_count(), 2);

        // A fresh evaluation with the same cache sends zero new requests.
        std::fs::remove_file(&records).unwrap();
        let summary = run_eval(
            &items,
            &corpus,
            &ep,
            &PromptTemplate::default(),
            &mode,
            &EvalOptions::default(),
            &records,
        )
        .unwrap();
        assert_eq!(summary.evaluated, 2);
        assert_eq!(server.request_count(), 2, "cache replay, no new requests");
    }
}
