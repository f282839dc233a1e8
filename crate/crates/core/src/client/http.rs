//! HTTP chat-completion backend: request shaping, bounded retries with
//! exponential backoff, client-side rate limiting, and an on-disk response
//! cache keyed by content address.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use ureq::Agent;

use crate::error::{Error, Result};

use super::{cache_key, Backend, CompletionRecord, EndpointConfig, Prompt};

/// Delay before retry number `attempt` (0-based): `base · 2^attempt`,
/// stretched by up to 25% jitter. With `jitter` in [0, 1) the sequence is
/// strictly increasing regardless of the jitter draws, since the next
/// un-jittered delay is double and the stretch is bounded by 1.25.
pub fn backoff_delay(base_ms: u64, attempt: u32, jitter: f64) -> Duration {
    let factor = (1u64 << attempt.min(20)) as f64;
    let ms = base_ms as f64 * factor * (1.0 + 0.25 * jitter);
    Duration::from_secs_f64(ms / 1000.0)
}

/// Spaces requests at least `60/requests_per_minute` seconds apart across
/// all threads sharing this limiter.
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: Option<u32>) -> Self {
        let min_interval = match requests_per_minute {
            Some(rpm) if rpm > 0 => Duration::from_secs_f64(60.0 / rpm as f64),
            _ => Duration::ZERO,
        };
        RateLimiter {
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    /// Block until this caller's slot arrives.
    pub fn wait(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let scheduled = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let scheduled = if *slot > now { *slot } else { now };
            *slot = scheduled + self.min_interval;
            scheduled
        };
        let now = Instant::now();
        if scheduled > now {
            std::thread::sleep(scheduled - now);
        }
    }
}

enum AttemptOutcome {
    Success(String),
    /// Worth retrying: 429, 5xx, timeout, or connection failure.
    Retryable(String),
    Fatal(Error),
}

fn classify_response(response: &mut ureq::http::Response<ureq::Body>) -> AttemptOutcome {
    let status = response.status().as_u16();
    if (200..300).contains(&status) {
        let raw = match response.body_mut().read_to_string() {
            Ok(raw) => raw,
            Err(e) => return AttemptOutcome::Retryable(format!("reading response body: {e}")),
        };
        let value: serde_json::Value = match serde_json::from_str(&raw) {
            Ok(v) => v,
            Err(e) => {
                return AttemptOutcome::Fatal(Error::protocol(format!(
                    "response body is not valid JSON: {e}"
                )))
            }
        };
        match value["choices"][0]["message"]["content"].as_str() {
            Some(text) => AttemptOutcome::Success(text.to_string()),
            None => AttemptOutcome::Fatal(Error::protocol(
                "response JSON lacks choices[0].message.content",
            )),
        }
    } else if status == 429 || (500..600).contains(&status) {
        AttemptOutcome::Retryable(format!("endpoint returned status {status}"))
    } else {
        AttemptOutcome::Fatal(Error::transport(format!(
            "endpoint returned non-retryable status {status}"
        )))
    }
}

fn classify_error(error: ureq::Error) -> AttemptOutcome {
    match &error {
        ureq::Error::Timeout(_) => AttemptOutcome::Retryable(format!("request timed out: {error}")),
        ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            AttemptOutcome::Retryable(format!("connection error: {error}"))
        }
        _ => AttemptOutcome::Fatal(Error::transport(format!("request failed: {error}"))),
    }
}

fn resolve_api_key(config: &EndpointConfig) -> Result<Option<String>> {
    match &config.api_key_env {
        None => Ok(None),
        Some(name) => match std::env::var(name) {
            Ok(value) => Ok(Some(value)),
            Err(_) => Err(Error::config(format!(
                "api_key_env names environment variable {name}, which is not set"
            ))),
        },
    }
}

/// Send one chat completion with retries.
///
/// Retries 429, 5xx, timeouts, and connection failures up to `max_retries`
/// extra attempts with exponential backoff; any other HTTP status or a
/// malformed response body fails immediately. Exhausting retries is a
/// transport error carrying the last failure.
pub fn complete(config: &EndpointConfig, prompt: &Prompt) -> Result<CompletionRecord> {
    config.validate()?;
    let api_key = resolve_api_key(config)?;

    let agent: Agent = Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));

    let mut messages = Vec::new();
    if let Some(system) = &prompt.system {
        messages.push(serde_json::json!({"role": "system", "content": system}));
    }
    messages.push(serde_json::json!({"role": "user", "content": prompt.user}));
    let body = serde_json::json!({
        "model": config.model_name,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
        "messages": messages,
    });

    let mut last_failure = String::new();
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            let jitter: f64 = rand::rng().random();
            let delay = backoff_delay(config.retry_base_ms, attempt - 1, jitter);
            log::debug!("retrying in {delay:?} after: {last_failure}");
            std::thread::sleep(delay);
        }
        let started = Instant::now();
        let mut request = agent.post(&url);
        if let Some(key) = &api_key {
            request = request.header("authorization", format!("Bearer {key}"));
        }
        let outcome = match request.send_json(&body) {
            Ok(mut response) => classify_response(&mut response),
            Err(e) => classify_error(e),
        };
        match outcome {
            AttemptOutcome::Success(response_text) => {
                // Whole milliseconds, so the record is identical before and
                // after a trip through the cache.
                let latency_ms = Duration::from_millis(started.elapsed().as_millis() as u64);
                return Ok(CompletionRecord {
                    cache_key: cache_key(config, prompt),
                    prompt: prompt.clone(),
                    response_text,
                    latency_ms,
                    attempt_count: attempt + 1,
                    backend: Backend::Http,
                });
            }
            AttemptOutcome::Retryable(reason) => {
                log::warn!("attempt {} failed: {reason}", attempt + 1);
                last_failure = reason;
            }
            AttemptOutcome::Fatal(error) => return Err(error),
        }
    }
    Err(Error::transport(format!(
        "giving up after {} attempts; last failure: {last_failure}",
        config.max_retries + 1
    )))
}

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

fn cache_path(cache_dir: &Path, key: &str) -> PathBuf {
    cache_dir.join(&key[..2]).join(format!("{key}.json"))
}

/// [`complete`] with an on-disk cache.
///
/// Entries are sharded by the first two hex digits of the cache key and
/// written atomically (temp file + rename). A corrupt entry is ignored with
/// a warning and regenerated; it never aborts the run.
pub fn cached_complete(
    cache_dir: &Path,
    config: &EndpointConfig,
    prompt: &Prompt,
) -> Result<CompletionRecord> {
    let key = cache_key(config, prompt);
    let path = cache_path(cache_dir, &key);

    if let Ok(raw) = std::fs::read_to_string(&path) {
        match serde_json::from_str::<CompletionRecord>(&raw) {
            Ok(record) if record.cache_key == key => {
                log::debug!("cache hit for {key}");
                return Ok(record);
            }
            Ok(record) => {
                log::warn!(
                    "cache entry {} holds key {}; regenerating",
                    path.display(),
                    record.cache_key
                );
            }
            Err(e) => {
                log::warn!("corrupt cache entry {} ({e}); regenerating", path.display());
            }
        }
    }

    let record = complete(config, prompt)?;
    let shard = path.parent().expect("cache path has a shard directory");
    std::fs::create_dir_all(shard).map_err(|e| Error::io(shard, e))?;
    let tmp = shard.join(format!(
        "{key}.{}.{}.tmp",
        std::process::id(),
        TMP_SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    let json =
        serde_json::to_string(&record).map_err(|e| Error::json(format!("cache entry {key}"), e))?;
    std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(record)
}
