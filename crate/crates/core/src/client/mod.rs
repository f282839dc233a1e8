//! Model access: endpoint configuration, prompt rendering, completion
//! records, and content-addressed caching keys.
//!
//! Credentials are handled by environment-variable *name* only; the secret
//! value itself is read at request time and never stored in any struct that
//! can be serialized.

pub mod http;
pub mod mock;
pub mod runner;

pub use http::{cached_complete, complete};
pub use mock::{mock_complete, MockPolicy, ScriptedResponses};
pub use runner::{run_eval, BackendMode, EvalOptions, RunSummary};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::report::duration_millis;

fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    1000
}

/// A chat-completion endpoint plus request/retry policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Whole-request timeout per attempt.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Additional attempts after the first request.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Client-side rate limit shared across worker threads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    /// Name of the environment variable holding the bearer token. Only the
    /// name is ever stored or serialized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// First backoff delay; doubles per retry. Tunable so tests run fast.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
}

impl EndpointConfig {
    /// A minimal config for the given URL and model, with default policy.
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            requests_per_minute: None,
            api_key_env: None,
            retry_base_ms: default_retry_base_ms(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_url.trim().is_empty() {
            return Err(Error::config("endpoint base_url must not be empty"));
        }
        if self.model_name.trim().is_empty() {
            return Err(Error::config("endpoint model_name must not be empty"));
        }
        // NaN must fail this check too, so test the accepted range directly.
        if !(0.0..=f64::INFINITY).contains(&self.temperature) {
            return Err(Error::config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::config("max_tokens must be positive"));
        }
        if self.timeout_secs == 0 {
            return Err(Error::config("timeout_secs must be positive"));
        }
        if self.requests_per_minute == Some(0) {
            return Err(Error::config("requests_per_minute must be positive"));
        }
        Ok(())
    }
}

/// The placeholder that must appear exactly once in the user template.
pub const QUESTION_PLACEHOLDER: &str = "{question}";

/// How a problem text becomes a chat prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// System message; empty means no system message is sent.
    #[serde(default)]
    pub system_text: String,
    /// User message body; must contain `{question}` exactly once.
    pub user_template: String,
    /// Appended to the user message after a blank line; empty to disable.
    #[serde(default)]
    pub answer_directive: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system_text: "You are a careful solver of math word problems.".to_string(),
            user_template: QUESTION_PLACEHOLDER.to_string(),
            answer_directive:
                "Reason step by step, then give the final numeric answer inside \\boxed{}."
                    .to_string(),
        }
    }
}

/// A fully rendered prompt: optional system message plus user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub user: String,
}

/// Substitute one question into the template.
///
/// The user message is the substituted template, then a blank line and the
/// answer directive when one is configured.
pub fn render_prompt(template: &PromptTemplate, question: &str) -> Result<Prompt> {
    let occurrences = template.user_template.matches(QUESTION_PLACEHOLDER).count();
    if occurrences != 1 {
        return Err(Error::config(format!(
            "user_template must contain {QUESTION_PLACEHOLDER} exactly once, found {occurrences}"
        )));
    }
    let mut user = template
        .user_template
        .replacen(QUESTION_PLACEHOLDER, question, 1);
    if !template.answer_directive.is_empty() {
        user.push_str("\n\n");
        user.push_str(&template.answer_directive);
    }
    let system = if template.system_text.is_empty() {
        None
    } else {
        Some(template.system_text.clone())
    };
    Ok(Prompt { system, user })
}

/// Content address of one request: SHA-256 over the request-identifying
/// fields, each hashed as an 8-byte big-endian length prefix followed by the
/// field's UTF-8 bytes, so no field boundary can be forged by concatenation.
pub fn cache_key(config: &EndpointConfig, prompt: &Prompt) -> String {
    let mut hasher = Sha256::new();
    let mut field = |text: &str| {
        hasher.update((text.len() as u64).to_be_bytes());
        hasher.update(text.as_bytes());
    };
    field(&config.base_url);
    field(&config.model_name);
    field(&config.temperature.to_string());
    field(prompt.system.as_deref().unwrap_or(""));
    field(&prompt.user);
    hex::encode(hasher.finalize())
}

/// Where a completion came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Http,
    Mock,
}

/// One completed request/response exchange; the unit stored in the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub cache_key: String,
    pub prompt: Prompt,
    pub response_text: String,
    #[serde(with = "duration_millis")]
    pub latency_ms: Duration,
    pub attempt_count: u32,
    pub backend: Backend,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_renders_question_and_directive() {
        let template = PromptTemplate::default();
        let prompt = render_prompt(&template, "What is 2 + 2?").unwrap();
        assert!(prompt.user.starts_with("What is 2 + 2?"));
        assert!(prompt.user.contains("\n\n"));
        assert!(prompt.user.contains("\\boxed{}"));
        assert!(prompt.system.is_some());
    }

    #[test]
    fn empty_directive_and_system_are_omitted() {
        let template = PromptTemplate {
            system_text: String::new(),
            user_template: "Q: {question}".to_string(),
            answer_directive: String::new(),
        };
        let prompt = render_prompt(&template, "how many?").unwrap();
        assert_eq!(prompt.user, "Q: how many?");
        assert_eq!(prompt.system, None);
    }

    #[test]
    fn template_must_contain_placeholder_exactly_once() {
        let mut template = PromptTemplate {
            user_template: "no placeholder".to_string(),
            ..PromptTemplate::default()
        };
        let err = render_prompt(&template, "q").unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);

        template.user_template = "{question} and {question}".to_string();
        assert!(render_prompt(&template, "q").is_err());
    }

    #[test]
    fn cache_key_is_stable_and_sensitive_to_every_field() {
        let config = EndpointConfig::new("http://localhost:1", "m");
        let prompt = Prompt {
            system: Some("s".to_string()),
            user: "u".to_string(),
        };
        let base = cache_key(&config, &prompt);
        assert_eq!(base.len(), 64);
        assert_eq!(base, cache_key(&config, &prompt), "deterministic");

        let mut other = config.clone();
        other.model_name = "m2".to_string();
        assert_ne!(base, cache_key(&other, &prompt));

        let mut other = config.clone();
        other.base_url = "http://localhost:2".to_string();
        assert_ne!(base, cache_key(&other, &prompt));

        let mut other = config.clone();
        other.temperature = 0.0;
        assert_ne!(base, cache_key(&other, &prompt));

        let mut p = prompt.clone();
        p.user = "u2".to_string();
        assert_ne!(base, cache_key(&config, &p));

        let mut p = prompt.clone();
        p.system = None;
        assert_ne!(base, cache_key(&config, &p));
    }

    #[test]
    fn cache_key_length_prefix_prevents_field_bleed() {
        // ("ab", "c") and ("a", "bc") must not collide.
        let config_ab = EndpointConfig::new("ab", "c");
        let config_a = EndpointConfig::new("a", "bc");
        let prompt = Prompt {
            system: None,
            user: String::new(),
        };
        assert_ne!(
            cache_key(&config_ab, &prompt),
            cache_key(&config_a, &prompt)
        );
    }

    #[test]
    fn retry_and_request_policies_are_validated() {
        let mut config = EndpointConfig::new("http://x", "m");
        assert!(config.validate().is_ok());
        config.temperature = -0.1;
        assert!(config.validate().is_err());
        config.temperature = f64::NAN;
        assert!(config.validate().is_err());
        config.temperature = 0.0;
        config.requests_per_minute = Some(0);
        assert!(config.validate().is_err());
        config.requests_per_minute = Some(60);
        config.base_url = "  ".into();
        assert!(config.validate().is_err());
    }

    #[test]
    fn credential_values_never_appear_in_serialized_forms() {
        let sentinel = "sk-SENTINEL-VALUE-12345";
        std::env::set_var("PERTURBENCH_TEST_KEY_MOD", sentinel);
        let mut config = EndpointConfig::new("http://x", "m");
        config.api_key_env = Some("PERTURBENCH_TEST_KEY_MOD".to_string());
        let json = serde_json::to_string(&config).unwrap();
        assert!(json.contains("PERTURBENCH_TEST_KEY_MOD"), "name is fine");
        assert!(!json.contains(sentinel), "value must never serialize");

        let record = CompletionRecord {
            cache_key: cache_key(
                &config,
                &Prompt {
                    system: None,
                    user: "q".into(),
                },
            ),
            prompt: Prompt {
                system: None,
                user: "q".into(),
            },
            response_text: "a".into(),
            latency_ms: Duration::from_millis(3),
            attempt_count: 1,
            backend: Backend::Http,
        };
        let json = serde_json::to_string(&record).unwrap();
        assert!(!json.contains(sentinel));
    }

    #[test]
    fn completion_record_round_trips() {
        let record = CompletionRecord {
            cache_key: "00".repeat(32),
            prompt: Prompt {
                system: Some("s".into()),
                user: "u".into(),
            },
            response_text: "r".into(),
            latency_ms: Duration::from_millis(1234),
            attempt_count: 2,
            backend: Backend::Mock,
        };
        let json = serde_json::to_string(&record).unwrap();
        let back: CompletionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(record, back);
        assert!(json.contains("\"latency_ms\":1234"));
        assert!(json.contains("\"backend\":\"mock\""));
    }
}
