//! Perturbench: deterministic robustness benchmarking for math word-problem
//! solvers.
//!
//! The library turns a benchmark corpus into perturbed variants — irrelevant
//! sentences injected at controlled intensities, or the final question
//! instruction removed — evaluates chat-completion backends on them, and
//! aggregates graded results into accuracy and degradation reports.
//!
//! The pipeline is deterministic end to end: variant construction derives
//! every random choice from a global seed plus the item's identity, model
//! responses are cached by content address, and reports are emitted with
//! stable ordering so reruns produce byte-identical files.
//!
//! Module map:
//! - [`corpus`]: loading and validating problem sets (GSM8K/AIME-style JSONL).
//! - [`segmenter`]: lossless sentence segmentation.
//! - [`perturb`]: distractor pools, seeded sampling, variant construction.
//! - [`client`]: prompt rendering, HTTP and mock backends, caching, the
//!   evaluation runner.
//! - [`grader`]: answer extraction and numeric comparison.
//! - [`report`]: accuracy aggregation, deltas, CSV/markdown/plot emission.
//! - [`number`]: exact rational answer values.
//! - [`synth`]: deterministic synthetic corpora for tests and demos.

pub mod client;
pub mod corpus;
pub mod error;
pub mod grader;
pub mod number;
pub mod perturb;
pub mod report;
pub mod segmenter;
pub mod synth;

pub use error::{Error, Result};
