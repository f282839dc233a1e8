//! Shared helpers for CLI integration tests: spawning the binary and
//! preparing corpora.

use std::path::{Path, PathBuf};
use std::process::Command;

use perturbench::corpus::write_canonical;
use perturbench::segmenter::Segmenter;
use perturbench::synth::synthetic_corpus;

/// Path to the compiled `perturbench` binary under test.
pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_perturbench")
}

pub struct CmdOutput {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CmdOutput {
    pub fn assert_ok(&self) -> &Self {
        assert_eq!(
            self.status, 0,
            "command failed\nstdout:\n{}\nstderr:\n{}",
            self.stdout, self.stderr
        );
        self
    }
}

/// Run the binary with `args`, working directory `dir`.
pub fn run_in(dir: &Path, args: &[&str]) -> CmdOutput {
    let output = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn perturbench");
    CmdOutput {
        status: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

/// Absolute path of a shipped fixture file.
pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Write an `n`-problem synthetic corpus as a generic-format JSONL file.
pub fn write_synth_corpus(path: &Path, name: &str, n: usize) {
    let segmenter = Segmenter::default();
    let corpus = synthetic_corpus(name, n, &segmenter);
    write_canonical(&corpus, path).expect("write synthetic corpus");
}

/// Read a file as bytes, panicking with the path on failure.
pub fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Count non-empty lines of a file.
pub fn line_count(path: &Path) -> usize {
    String::from_utf8(read_bytes(path))
        .expect("utf8")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
}
