//! Problems, test cases and benchmark corpora.
//!
//! A [`ProblemSpec`] carries both the public tests the agents may see and the
//! hidden tests used only for final judging. Agents never receive a
//! `ProblemSpec`; they get a [`PublicProblem`], which has no hidden-test field
//! at all.

mod loaders;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::literal::canonical_literal;

pub use loaders::{load_corpus, parse_corpus, CorpusFormat, LoadedCorpus, Rejection};

/// Default per-case wall-clock limit in milliseconds.
pub const DEFAULT_TIME_LIMIT_MS: u64 = 6000;

/// Version tag of the normalized corpus cache file.
pub const CORPUS_CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown corpus format `{0}`")]
    UnknownFormat(String),
    #[error("corpus cache version {found} is not supported (expected {expected})")]
    CacheVersion { found: u32, expected: u32 },
    #[error("corpus cache: {0}")]
    Cache(#[from] serde_json::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProblemError {
    #[error("problem {0} has no hidden tests")]
    NoHiddenTests(String),
    #[error("problem {0} already has public tests")]
    AlreadyHasPublicTests(String),
    #[error("problem {id}: {reason}")]
    Invalid { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    Public,
    Hidden,
    #[serde(rename = "PBT")]
    Pbt,
}

/// One input, optionally paired with its expected output.
///
/// Payloads are text: for function-call problems the input is a Python
/// argument list (`12`, `[3, 1], 2`) and the output a Python literal; for
/// stdio problems both are the raw stream contents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: Option<String>,
    pub kind: TestKind,
    #[serde(default)]
    pub origin: String,
}

impl TestCase {
    pub fn public(input: impl Into<String>, expected: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: Some(expected.into()),
            kind: TestKind::Public,
            origin: String::new(),
        }
    }

    pub fn hidden(input: impl Into<String>, expected: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: Some(expected.into()),
            kind: TestKind::Hidden,
            origin: String::new(),
        }
    }

    pub fn pbt(input: impl Into<String>, origin: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: None,
            kind: TestKind::Pbt,
            origin: origin.into(),
        }
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }

    /// Byte length of the serialized input, the "length" used when ranking
    /// failing cases.
    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    fn check(&self) -> Result<(), String> {
        match (self.kind, &self.expected_output) {
            (TestKind::Public | TestKind::Hidden, None) => {
                Err(format!("{:?} test without expected output", self.kind))
            }
            (TestKind::Pbt, Some(_)) => Err("PBT test carries an expected output".into()),
            _ => Ok(()),
        }
    }
}

/// How a candidate program receives its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IoStyle {
    /// Call `entry_point` with the input as its argument list and print `repr(result)`.
    FunctionCall,
    /// Run the program with the input on stdin and capture stdout.
    Stdio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceBenchmark {
    HumanEval,
    #[serde(rename = "MBPP")]
    Mbpp,
    LiveCodeBench,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: String,
    pub description: String,
    pub entry_point: String,
    pub io_style: IoStyle,
    #[serde(default = "default_language")]
    pub subject_language: String,
    #[serde(default)]
    pub public_tests: Vec<TestCase>,
    pub hidden_tests: Vec<TestCase>,
    #[serde(default = "default_time_limit")]
    pub time_limit_ms: u64,
    #[serde(default = "default_benchmark")]
    pub source_benchmark: SourceBenchmark,
    /// Properties written by a person; when present they replace LLM-defined ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human_properties: Vec<String>,
}

fn default_language() -> String {
    "python".to_string()
}

fn default_time_limit() -> u64 {
    DEFAULT_TIME_LIMIT_MS
}

fn default_benchmark() -> SourceBenchmark {
    SourceBenchmark::Custom
}

/// Comparison key for a test: canonical input and expected output.
pub(crate) fn pair_key(style: IoStyle, t: &TestCase) -> (String, Option<String>) {
    match style {
        IoStyle::FunctionCall => (
            canonical_literal(&t.input),
            t.expected_output.as_deref().map(canonical_literal),
        ),
        IoStyle::Stdio => (
            t.input.clone(),
            t.expected_output
                .as_deref()
                .map(|o| o.strip_suffix('\n').unwrap_or(o).to_string()),
        ),
    }
}

impl ProblemSpec {
    /// Check the per-problem invariants.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let invalid = |reason: String| ProblemError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.io_style == IoStyle::FunctionCall && self.entry_point.trim().is_empty() {
            return Err(invalid("function-call problem without entry point".into()));
        }
        if self.time_limit_ms == 0 {
            return Err(invalid("time limit must be positive".into()));
        }
        for t in &self.public_tests {
            if t.kind != TestKind::Public {
                return Err(invalid(format!("{:?} test in public list", t.kind)));
            }
            t.check().map_err(invalid)?;
        }
        for t in &self.hidden_tests {
            if t.kind != TestKind::Hidden {
                return Err(invalid(format!("{:?} test in hidden list", t.kind)));
            }
            t.check().map_err(invalid)?;
        }
        let public: HashSet<_> = self
            .public_tests
            .iter()
            .map(|t| pair_key(self.io_style, t))
            .collect();
        if self
            .hidden_tests
            .iter()
            .any(|t| public.contains(&pair_key(self.io_style, t)))
        {
            return Err(invalid("public and hidden tests overlap".into()));
        }
        Ok(())
    }

    /// The agent-visible part of the problem.
    pub fn public_view(&self) -> PublicProblem {
        PublicProblem {
            id: self.id.clone(),
            description: self.description.clone(),
            entry_point: self.entry_point.clone(),
            io_style: self.io_style,
            subject_language: self.subject_language.clone(),
            public_tests: self.public_tests.clone(),
            time_limit_ms: self.time_limit_ms,
            human_properties: self.human_properties.clone(),
        }
    }
}

/// MBPP convention: expose the first hidden test as the only public test.
pub fn split_first_test_as_public(spec: &ProblemSpec) -> Result<ProblemSpec, ProblemError> {
    if !spec.public_tests.is_empty() {
        return Err(ProblemError::AlreadyHasPublicTests(spec.id.clone()));
    }
    let (first, rest) = spec
        .hidden_tests
        .split_first()
        .ok_or_else(|| ProblemError::NoHiddenTests(spec.id.clone()))?;
    let mut out = spec.clone();
    let mut public = first.clone();
    public.kind = TestKind::Public;
    out.public_tests = vec![public];
    out.hidden_tests = rest.to_vec();
    Ok(out)
}

/// Everything an agent is allowed to know about a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicProblem {
    pub id: String,
    pub description: String,
    pub entry_point: String,
    pub io_style: IoStyle,
    pub subject_language: String,
    pub public_tests: Vec<TestCase>,
    pub time_limit_ms: u64,
    pub human_properties: Vec<String>,
}

/// Normalized corpus cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusCache {
    pub version: u32,
    pub corpus_id: String,
    pub problems: Vec<ProblemSpec>,
}

pub fn save_corpus_cache(
    path: &Path,
    corpus_id: &str,
    problems: &[ProblemSpec],
) -> std::io::Result<()> {
    let cache = CorpusCache {
        version: CORPUS_CACHE_VERSION,
        corpus_id: corpus_id.to_string(),
        problems: problems.to_vec(),
    };
    let text = serde_json::to_string_pretty(&cache).map_err(std::io::Error::other)?;
    fs::write(path, text)
}

pub fn load_corpus_cache(path: &Path) -> Result<CorpusCache, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    let cache: CorpusCache = serde_json::from_str(&text)?;
    if cache.version != CORPUS_CACHE_VERSION {
        return Err(CorpusError::CacheVersion {
            found: cache.version,
            expected: CORPUS_CACHE_VERSION,
        });
    }
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec_with(hidden: Vec<TestCase>, public: Vec<TestCase>) -> ProblemSpec {
        ProblemSpec {
            id: "t/1".into(),
            description: "d".into(),
            entry_point: "f".into(),
            io_style: IoStyle::FunctionCall,
            subject_language: "python".into(),
            public_tests: public,
            hidden_tests: hidden,
            time_limit_ms: DEFAULT_TIME_LIMIT_MS,
            source_benchmark: SourceBenchmark::Mbpp,
            human_properties: vec![],
        }
    }

    #[test]
    fn split_moves_first_hidden_test() {
        let hidden = vec![
            TestCase::hidden("1", "a"),
            TestCase::hidden("2", "b"),
            TestCase::hidden("3", "c"),
        ];
        let spec = spec_with(hidden.clone(), vec![]);
        let out = split_first_test_as_public(&spec).unwrap();
        assert_eq!(out.public_tests.len(), 1);
        assert_eq!(out.public_tests[0].input, "1");
        assert_eq!(out.public_tests[0].kind, TestKind::Public);
        assert_eq!(out.hidden_tests, hidden[1..].to_vec());
        assert_eq!(spec.hidden_tests.len(), 3, "original untouched");
        out.validate().unwrap();
    }

    #[test]
    fn split_single_hidden_test() {
        let spec = spec_with(vec![TestCase::hidden("1", "a")], vec![]);
        let out = split_first_test_as_public(&spec).unwrap();
        assert_eq!(out.public_tests.len(), 1);
        assert!(out.hidden_tests.is_empty());
    }

    #[test]
    fn split_rejects_existing_public_tests() {
        let spec = spec_with(
            vec![TestCase::hidden("1", "a")],
            vec![TestCase::public("0", "z")],
        );
        assert_eq!(
            split_first_test_as_public(&spec),
            Err(ProblemError::AlreadyHasPublicTests("t/1".into()))
        );
        let empty = spec_with(vec![], vec![]);
        assert_eq!(
            split_first_test_as_public(&empty),
            Err(ProblemError::NoHiddenTests("t/1".into()))
        );
    }

    #[test]
    fn overlap_is_detected_canonically() {
        let spec = spec_with(
            vec![TestCase::hidden("12", "[2,2,3]")],
            vec![TestCase::public("12", "[2, 2, 3]")],
        );
        assert!(spec.validate().is_err());
    }

    #[test]
    fn pbt_case_must_not_carry_output() {
        let mut t = TestCase::pbt("1", "gen");
        assert!(t.check().is_ok());
        t.expected_output = Some("x".into());
        assert!(t.check().is_err());
    }
}
