//! Isolated execution of candidate programs and the five-way verdict.
//!
//! Every run happens in a fresh scratch directory with a cleared environment,
//! its own process group, an address-space limit and a wall-clock timeout.
//! Paths handed to the runner are relative to that directory, so tracebacks
//! and messages never mention the scratch location.

mod process;
pub mod shim;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::literal::canonical_literal;
use crate::problem::{IoStyle, TestCase, DEFAULT_TIME_LIMIT_MS};
use process::{Semaphore, Spawn};
pub use shim::{sentinel_for, CheckSource, ShimManifest, SENTINEL_PREFIX};

/// First line of a machine-inserted instrumentation block. Lines at or after
/// it are not candidate code.
pub const INSTRUMENTATION_MARKER: &str = "# --- PGS instrumentation";

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox setup failed: {0}")]
    SetupFailure(String),
    #[error("no hidden tests to evaluate")]
    NoHiddenTests,
    #[error("coverage tracer unavailable: {0}")]
    TracerUnavailable(String),
    #[error("coverage not collected: run ended with {0}")]
    CoverageExcluded(Verdict),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub wall_time_ms: u64,
    /// Address-space cap; 0 disables it.
    pub memory_bytes: u64,
    /// Bytes of stdout and of stderr kept per run.
    pub output_cap_bytes: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            wall_time_ms: DEFAULT_TIME_LIMIT_MS,
            memory_bytes: 2 << 30,
            output_cap_bytes: 1 << 20,
        }
    }
}

impl ResourceLimits {
    pub fn with_time_limit(wall_time_ms: u64) -> Self {
        Self {
            wall_time_ms,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    #[serde(rename = "Property Violation")]
    PropertyViolation,
    #[serde(rename = "Wrong Answer")]
    WrongAnswer,
    #[serde(rename = "Runtime Error")]
    RuntimeError,
    #[serde(rename = "Time Limit Exceeded")]
    TimeLimitExceeded,
}

impl Verdict {
    pub const ALL: [Verdict; 5] = [
        Verdict::Pass,
        Verdict::PropertyViolation,
        Verdict::WrongAnswer,
        Verdict::RuntimeError,
        Verdict::TimeLimitExceeded,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "Pass",
            Verdict::PropertyViolation => "Property Violation",
            Verdict::WrongAnswer => "Wrong Answer",
            Verdict::RuntimeError => "Runtime Error",
            Verdict::TimeLimitExceeded => "Time Limit Exceeded",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitInfo {
    Code(i32),
    Signal(i32),
    /// Killed by the supervisor at the time limit.
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub verdict: Verdict,
    pub actual_output: String,
    pub stderr: String,
    pub runtime_ms: u64,
    pub exit: ExitInfo,
    /// Set exactly when the verdict is a property violation.
    pub violated_property: Option<String>,
    #[serde(default)]
    pub output_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: TestCase,
    pub result: ExecutionResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    AllPass,
    SomeFail,
}

/// Results of one suite run, in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub results: Vec<CaseResult>,
    pub aggregate: Aggregate,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn from_results(results: Vec<CaseResult>) -> Self {
        let aggregate = if results.iter().all(|r| r.result.verdict == Verdict::Pass) {
            Aggregate::AllPass
        } else {
            Aggregate::SomeFail
        };
        let warnings = if results.is_empty() {
            vec!["empty test suite".to_string()]
        } else {
            Vec::new()
        };
        Self {
            results,
            aggregate,
            warnings,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.aggregate == Aggregate::AllPass
    }

    /// Count per verdict; every verdict is present, possibly with zero.
    pub fn counts(&self) -> BTreeMap<Verdict, usize> {
        let mut m: BTreeMap<Verdict, usize> = Verdict::ALL.iter().map(|v| (*v, 0)).collect();
        for r in &self.results {
            *m.entry(r.result.verdict).or_default() += 1;
        }
        m
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &CaseResult)> {
        self.results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.result.verdict != Verdict::Pass)
    }
}

/// Outcome of the final hidden-test evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenOutcome {
    pub passed: bool,
    pub executed: usize,
    pub first_failure: Option<CaseResult>,
}

/// A program as the sandbox runs it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub source: String,
    pub style: IoStyle,
    pub entry_point: String,
    /// Checks the runner evaluates after the program returns.
    #[serde(default)]
    pub posthoc_checks: Vec<CheckSource>,
    /// Properties whose sentinels the program source itself may emit.
    #[serde(default)]
    pub embedded_properties: Vec<String>,
    /// Extra environment for the child, e.g. `PGS_SEED`.
    #[serde(default)]
    pub env: Vec<(String, String)>,
}

impl Program {
    pub fn plain(source: impl Into<String>, style: IoStyle, entry_point: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            style,
            entry_point: entry_point.into(),
            posthoc_checks: Vec::new(),
            embedded_properties: Vec::new(),
            env: Vec::new(),
        }
    }

    /// Ids whose sentinels count as violations for this program.
    pub fn registered_properties(&self) -> BTreeSet<&str> {
        self.embedded_properties
            .iter()
            .map(String::as_str)
            .chain(self.posthoc_checks.iter().map(|c| c.property_id.as_str()))
            .collect()
    }
}

/// Output equality: canonical literals for function calls, exact text after
/// dropping one trailing newline for stdio.
pub fn outputs_match(style: IoStyle, actual: &str, expected: &str) -> bool {
    let strip = |s: &str| -> String {
        let s = s.strip_suffix('\n').unwrap_or(s);
        s.strip_suffix('\r').unwrap_or(s).to_string()
    };
    match style {
        IoStyle::FunctionCall => canonical_literal(&strip(actual)) == canonical_literal(&strip(expected)),
        IoStyle::Stdio => strip(actual) == strip(expected),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Interpreter command; the runner path and manifest are appended.
    pub interpreter: Vec<String>,
    /// External runner to use instead of the embedded one.
    pub shim_path: Option<PathBuf>,
    /// Parent of per-run scratch directories; the system temp dir if unset.
    pub scratch_root: Option<PathBuf>,
    pub max_parallel: usize,
    pub isolate_network: bool,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            interpreter: vec!["python3".into(), "-s".into(), "-B".into()],
            shim_path: None,
            scratch_root: None,
            max_parallel: std::thread::available_parallelism().map_or(4, |n| n.get()),
            isolate_network: true,
        }
    }
}

pub struct Sandbox {
    config: SandboxConfig,
    shim_source: String,
    scratch_root: PathBuf,
    slots: Semaphore,
}

impl std::fmt::Debug for Sandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sandbox").field("config", &self.config).finish()
    }
}

struct RawRun {
    result: ExecutionResult,
    coverage: Option<Vec<u32>>,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Result<Self, SandboxError> {
        if config.interpreter.is_empty() {
            return Err(SandboxError::SetupFailure("empty interpreter command".into()));
        }
        let shim_source = match &config.shim_path {
            Some(p) => fs::read_to_string(p).map_err(|e| {
                SandboxError::SetupFailure(format!("cannot read runner {}: {e}", p.display()))
            })?,
            None => shim::EMBEDDED_SHIM.to_string(),
        };
        let scratch_root = config
            .scratch_root
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("pbtgen-scratch"));
        fs::create_dir_all(&scratch_root).map_err(|e| {
            SandboxError::SetupFailure(format!("cannot create {}: {e}", scratch_root.display()))
        })?;
        let slots = Semaphore::new(config.max_parallel);
        Ok(Self {
            config,
            shim_source,
            scratch_root,
            slots,
        })
    }

    pub fn with_defaults() -> Result<Self, SandboxError> {
        Self::new(SandboxConfig::default())
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Run a trivial program to confirm the interpreter and runner work.
    pub fn probe(&self) -> Result<(), SandboxError> {
        let program = Program::plain("def ping():\n    return 1\n", IoStyle::FunctionCall, "ping");
        let r = self.run_input(&program, "", Some("1"), &ResourceLimits::with_time_limit(20_000))?;
        if r.verdict == Verdict::Pass {
            Ok(())
        } else {
            Err(SandboxError::SetupFailure(format!(
                "interpreter probe ended with {}: {}",
                r.verdict, r.stderr
            )))
        }
    }

    fn execute(
        &self,
        program: &Program,
        input: &str,
        expected: Option<&str>,
        limits: &ResourceLimits,
        coverage: bool,
    ) -> Result<RawRun, SandboxError> {
        let _permit = self.slots.acquire();
        let dir = tempfile::Builder::new()
            .prefix("run-")
            .tempdir_in(&self.scratch_root)
            .map_err(|e| SandboxError::SetupFailure(format!("scratch dir: {e}")))?;
        let mut manifest = ShimManifest::new(program.style, &program.entry_point);
        manifest.check_sources = program.posthoc_checks.clone();
        manifest.coverage = coverage;
        let setup = |r: std::io::Result<()>| r.map_err(|e| SandboxError::SetupFailure(e.to_string()));
        setup(fs::write(dir.path().join(shim::SHIM_FILE), &self.shim_source))?;
        setup(fs::write(dir.path().join(&manifest.program_path), &program.source))?;
        setup(fs::write(dir.path().join(&manifest.input_path), input))?;
        setup(fs::write(
            dir.path().join("manifest.json"),
            serde_json::to_vec(&manifest).expect("manifest serializes"),
        ))?;

        let mut argv = self.config.interpreter.clone();
        argv.push(shim::SHIM_FILE.into());
        argv.push("manifest.json".into());
        let mut env: Vec<(String, String)> = vec![
            ("PATH".into(), "/usr/local/bin:/usr/bin:/bin".into()),
            ("PYTHONHASHSEED".into(), "0".into()),
            ("PYTHONDONTWRITEBYTECODE".into(), "1".into()),
            ("PYTHONIOENCODING".into(), "utf-8".into()),
            ("LANG".into(), "C.UTF-8".into()),
            ("HOME".into(), dir.path().display().to_string()),
        ];
        env.extend(program.env.iter().cloned());
        let outcome = process::run(&Spawn {
            argv: &argv,
            cwd: dir.path(),
            env: &env,
            wall_time: Duration::from_millis(limits.wall_time_ms),
            memory_bytes: limits.memory_bytes,
            output_cap: limits.output_cap_bytes,
            isolate_network: self.config.isolate_network,
        })
        .map_err(|e| SandboxError::SetupFailure(format!("cannot start {}: {e}", argv[0])))?;

        let stdout = String::from_utf8_lossy(&outcome.stdout).into_owned();
        let stderr = String::from_utf8_lossy(&outcome.stderr).into_owned();
        if outcome.code() == Some(shim::EXIT_SETUP_ERROR) && stderr.contains(shim::SETUP_ERROR_MARKER) {
            return Err(SandboxError::SetupFailure(stderr.trim().to_string()));
        }
        let exit = if outcome.timed_out {
            ExitInfo::TimedOut
        } else if let Some(sig) = outcome.signal() {
            ExitInfo::Signal(sig)
        } else {
            ExitInfo::Code(outcome.code().unwrap_or(-1))
        };
        let violated = if outcome.timed_out {
            None
        } else {
            shim::find_violation(&stderr, program.registered_properties())
        };
        let verdict = if outcome.timed_out {
            Verdict::TimeLimitExceeded
        } else if violated.is_some() {
            Verdict::PropertyViolation
        } else if exit != ExitInfo::Code(shim::EXIT_OK) {
            Verdict::RuntimeError
        } else {
            match expected {
                Some(exp) if !outputs_match(program.style, &stdout, exp) => Verdict::WrongAnswer,
                _ => Verdict::Pass,
            }
        };
        let coverage = if coverage {
            fs::read_to_string(dir.path().join(&manifest.coverage_path))
                .ok()
                .and_then(|t| serde_json::from_str::<Vec<u32>>(&t).ok())
        } else {
            None
        };
        Ok(RawRun {
            result: ExecutionResult {
                verdict,
                actual_output: stdout,
                stderr,
                runtime_ms: outcome.elapsed.as_millis() as u64,
                exit,
                violated_property: violated,
                output_truncated: outcome.stdout_truncated,
            },
            coverage,
        })
    }

    /// Run `program` on one raw input, comparing against `expected` when given.
    pub fn run_input(
        &self,
        program: &Program,
        input: &str,
        expected: Option<&str>,
        limits: &ResourceLimits,
    ) -> Result<ExecutionResult, SandboxError> {
        Ok(self.execute(program, input, expected, limits, false)?.result)
    }

    pub fn run_case(
        &self,
        program: &Program,
        case: &TestCase,
        limits: &ResourceLimits,
    ) -> Result<ExecutionResult, SandboxError> {
        self.run_input(program, &case.input, case.expected_output.as_deref(), limits)
    }

    /// Run public tests then PBT inputs. Every case runs; results keep that order.
    pub fn run_suite(
        &self,
        program: &Program,
        public_tests: &[TestCase],
        pbt_inputs: &[TestCase],
        limits: &ResourceLimits,
    ) -> Result<ValidationReport, SandboxError> {
        let cases: Vec<&TestCase> = public_tests.iter().chain(pbt_inputs).collect();
        let results = self.run_many(program, &cases, limits)?;
        let report = ValidationReport::from_results(
            cases
                .into_iter()
                .cloned()
                .zip(results)
                .map(|(case, result)| CaseResult { case, result })
                .collect(),
        );
        if !report.warnings.is_empty() {
            tracing::warn!(warnings = ?report.warnings, "suite run");
        }
        Ok(report)
    }

    /// Run cases concurrently (bounded by `max_parallel`), results in input order.
    pub fn run_many(
        &self,
        program: &Program,
        cases: &[&TestCase],
        limits: &ResourceLimits,
    ) -> Result<Vec<ExecutionResult>, SandboxError> {
        std::thread::scope(|s| {
            let handles: Vec<_> = cases
                .iter()
                .map(|case| s.spawn(move || self.run_case(program, case, limits)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sandbox worker panicked"))
                .collect()
        })
    }

    /// Hidden tests in order, stopping at the first failure.
    pub fn evaluate_hidden(
        &self,
        program: &Program,
        hidden_tests: &[TestCase],
        limits: &ResourceLimits,
    ) -> Result<HiddenOutcome, SandboxError> {
        if hidden_tests.is_empty() {
            return Err(SandboxError::NoHiddenTests);
        }
        for (i, case) in hidden_tests.iter().enumerate() {
            let result = self.run_case(program, case, limits)?;
            if result.verdict != Verdict::Pass {
                return Ok(HiddenOutcome {
                    passed: false,
                    executed: i + 1,
                    first_failure: Some(CaseResult {
                        case: case.clone(),
                        result,
                    }),
                });
            }
        }
        Ok(HiddenOutcome {
            passed: true,
            executed: hidden_tests.len(),
            first_failure: None,
        })
    }

    /// Source lines of `program` executed on `input`, excluding any
    /// instrumentation block. Runs that time out, crash or abort on a
    /// violation yield [`SandboxError::CoverageExcluded`].
    pub fn measure_coverage(
        &self,
        program: &Program,
        input: &str,
        limits: &ResourceLimits,
    ) -> Result<BTreeSet<u32>, SandboxError> {
        let raw = self.execute(program, input, None, limits, true)?;
        match raw.result.verdict {
            Verdict::Pass | Verdict::WrongAnswer => {}
            other => return Err(SandboxError::CoverageExcluded(other)),
        }
        let lines = raw.coverage.ok_or_else(|| {
            SandboxError::TracerUnavailable("runner wrote no coverage data".into())
        })?;
        let cutoff = instrumentation_start(&program.source);
        Ok(lines.into_iter().filter(|l| cutoff.is_none_or(|c| *l < c)).collect())
    }
}

/// 1-based line number of the instrumentation marker, if present.
pub fn instrumentation_start(source: &str) -> Option<u32> {
    source
        .lines()
        .position(|l| l.trim_start().starts_with(INSTRUMENTATION_MARKER))
        .map(|i| i as u32 + 1)
}
