//! The generate → test → refine loop, per problem and over a corpus.
//!
//! Per problem: the initial candidate, the properties, their checks and the
//! PBT inputs are produced first. Each iteration then validates the checks
//! against the wrong outputs seen so far, instruments the candidate, runs the
//! public tests plus PBT inputs, and either stops or refines from feedback.
//! The orchestrator only ever holds [`PublicProblem`]s.

mod artifacts;
mod config;

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::generator::{CandidateProgram, Generator, InstrumentationMode, InstrumentedProgram};
use crate::llm::{ChatBackend, MeteredBackend, TokenUsage};
use crate::problem::{PublicProblem, TestKind};
use crate::sandbox::{outputs_match, Program, Sandbox, ValidationReport, Verdict};
use crate::tester::{CheckStatus, Feedback, KnownError, PbtInputBatch, Property, PropertyCheck, Tester};

pub use artifacts::{problem_dir_name, read_run, write_problem, RunDir, StoredRun};
pub use config::{BackendKind, ConfigError, RsrBasis, RunConfig, CONFIG_VERSION, ENV_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalStatus {
    PassAllChecks,
    BudgetExhausted,
    NoProgress,
    Degraded,
}

/// One case of a suite run, without timing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub kind: TestKind,
    pub input: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated_property: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub all_pass: bool,
    pub counts: BTreeMap<Verdict, usize>,
    pub cases: Vec<CaseSummary>,
}

impl ReportSummary {
    pub fn of(report: &ValidationReport) -> Self {
        Self {
            all_pass: report.all_pass(),
            counts: report.counts(),
            cases: report
                .results
                .iter()
                .map(|r| CaseSummary {
                    kind: r.case.kind,
                    input: r.case.input.clone(),
                    verdict: r.result.verdict,
                    violated_property: r.result.violated_property.clone(),
                })
                .collect(),
        }
    }

    /// Every public test passed.
    pub fn public_pass(&self) -> bool {
        self.cases
            .iter()
            .filter(|c| c.kind == TestKind::Public)
            .all(|c| c.verdict == Verdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u32,
    pub candidate_hash: String,
    pub parent_hash: Option<String>,
    /// The feedback the candidate was refined from; `None` at iteration 0.
    pub feedback: Option<Feedback>,
    pub check_statuses: BTreeMap<String, CheckStatus>,
    pub instrumentation: Option<InstrumentationMode>,
    /// `None` when the iteration stopped before running the suite.
    pub report: Option<ReportSummary>,
    pub no_progress: bool,
    pub token_usage: TokenUsage,
    /// Not written to `iterations.jsonl`, which must be reproducible.
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub problem_id: String,
    pub terminal_status: TerminalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_reason: Option<String>,
    pub initial_candidate: Option<CandidateProgram>,
    /// The last candidate produced before termination.
    pub final_candidate: Option<CandidateProgram>,
    /// The initial candidate passed every public test.
    pub initial_candidate_correct_on_tv: bool,
    /// The final candidate passed every public test in its last suite run.
    pub final_candidate_correct_on_tv: bool,
    pub properties: Vec<Property>,
    /// Checks with the statuses of the last validation.
    pub checks: Vec<PropertyCheck>,
    pub pbt_batch: Option<PbtInputBatch>,
    /// Candidate lineage, iteration order.
    pub candidates: Vec<CandidateProgram>,
    #[serde(skip)]
    pub instrumented: Vec<(u32, InstrumentedProgram)>,
    pub traces: Vec<IterationTrace>,
    pub token_usage: TokenUsage,
    pub wall_time_ms: u64,
}

impl RunResult {
    fn empty(problem_id: &str) -> Self {
        Self {
            problem_id: problem_id.to_string(),
            terminal_status: TerminalStatus::Degraded,
            degraded_reason: None,
            initial_candidate: None,
            final_candidate: None,
            initial_candidate_correct_on_tv: false,
            final_candidate_correct_on_tv: false,
            properties: Vec::new(),
            checks: Vec::new(),
            pbt_batch: None,
            candidates: Vec::new(),
            instrumented: Vec::new(),
            traces: Vec::new(),
            token_usage: TokenUsage::default(),
            wall_time_ms: 0,
        }
    }

    pub fn degraded(problem_id: &str, reason: impl Into<String>) -> Self {
        let mut r = Self::empty(problem_id);
        r.degraded_reason = Some(reason.into());
        r
    }

    /// Verdict counts of the last suite run, if any.
    pub fn final_counts(&self) -> Option<&BTreeMap<Verdict, usize>> {
        self.traces.iter().rev().find_map(|t| t.report.as_ref()).map(|r| &r.counts)
    }
}

struct Loop<'a> {
    problem: &'a PublicProblem,
    config: &'a RunConfig,
    sandbox: &'a Sandbox,
    metered: &'a MeteredBackend<'a>,
    tester: Tester<'a>,
    generator: Generator<'a>,
    result: RunResult,
    known_errors: VecDeque<KnownError>,
    tokens_seen: TokenUsage,
}

impl Loop<'_> {
    fn tokens_since_last(&mut self) -> TokenUsage {
        let now = self.metered.usage();
        let delta = TokenUsage {
            prompt: now.prompt - self.tokens_seen.prompt,
            completion: now.completion - self.tokens_seen.completion,
        };
        self.tokens_seen = now;
        delta
    }

    fn remember_errors(&mut self, candidate: &Program, report: &ValidationReport) -> Result<(), String> {
        for r in report.results.iter().filter(|r| r.case.kind == TestKind::Public) {
            let Some(expected) = r.case.expected_output.as_deref() else {
                continue;
            };
            let output = match r.result.verdict {
                Verdict::WrongAnswer => r.result.actual_output.clone(),
                Verdict::PropertyViolation => {
                    let plain = self
                        .sandbox
                        .run_case(candidate, &r.case, &self.tester.config().limits)
                        .map_err(|e| e.to_string())?;
                    if plain.verdict != Verdict::WrongAnswer {
                        continue;
                    }
                    plain.actual_output
                }
                _ => continue,
            };
            if outputs_match(self.problem.io_style, &output, expected) {
                continue;
            }
            let known = KnownError {
                input: r.case.input.clone(),
                wrong_output: output.trim_end_matches('\n').to_string(),
            };
            if !self.known_errors.contains(&known) {
                self.known_errors.push_back(known);
            }
        }
        while self.known_errors.len() > self.config.known_error_cap {
            self.known_errors.pop_front();
        }
        Ok(())
    }

    fn run(&mut self) -> Result<TerminalStatus, String> {
        let problem = self.problem;
        let mut candidate = self.generator.generate_initial(problem).map_err(|e| format!("initial generation: {e}"))?;
        self.result.initial_candidate = Some(candidate.clone());
        self.result.final_candidate = Some(candidate.clone());
        self.result.candidates.push(candidate.clone());

        let properties = self.tester.define_properties(problem).map_err(|e| format!("define_properties: {e}"))?;
        let mut checks = if properties.is_empty() {
            Vec::new()
        } else {
            self.tester
                .instantiate_checks(problem, &properties)
                .map_err(|e| format!("instantiate_checks: {e}"))?
        };
        self.result.properties = properties.clone();
        let mut batch = self.tester.synthesize_inputs(problem);
        self.result.pbt_batch = Some(batch.clone());

        let mut pending_feedback: Option<Feedback> = None;
        loop {
            let started = Instant::now();
            let mut warnings = candidate.warnings.clone();
            let known: Vec<KnownError> = self.known_errors.iter().cloned().collect();
            checks = self
                .tester
                .validate_checks(problem, &checks, &known)
                .map_err(|e| format!("validate_checks: {e}"))?;
            self.result.checks = checks.clone();
            let plain = candidate.plain_program(problem);
            let (program, mode) = if checks.iter().any(PropertyCheck::is_usable) {
                let inst = self
                    .generator
                    .instrument(problem, &candidate, &checks)
                    .map_err(|e| format!("instrument: {e}"))?;
                warnings.extend(inst.warnings.iter().cloned());
                let out = (inst.program.clone(), Some(inst.mode));
                self.result.instrumented.push((candidate.iteration, inst));
                out
            } else {
                (plain.clone(), None)
            };
            let report = self
                .sandbox
                .run_suite(&program, &problem.public_tests, &batch.inputs, &self.tester.config().limits)
                .map_err(|e| format!("run_suite: {e}"))?;
            warnings.extend(report.warnings.iter().cloned());
            let summary = ReportSummary::of(&report);
            if candidate.iteration == 0 {
                self.result.initial_candidate_correct_on_tv = summary.public_pass();
            }
            self.result.final_candidate_correct_on_tv = summary.public_pass();
            self.remember_errors(&plain, &report)?;
            let token_usage = self.tokens_since_last();
            self.result.traces.push(IterationTrace {
                iteration: candidate.iteration,
                candidate_hash: candidate.hash.clone(),
                parent_hash: candidate.parent_hash.clone(),
                feedback: pending_feedback.take(),
                check_statuses: checks.iter().map(|c| (c.property_id.clone(), c.status)).collect(),
                instrumentation: mode,
                report: Some(summary),
                no_progress: false,
                token_usage,
                wall_time_ms: started.elapsed().as_millis() as u64,
                warnings,
            });

            if report.all_pass() {
                return Ok(TerminalStatus::PassAllChecks);
            }
            if candidate.iteration >= self.config.max_iterations {
                return Ok(TerminalStatus::BudgetExhausted);
            }
            let started = Instant::now();
            let feedback = self
                .tester
                .formulate_feedback(problem, &report, &properties, &checks, &plain, self.config.selection_strategy)
                .map_err(|e| format!("formulate_feedback: {e}"))?;
            let refined = self
                .generator
                .refine(problem, &candidate, &feedback)
                .map_err(|e| format!("refine: {e}"))?;
            self.result.candidates.push(refined.clone());
            self.result.final_candidate = Some(refined.clone());
            if self.config.detect_no_progress && refined.hash == candidate.hash {
                let token_usage = self.tokens_since_last();
                self.result.traces.push(IterationTrace {
                    iteration: refined.iteration,
                    candidate_hash: refined.hash.clone(),
                    parent_hash: refined.parent_hash.clone(),
                    feedback: Some(feedback),
                    check_statuses: checks.iter().map(|c| (c.property_id.clone(), c.status)).collect(),
                    instrumentation: None,
                    report: None,
                    no_progress: true,
                    token_usage,
                    wall_time_ms: started.elapsed().as_millis() as u64,
                    warnings: refined.warnings.clone(),
                });
                return Ok(TerminalStatus::NoProgress);
            }
            candidate = refined;
            pending_feedback = Some(feedback);
            if self.config.resynthesize_inputs {
                batch = self.tester.synthesize_inputs(problem);
                self.result.pbt_batch = Some(batch.clone());
            }
        }
    }
}

/// Run the loop on one problem. Failures of a component end the run as
/// [`TerminalStatus::Degraded`] with whatever was traced so far.
pub fn solve(problem: &PublicProblem, config: &RunConfig, backend: &dyn ChatBackend, sandbox: &Sandbox) -> RunResult {
    let started = Instant::now();
    // The configured limit governs every execution, so prompts must state it.
    let problem = &PublicProblem {
        time_limit_ms: config.time_limit_ms,
        ..problem.clone()
    };
    let metered = MeteredBackend::new(backend);
    let mut state = Loop {
        problem,
        config,
        sandbox,
        metered: &metered,
        tester: Tester::new(&metered, sandbox, config.tester_config()),
        generator: Generator::new(&metered, sandbox, config.generator_config()),
        result: RunResult::empty(&problem.id),
        known_errors: VecDeque::new(),
        tokens_seen: TokenUsage::default(),
    };
    let outcome = state.run();
    let mut result = state.result;
    match outcome {
        Ok(status) => result.terminal_status = status,
        Err(reason) => {
            tracing::warn!(problem = %problem.id, %reason, "run degraded");
            result.terminal_status = TerminalStatus::Degraded;
            result.degraded_reason = Some(reason);
        }
    }
    result.token_usage = metered.usage();
    result.wall_time_ms = started.elapsed().as_millis() as u64;
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    /// One result per problem, in corpus order.
    pub results: Vec<RunResult>,
    pub token_usage: TokenUsage,
    pub wall_time_ms: u64,
}

/// Solve every problem with up to `parallelism` problems in flight.
/// A panic inside one problem becomes a degraded result for it alone.
pub fn solve_batch(
    problems: &[PublicProblem],
    config: &RunConfig,
    backend: &dyn ChatBackend,
    sandbox: &Sandbox,
    parallelism: usize,
) -> BatchOutcome {
    let started = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<RunResult>>> = problems.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..parallelism.clamp(1, problems.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(problem) = problems.get(i) else { break };
                let result = catch_unwind(AssertUnwindSafe(|| solve(problem, config, backend, sandbox)))
                    .unwrap_or_else(|panic| {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "unknown panic".into());
                        RunResult::degraded(&problem.id, format!("panic: {msg}"))
                    });
                tracing::info!(problem = %problem.id, status = ?result.terminal_status, "solved");
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    let results: Vec<RunResult> = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every problem solved"))
        .collect();
    BatchOutcome {
        token_usage: results.iter().map(|r| r.token_usage).sum(),
        results,
        wall_time_ms: started.elapsed().as_millis() as u64,
    }
}
