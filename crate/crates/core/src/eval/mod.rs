//! Final judging on hidden tests, metrics and reports.
//!
//! This is the only module that reads `hidden_tests`. Agents and the loop
//! work from [`PublicProblem`](crate::problem::PublicProblem) values.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::CandidateProgram;
use crate::llm::ChatBackend;
use crate::orchestrator::{solve_batch, RsrBasis, RunConfig, RunResult, TerminalStatus};
use crate::problem::ProblemSpec;
use crate::sandbox::{HiddenOutcome, ResourceLimits, Sandbox, SandboxError, Verdict};
use crate::tester::SelectionStrategy;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no hidden evaluation for problem {0}")]
    MissingHiddenEvaluation(String),
    #[error("problem {0} is not in the corpus")]
    UnknownProblem(String),
    #[error("empty result set")]
    EmptyCorpus,
    #[error("hidden evaluation of {problem}: {source}")]
    Sandbox {
        problem: String,
        #[source]
        source: SandboxError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Hidden-test judgement of one problem's first and last candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenEval {
    pub initial_pass: bool,
    pub final_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEval {
    pub problem_id: String,
    pub initial_pass_hidden: bool,
    pub final_pass_hidden: bool,
    pub initial_pass_tv: bool,
    pub final_pass_tv: bool,
    pub terminal_status: TerminalStatus,
    /// Refinements performed, i.e. the final candidate's iteration.
    pub iterations_used: u32,
    /// Verdict counts of the last suite run.
    pub verdict_distribution: BTreeMap<Verdict, usize>,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus_id: String,
    pub config_fingerprint: String,
    pub rsr_basis: RsrBasis,
    pub problems: Vec<ProblemEval>,
    pub pass_at_1: f64,
    /// `None` when no initial candidate was incorrect.
    pub rsr: Option<f64>,
    pub verdict_histogram: BTreeMap<Verdict, usize>,
    pub terminal_histogram: BTreeMap<String, usize>,
    pub mean_tokens: f64,
}

impl EvalReport {
    pub fn rsr_display(&self) -> String {
        self.rsr.map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"))
    }

    /// Pass rate on the visible tests, next to the hidden-test pass rate.
    pub fn pass_tv(&self) -> f64 {
        ratio(self.problems.iter().filter(|p| p.final_pass_tv).count(), self.problems.len())
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "corpus {} (config {})\nproblems: {}\npass@1: {:.4}\nRSR ({:?} basis): {}\npass on visible tests: {:.4}\nmean tokens: {:.1}\n",
            self.corpus_id,
            self.config_fingerprint,
            self.problems.len(),
            self.pass_at_1,
            self.rsr_basis,
            self.rsr_display(),
            self.pass_tv(),
            self.mean_tokens,
        );
        out.push_str("verdicts:");
        for v in Verdict::ALL {
            out.push_str(&format!(" {}={}", v.label(), self.verdict_histogram.get(&v).copied().unwrap_or(0)));
        }
        out.push('\n');
        out
    }

    pub fn write_json(&self, path: &Path) -> io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).map_err(io::Error::other)?)
    }

    /// One row per problem.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "problem_id".to_string(),
            "initial_pass_hidden".into(),
            "final_pass_hidden".into(),
            "initial_pass_tv".into(),
            "final_pass_tv".into(),
            "terminal_status".into(),
            "iterations_used".into(),
            "tokens".into(),
        ];
        header.extend(Verdict::ALL.iter().map(|v| v.label().to_string()));
        w.write_record(&header)?;
        for p in &self.problems {
            let mut row = vec![
                p.problem_id.clone(),
                p.initial_pass_hidden.to_string(),
                p.final_pass_hidden.to_string(),
                p.initial_pass_tv.to_string(),
                p.final_pass_tv.to_string(),
                format!("{:?}", p.terminal_status),
                p.iterations_used.to_string(),
                p.tokens.to_string(),
            ];
            row.extend(
                Verdict::ALL
                    .iter()
                    .map(|v| p.verdict_distribution.get(v).copied().unwrap_or(0).to_string()),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Aggregate run results and their hidden-test judgements.
pub fn compute_metrics(
    corpus_id: &str,
    config_fingerprint: &str,
    rsr_basis: RsrBasis,
    results: &[RunResult],
    hidden: &BTreeMap<String, HiddenEval>,
) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut problems = Vec::with_capacity(results.len());
    let mut verdict_histogram: BTreeMap<Verdict, usize> = Verdict::ALL.iter().map(|v| (*v, 0)).collect();
    let mut terminal_histogram = BTreeMap::new();
    for r in results {
        let h = hidden
            .get(&r.problem_id)
            .ok_or_else(|| EvalError::MissingHiddenEvaluation(r.problem_id.clone()))?;
        let dist = r.final_counts().cloned().unwrap_or_default();
        for (v, n) in &dist {
            *verdict_histogram.entry(*v).or_default() += n;
        }
        *terminal_histogram.entry(format!("{:?}", r.terminal_status)).or_default() += 1;
        problems.push(ProblemEval {
            problem_id: r.problem_id.clone(),
            initial_pass_hidden: h.initial_pass,
            final_pass_hidden: h.final_pass,
            initial_pass_tv: r.initial_candidate_correct_on_tv,
            final_pass_tv: r.final_candidate_correct_on_tv,
            terminal_status: r.terminal_status,
            iterations_used: r.final_candidate.as_ref().map_or(0, |c| c.iteration),
            verdict_distribution: dist,
            tokens: r.token_usage.total(),
        });
    }
    let initially_wrong = |p: &ProblemEval| match rsr_basis {
        RsrBasis::Hidden => !p.initial_pass_hidden,
        RsrBasis::Public => !p.initial_pass_tv,
    };
    let wrong = problems.iter().filter(|p| initially_wrong(p)).count();
    let repaired = problems
        .iter()
        .filter(|p| initially_wrong(p) && p.final_pass_hidden)
        .count();
    Ok(EvalReport {
        corpus_id: corpus_id.to_string(),
        config_fingerprint: config_fingerprint.to_string(),
        rsr_basis,
        pass_at_1: ratio(problems.iter().filter(|p| p.final_pass_hidden).count(), problems.len()),
        rsr: (wrong > 0).then(|| ratio(repaired, wrong)),
        mean_tokens: problems.iter().map(|p| p.tokens as f64).sum::<f64>() / problems.len() as f64,
        problems,
        verdict_histogram,
        terminal_histogram,
    })
}

/// Run one candidate on the hidden tests. A missing candidate fails.
pub fn judge_candidate(
    spec: &ProblemSpec,
    candidate: Option<&CandidateProgram>,
    sandbox: &Sandbox,
    limits: &ResourceLimits,
) -> Result<Option<HiddenOutcome>, EvalError> {
    let Some(candidate) = candidate else {
        return Ok(None);
    };
    let program = candidate.plain_program(&spec.public_view());
    sandbox
        .evaluate_hidden(&program, &spec.hidden_tests, limits)
        .map(Some)
        .map_err(|source| EvalError::Sandbox {
            problem: spec.id.clone(),
            source,
        })
}

/// Judge the initial and final candidates of every result on hidden tests.
pub fn evaluate_hidden_all(
    specs: &[ProblemSpec],
    results: &[RunResult],
    sandbox: &Sandbox,
    limits: &ResourceLimits,
) -> Result<BTreeMap<String, HiddenEval>, EvalError> {
    let by_id: BTreeMap<&str, &ProblemSpec> = specs.iter().map(|s| (s.id.as_str(), s)).collect();
    let judged: Vec<Result<(String, HiddenEval), EvalError>> = std::thread::scope(|s| {
        let handles: Vec<_> = results
            .iter()
            .map(|r| {
                let spec = by_id.get(r.problem_id.as_str()).copied();
                s.spawn(move || {
                    let spec = spec.ok_or_else(|| EvalError::UnknownProblem(r.problem_id.clone()))?;
                    let passes = |c: Option<&CandidateProgram>| {
                        judge_candidate(spec, c, sandbox, limits).map(|o| o.is_some_and(|o| o.passed))
                    };
                    let initial_pass = passes(r.initial_candidate.as_ref())?;
                    let final_pass = match (&r.initial_candidate, &r.final_candidate) {
                        (Some(a), Some(b)) if a.hash == b.hash => initial_pass,
                        _ => passes(r.final_candidate.as_ref())?,
                    };
                    Ok((r.problem_id.clone(), HiddenEval { initial_pass, final_pass }))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("hidden evaluation thread")).collect()
    });
    judged.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: SelectionStrategy,
    pub pass_at_1: f64,
    pub rsr: Option<f64>,
    pub mean_tokens: f64,
}

/// Solve the corpus once per feedback-selection strategy. `backend_for`
/// supplies a fresh backend for each strategy.
pub fn ablation_run(
    corpus_id: &str,
    corpus: &[ProblemSpec],
    strategies: &[SelectionStrategy],
    config: &RunConfig,
    backend_for: &dyn Fn(SelectionStrategy) -> Result<Box<dyn ChatBackend>, String>,
    sandbox: &Sandbox,
) -> Result<Vec<AblationRow>, EvalError> {
    let public: Vec<_> = corpus.iter().map(ProblemSpec::public_view).collect();
    strategies
        .iter()
        .map(|&strategy| {
            let config = RunConfig {
                selection_strategy: strategy,
                ..config.clone()
            };
            let backend = backend_for(strategy).map_err(|e| EvalError::Io(io::Error::other(e)))?;
            let batch = solve_batch(&public, &config, backend.as_ref(), sandbox, config.parallelism);
            let hidden = evaluate_hidden_all(corpus, &batch.results, sandbox, &config.limits())?;
            let report = compute_metrics(corpus_id, &config.fingerprint(), config.rsr_basis, &batch.results, &hidden)?;
            Ok(AblationRow {
                strategy,
                pass_at_1: report.pass_at_1,
                rsr: report.rsr,
                mean_tokens: report.mean_tokens,
            })
        })
        .collect()
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["strategy", "pass_at_1", "rsr", "mean_tokens"])?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            format!("{:.4}", r.pass_at_1),
            r.rsr.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}")),
            format!("{:.1}", r.mean_tokens),
        ])?;
    }
    w.flush()?;
    Ok(())
}
