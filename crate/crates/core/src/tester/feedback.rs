//! Choosing one failing case and describing it for the Generator.
//!
//! Failures are grouped by cause tier: property violations and wrong answers
//! first, then runtime errors, then timeouts. Only the best non-empty tier is
//! considered. Within it, violations reported by demoted (insensitive) checks
//! are ignored if anything else failed. The remaining cases are ranked on the
//! strategy's axis and the minimum, lower median or maximum is taken; equal
//! keys go to the case that ran first.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CheckStatus, Property, PropertyCheck, TesterError};
use crate::problem::{PublicProblem, TestCase};
use crate::sandbox::{CaseResult, Program, ResourceLimits, Sandbox, ValidationReport, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankAxis {
    InputLength,
    Runtime,
    LineCoverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rank {
    Min,
    Median,
    Max,
}

impl Rank {
    /// Index into `n` sorted keys; the median is the lower one.
    pub fn position(self, n: usize) -> usize {
        match self {
            Rank::Min => 0,
            Rank::Median => (n - 1) / 2,
            Rank::Max => n - 1,
        }
    }
}

/// Serialized as `Axis:Rank`, e.g. `"InputLength:Min"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SelectionStrategy {
    pub axis: RankAxis,
    pub rank: Rank,
}

impl Default for SelectionStrategy {
    fn default() -> Self {
        Self {
            axis: RankAxis::InputLength,
            rank: Rank::Min,
        }
    }
}

impl SelectionStrategy {
    pub const fn new(axis: RankAxis, rank: Rank) -> Self {
        Self { axis, rank }
    }

    /// All nine axis/rank combinations.
    pub fn all() -> Vec<SelectionStrategy> {
        [RankAxis::InputLength, RankAxis::Runtime, RankAxis::LineCoverage]
            .into_iter()
            .flat_map(|axis| [Rank::Min, Rank::Median, Rank::Max].map(|rank| Self { axis, rank }))
            .collect()
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}:{:?}", self.axis, self.rank)
    }
}

impl From<SelectionStrategy> for String {
    fn from(s: SelectionStrategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SelectionStrategy {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl FromStr for SelectionStrategy {
    type Err = String;

    /// `axis:rank`, case-insensitive; e.g. `length:min`, `Runtime:Median`, `coverage:max`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, r) = s
            .split_once(':')
            .ok_or_else(|| format!("expected axis:rank, got `{s}`"))?;
        let axis = match a.trim().to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "length" | "inputlength" | "len" => RankAxis::InputLength,
            "runtime" | "time" => RankAxis::Runtime,
            "coverage" | "linecoverage" | "cov" => RankAxis::LineCoverage,
            other => return Err(format!("unknown ranking axis `{other}`")),
        };
        let rank = match r.trim().to_ascii_lowercase().as_str() {
            "min" => Rank::Min,
            "median" | "med" => Rank::Median,
            "max" => Rank::Max,
            other => return Err(format!("unknown rank `{other}`")),
        };
        Ok(Self { axis, rank })
    }
}

/// Cause tier of a failing verdict (lower is preferred); `None` for a pass.
pub fn cause_tier(v: Verdict) -> Option<u8> {
    match v {
        Verdict::Pass => None,
        Verdict::PropertyViolation | Verdict::WrongAnswer => Some(0),
        Verdict::RuntimeError => Some(1),
        Verdict::TimeLimitExceeded => Some(2),
    }
}

/// Index in `report.results` of the case to report, or `None` if all passed.
///
/// `keys[i]` is the ranking key of result `i`; cases without a key are left
/// out of the ranking, and if none has one the execution order is used.
pub fn select_failure(
    report: &ValidationReport,
    demoted: &BTreeSet<String>,
    keys: &[Option<u64>],
    rank: Rank,
) -> Option<usize> {
    let failures: Vec<(usize, &CaseResult)> = report.failures().collect();
    let tier = failures.iter().filter_map(|(_, r)| cause_tier(r.result.verdict)).min()?;
    let mut pool: Vec<usize> = failures
        .iter()
        .filter(|(_, r)| cause_tier(r.result.verdict) == Some(tier))
        .map(|(i, _)| *i)
        .collect();
    let is_demoted = |i: &usize| {
        let r = &report.results[*i].result;
        r.verdict == Verdict::PropertyViolation
            && r.violated_property.as_ref().is_some_and(|p| demoted.contains(p))
    };
    if pool.iter().any(|i| !is_demoted(i)) {
        pool.retain(|i| !is_demoted(i));
    }
    let mut keyed: Vec<(u64, usize)> = pool
        .iter()
        .filter_map(|i| keys.get(*i).copied().flatten().map(|k| (k, *i)))
        .collect();
    if keyed.is_empty() {
        keyed = pool.iter().map(|i| (*i as u64, *i)).collect();
    }
    let mut sorted: Vec<u64> = keyed.iter().map(|(k, _)| *k).collect();
    sorted.sort_unstable();
    let target = sorted[rank.position(sorted.len())];
    keyed.iter().filter(|(k, _)| *k == target).map(|(_, i)| *i).min()
}

/// Why the selected case failed; exactly one cause per feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FeedbackCause {
    PropertyViolation { property_id: String, statement: String },
    PublicTestFailure { expected_output: String },
    RuntimeError,
    TimeLimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub failing_input: TestCase,
    /// Output of the plain candidate on the input, or its error text.
    pub observed_output: String,
    pub cause: FeedbackCause,
    pub strategy_used: SelectionStrategy,
    /// Index of the selected case in the suite report.
    pub report_index: usize,
    pub narrative: String,
}

const MAX_SHOWN: usize = 2000;

fn shorten(s: &str) -> String {
    if s.len() <= MAX_SHOWN {
        return s.to_string();
    }
    let mut cut = MAX_SHOWN;
    while !s.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}\n... ({} more bytes)", &s[..cut], s.len() - cut)
}

/// Traceback text with the runner's own frames removed.
pub fn clean_traceback(stderr: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut lines = stderr.lines().peekable();
    while let Some(line) = lines.next() {
        let t = line.trim_start();
        if t.starts_with("File \"runner.py\"") {
            let indent = line.len() - t.len();
            while let Some(next) = lines.peek() {
                let nt = next.trim_start();
                if next.len() - nt.len() > indent && !nt.starts_with("File ") {
                    lines.next();
                } else {
                    break;
                }
            }
            continue;
        }
        out.push(line);
    }
    let keep = out.len().saturating_sub(30);
    out[keep..].join("\n")
}

fn block(text: &str) -> String {
    format!("```\n{}\n```", shorten(text.trim_end_matches('\n')))
}

fn narrative(problem: &PublicProblem, input: &str, observed: &str, cause: &FeedbackCause) -> String {
    let mut parts = vec![format!("The program was run on this input:\n{}", block(input))];
    match cause {
        FeedbackCause::PropertyViolation { statement, .. } => {
            parts.push(format!("Its output violates this property:\n{statement}"));
            parts.push(format!("Observed output:\n{}", block(observed)));
        }
        FeedbackCause::PublicTestFailure { expected_output } => {
            parts.push(format!("Observed output:\n{}", block(observed)));
            parts.push(format!("Expected output:\n{}", block(expected_output)));
        }
        FeedbackCause::RuntimeError => {
            parts.push(format!("It raised an error:\n{}", block(observed)));
        }
        FeedbackCause::TimeLimitExceeded => {
            parts.push(format!("It did not finish within {} ms.", problem.time_limit_ms));
        }
    }
    parts.join("\n\n")
}

#[allow(clippy::too_many_arguments)]
pub(super) fn formulate(
    sandbox: &Sandbox,
    limits: &ResourceLimits,
    problem: &PublicProblem,
    report: &ValidationReport,
    properties: &[Property],
    checks: &[PropertyCheck],
    candidate: &Program,
    strategy: SelectionStrategy,
) -> Result<Feedback, TesterError> {
    let demoted: BTreeSet<String> = checks
        .iter()
        .filter(|c| c.status == CheckStatus::RejectedInsensitive)
        .map(|c| c.property_id.clone())
        .collect();
    let keys: Vec<Option<u64>> = match strategy.axis {
        RankAxis::InputLength => report.results.iter().map(|r| Some(r.case.input_len() as u64)).collect(),
        RankAxis::Runtime => report.results.iter().map(|r| Some(r.result.runtime_ms)).collect(),
        RankAxis::LineCoverage => std::thread::scope(|s| {
            let handles: Vec<_> = report
                .results
                .iter()
                .map(|r| {
                    s.spawn(move || {
                        if r.result.verdict == Verdict::Pass {
                            return None;
                        }
                        sandbox
                            .measure_coverage(candidate, &r.case.input, limits)
                            .ok()
                            .map(|lines| lines.len() as u64)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("coverage worker panicked")).collect()
        }),
    };
    let index = select_failure(report, &demoted, &keys, strategy.rank).ok_or(TesterError::NoFailingCases)?;
    let chosen = &report.results[index];
    let result = &chosen.result;
    let (cause, observed) = match result.verdict {
        Verdict::PropertyViolation => {
            let id = result.violated_property.clone().unwrap_or_default();
            let statement = properties
                .iter()
                .find(|p| p.id == id)
                .map(|p| p.text.clone())
                .unwrap_or_else(|| format!("property {id}"));
            // The violation aborted the run; rerun the plain program to see its output.
            let plain = sandbox.run_input(candidate, &chosen.case.input, None, limits)?;
            let observed = match plain.verdict {
                Verdict::Pass => plain.actual_output,
                _ => clean_traceback(&plain.stderr),
            };
            (FeedbackCause::PropertyViolation { property_id: id, statement }, observed)
        }
        Verdict::WrongAnswer => (
            FeedbackCause::PublicTestFailure {
                expected_output: chosen.case.expected_output.clone().unwrap_or_default(),
            },
            result.actual_output.clone(),
        ),
        Verdict::RuntimeError => (FeedbackCause::RuntimeError, clean_traceback(&result.stderr)),
        Verdict::TimeLimitExceeded | Verdict::Pass => (FeedbackCause::TimeLimitExceeded, String::new()),
    };
    Ok(Feedback {
        narrative: narrative(problem, &chosen.case.input, &observed, &cause),
        failing_input: chosen.case.clone(),
        observed_output: observed,
        cause,
        strategy_used: strategy,
        report_index: index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing() {
        assert_eq!("length:min".parse::<SelectionStrategy>().unwrap(), SelectionStrategy::default());
        assert_eq!(
            "Runtime:Median".parse::<SelectionStrategy>().unwrap(),
            SelectionStrategy::new(RankAxis::Runtime, Rank::Median)
        );
        assert_eq!(
            "line_coverage:max".parse::<SelectionStrategy>().unwrap(),
            SelectionStrategy::new(RankAxis::LineCoverage, Rank::Max)
        );
        assert!("length".parse::<SelectionStrategy>().is_err());
        assert!("width:min".parse::<SelectionStrategy>().is_err());
        for s in SelectionStrategy::all() {
            assert_eq!(s.to_string().parse::<SelectionStrategy>().unwrap(), s);
        }
        assert_eq!(SelectionStrategy::all().len(), 9);
    }

    #[test]
    fn median_is_lower() {
        assert_eq!(Rank::Median.position(4), 1);
        assert_eq!(Rank::Median.position(5), 2);
        assert_eq!(Rank::Median.position(1), 0);
    }

    #[test]
    fn traceback_cleanup() {
        let tb = "Traceback (most recent call last):\n  File \"runner.py\", line 150, in <module>\n    main()\n  File \"runner.py\", line 120, in main\n    result = f(*args)\n  File \"candidate.py\", line 2, in f\n    return 1 // x\nZeroDivisionError: integer division or modulo by zero\n";
        assert_eq!(
            clean_traceback(tb),
            "Traceback (most recent call last):\n  File \"candidate.py\", line 2, in f\n    return 1 // x\nZeroDivisionError: integer division or modulo by zero"
        );
    }
}
