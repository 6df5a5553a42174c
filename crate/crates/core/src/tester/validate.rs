//! Soundness and sensitivity filtering of property checks.
//!
//! A check is run, through the runner, against a stand-in program that
//! returns (or prints) a fixed output. On every public pair it must hold; on
//! at least one known wrong output it should fail.

use serde::{Deserialize, Serialize};

use super::{CheckStatus, PropertyCheck, TesterError};
use crate::problem::{IoStyle, PublicProblem};
use crate::sandbox::{Program, ResourceLimits, Sandbox, Verdict};

/// An input whose correct output is known to differ from `wrong_output`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnownError {
    pub input: String,
    pub wrong_output: String,
}

/// Source of a program that ignores its input and produces `output`.
///
/// For function-call problems `output` is a Python literal; for stdio it is
/// the raw text written to stdout.
pub fn constant_program(style: IoStyle, entry_point: &str, output: &str) -> String {
    match style {
        IoStyle::FunctionCall => match entry_point.split_once('.') {
            Some((class, method)) => format!(
                "class {class}:\n    def {method}(self, *args, **kwargs):\n        return (\n{output}\n)\n"
            ),
            None => format!("def {entry_point}(*args, **kwargs):\n    return (\n{output}\n)\n"),
        },
        IoStyle::Stdio => format!(
            "import sys\nsys.stdout.write({})\n",
            serde_json::to_string(output).expect("string serializes")
        ),
    }
}

enum Outcome {
    Held,
    Failed,
    Crashed(String),
}

fn run_check(
    sandbox: &Sandbox,
    limits: &ResourceLimits,
    problem: &PublicProblem,
    check: &PropertyCheck,
    input: &str,
    output: &str,
) -> Result<Outcome, TesterError> {
    let mut program = Program::plain(
        constant_program(problem.io_style, &problem.entry_point, output),
        problem.io_style,
        problem.entry_point.clone(),
    );
    program.posthoc_checks.push(check.source());
    let r = sandbox.run_input(&program, input, None, limits)?;
    Ok(match r.verdict {
        Verdict::Pass | Verdict::WrongAnswer => Outcome::Held,
        Verdict::PropertyViolation => Outcome::Failed,
        Verdict::RuntimeError | Verdict::TimeLimitExceeded => {
            let last = r.stderr.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
            Outcome::Crashed(format!("{}: {}", r.verdict, last.trim()))
        }
    })
}

fn classify(
    sandbox: &Sandbox,
    limits: &ResourceLimits,
    problem: &PublicProblem,
    check: &PropertyCheck,
    known_errors: &[KnownError],
) -> Result<PropertyCheck, TesterError> {
    let mut out = check.clone();
    for t in &problem.public_tests {
        let expected = t.expected_output.as_deref().unwrap_or_default();
        let why = match run_check(sandbox, limits, problem, check, &t.input, expected)? {
            Outcome::Held => continue,
            Outcome::Failed => format!("fails on public test input {}", t.input.trim()),
            Outcome::Crashed(e) => format!("crashes on public test input {}: {e}", t.input.trim()),
        };
        out.status = CheckStatus::RejectedUnsound;
        out.note = Some(why);
        return Ok(out);
    }
    let mut judged = 0usize;
    for ke in known_errors {
        match run_check(sandbox, limits, problem, check, &ke.input, &ke.wrong_output)? {
            Outcome::Failed => {
                out.status = CheckStatus::Sound;
                out.note = None;
                return Ok(out);
            }
            Outcome::Held => judged += 1,
            // The wrong output could not be replayed; it says nothing either way.
            Outcome::Crashed(_) => {}
        }
    }
    if judged > 0 {
        out.status = CheckStatus::RejectedInsensitive;
        out.note = Some(format!("holds on all {judged} known wrong outputs"));
    } else {
        out.status = CheckStatus::Sound;
        out.note = None;
    }
    Ok(out)
}

pub(super) fn validate(
    sandbox: &Sandbox,
    limits: &ResourceLimits,
    problem: &PublicProblem,
    checks: &[PropertyCheck],
    known_errors: &[KnownError],
) -> Result<Vec<PropertyCheck>, TesterError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = checks
            .iter()
            .map(|c| s.spawn(move || classify(sandbox, limits, problem, c, known_errors)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("validation worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_programs() {
        assert_eq!(
            constant_program(IoStyle::FunctionCall, "f", "[1, 2]"),
            "def f(*args, **kwargs):\n    return (\n[1, 2]\n)\n"
        );
        assert!(constant_program(IoStyle::FunctionCall, "Solution.go", "1").starts_with("class Solution:\n    def go(self"));
        assert_eq!(
            constant_program(IoStyle::Stdio, "main", "a\"b\n"),
            "import sys\nsys.stdout.write(\"a\\\"b\\n\")\n"
        );
    }
}
