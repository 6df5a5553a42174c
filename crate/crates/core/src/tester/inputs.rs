//! PBT input synthesis: the model writes a seeded generator script, the
//! sandbox runs it, and inputs the runner could not parse are discarded.

use serde::{Deserialize, Serialize};

use super::{pbt_case, Tester};
use crate::llm::{first_code_block, Bindings, TemplateId};
use crate::problem::{IoStyle, PublicProblem, TestCase};
use crate::sandbox::{Program, ResourceLimits, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbtInputBatch {
    pub generator_source: String,
    pub seed: u64,
    pub inputs: Vec<TestCase>,
    /// Generated inputs dropped as unparseable, duplicate or over the count.
    pub discarded: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

const ARG_LIST_VALIDATOR: &str = r#"import ast, json, sys
ok = []
for s in json.load(sys.stdin):
    src = "(" + s + ",)"
    try:
        ast.literal_eval(src)
        ok.append(True)
        continue
    except Exception:
        pass
    try:
        eval(compile(src, "<input>", "eval"), {"__builtins__": __builtins__}, {})
        ok.append(True)
    except Exception:
        ok.append(False)
print(json.dumps(ok))
"#;

fn input_format(problem: &PublicProblem) -> String {
    match problem.io_style {
        IoStyle::FunctionCall => format!(
            "Print one test input per line. Each line is the argument list for one call to `{}`, written as Python literals separated by commas, for example `[3, 1, 2], 5` for a call with two arguments.",
            problem.entry_point
        ),
        IoStyle::Stdio => "Print a single JSON array of strings using `json.dumps`. Each string is the complete standard input for one run of the program, including newlines.".to_string(),
    }
}

fn split_output(style: IoStyle, stdout: &str) -> Result<Vec<String>, String> {
    match style {
        IoStyle::FunctionCall => Ok(stdout
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()),
        IoStyle::Stdio => serde_json::from_str::<Vec<String>>(stdout.trim())
            .or_else(|e| {
                stdout
                    .lines()
                    .rev()
                    .find(|l| !l.trim().is_empty())
                    .and_then(|l| serde_json::from_str(l.trim()).ok())
                    .ok_or(e)
            })
            .map_err(|e| format!("generator output is not a JSON array of strings: {e}")),
    }
}

impl Tester<'_> {
    fn parseable(&self, candidates: &[String]) -> Result<Vec<bool>, String> {
        let program = Program::plain(ARG_LIST_VALIDATOR, IoStyle::Stdio, "main");
        let payload = serde_json::to_string(candidates).expect("strings serialize");
        let limits = ResourceLimits::with_time_limit(self.config.generator_time_limit_ms);
        let r = self
            .sandbox
            .run_input(&program, &payload, None, &limits)
            .map_err(|e| e.to_string())?;
        if r.verdict != Verdict::Pass {
            return Err(format!("input validation ended with {}", r.verdict));
        }
        serde_json::from_str(r.actual_output.trim()).map_err(|e| format!("input validation output: {e}"))
    }

    fn run_generator(&self, problem: &PublicProblem, source: &str) -> Result<Vec<String>, String> {
        let mut program = Program::plain(source, IoStyle::Stdio, "main");
        program.env.push(("PGS_SEED".into(), self.config.seed.to_string()));
        let limits = ResourceLimits::with_time_limit(self.config.generator_time_limit_ms);
        let r = self
            .sandbox
            .run_input(&program, "", None, &limits)
            .map_err(|e| e.to_string())?;
        if r.verdict != Verdict::Pass {
            let tail = r.stderr.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
            return Err(format!("generator script ended with {}: {}", r.verdict, tail.trim()));
        }
        split_output(problem.io_style, &r.actual_output)
    }
}

pub(super) fn synthesize(tester: &Tester<'_>, problem: &PublicProblem) -> PbtInputBatch {
    let seed = tester.config.seed;
    let mut batch = PbtInputBatch {
        generator_source: String::new(),
        seed,
        inputs: Vec::new(),
        discarded: 0,
        diagnostics: Vec::new(),
    };
    if let Err(e) = fill(tester, problem, &mut batch) {
        tracing::warn!(problem = %problem.id, error = %e, "no PBT inputs");
        batch.diagnostics.push(e);
    }
    batch
}

fn fill(tester: &Tester<'_>, problem: &PublicProblem, batch: &mut PbtInputBatch) -> Result<(), String> {
    let bindings = Bindings::from([
        ("description".to_string(), problem.description.clone()),
        ("count".to_string(), tester.config.pbt_input_count.to_string()),
        ("input_format".to_string(), input_format(problem)),
    ]);
    let reply = tester
        .ask(problem, TemplateId::InputGenerator, bindings)
        .map_err(|e| e.to_string())?;
    batch.generator_source = first_code_block(&reply).ok_or("no generator script in response")?;
    let raw = tester.run_generator(problem, &batch.generator_source)?;
    let total = raw.len();
    let mut seen = std::collections::HashSet::new();
    let mut unique: Vec<String> = raw.into_iter().filter(|s| seen.insert(s.clone())).collect();
    if problem.io_style == IoStyle::FunctionCall && !unique.is_empty() {
        let ok = tester.parseable(&unique).map_err(|e| e.to_string())?;
        unique = unique.into_iter().zip(ok).filter(|(_, ok)| *ok).map(|(s, _)| s).collect();
    }
    unique.truncate(tester.config.pbt_input_count);
    batch.discarded = total - unique.len();
    batch.inputs = unique.into_iter().map(|s| pbt_case(s, batch.seed)).collect();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_call_lines() {
        let got = split_output(IoStyle::FunctionCall, "12\n\n# comment\n[1, 2], 3\n").unwrap();
        assert_eq!(got, ["12", "[1, 2], 3"]);
    }

    #[test]
    fn stdio_json_array() {
        assert_eq!(split_output(IoStyle::Stdio, "[\"1 2\\n\", \"3 4\\n\"]\n").unwrap(), ["1 2\n", "3 4\n"]);
        assert_eq!(split_output(IoStyle::Stdio, "debug\n[\"x\"]\n").unwrap(), ["x"]);
        assert!(split_output(IoStyle::Stdio, "1 2\n").is_err());
    }
}
