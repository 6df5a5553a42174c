//! Benchmark file readers.
//!
//! Supported layouts:
//!
//! * HumanEval JSONL: `task_id`, `prompt`, `entry_point`, `test`. Hidden tests
//!   are the top-level `assert candidate(...) == ...` lines of `check`; public
//!   tests are the `>>> entry(...)` doctests in the prompt.
//! * MBPP JSONL: `task_id`, `text`, `test_list`. The first listed test becomes
//!   the public test.
//! * LiveCodeBench JSON (array) or JSONL: `question_id`, `question_content`,
//!   `public_test_cases`, `private_test_cases`, `metadata`, `starter_code`.
//!   Test lists may be embedded JSON strings, as upstream ships them. Public
//!   tests are taken from `public_test_cases` only and hidden tests from
//!   `private_test_cases` only; a case present in both stays public. The
//!   compressed (base64/zlib) private-test encoding is not decoded here.
//! * Custom JSONL: one serialized [`ProblemSpec`] per line.
//!
//! Records that cannot be converted are skipped and reported with their line
//! number (for a JSON array, the 1-based element index).

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::{
    pair_key, split_first_test_as_public, CorpusError, IoStyle, ProblemSpec, SourceBenchmark,
    TestCase, TestKind, DEFAULT_TIME_LIMIT_MS,
};
use crate::literal::{bracket_balance, json_to_python, matching_close, split_top_level, strip_comment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    HumanEvalJsonl,
    MbppJsonl,
    LiveCodeBenchJson,
    CustomJsonl,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "humaneval" | "humanevaljsonl" => Ok(Self::HumanEvalJsonl),
            "mbpp" | "mbppjsonl" => Ok(Self::MbppJsonl),
            "livecodebench" | "lcb" | "livecodebenchjson" => Ok(Self::LiveCodeBenchJson),
            "custom" | "customjsonl" => Ok(Self::CustomJsonl),
            _ => Err(CorpusError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

impl Rejection {
    pub fn as_error(&self) -> CorpusError {
        CorpusError::MalformedRecord {
            line: self.line,
            reason: self.reason.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub problems: Vec<ProblemSpec>,
    pub rejections: Vec<Rejection>,
    /// Number of records seen in the input.
    pub records: usize,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<LoadedCorpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_corpus(&text, format))
}

pub fn parse_corpus(text: &str, format: CorpusFormat) -> LoadedCorpus {
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (line, record) in records(text, format) {
        out.records += 1;
        let converted = record
            .and_then(|v| convert(&v, format))
            .and_then(|spec| spec.validate().map(|_| spec).map_err(|e| e.to_string()));
        match converted {
            Ok(spec) if !seen.insert(spec.id.clone()) => out.rejections.push(Rejection {
                line,
                reason: format!("duplicate id {}", spec.id),
            }),
            Ok(spec) => out.problems.push(spec),
            Err(reason) => {
                tracing::warn!(line, %reason, "skipping malformed record");
                out.rejections.push(Rejection { line, reason });
            }
        }
    }
    out
}

fn records(text: &str, format: CorpusFormat) -> Vec<(usize, Result<Value, String>)> {
    if format == CorpusFormat::LiveCodeBenchJson && text.trim_start().starts_with('[') {
        return match serde_json::from_str::<Vec<Value>>(text) {
            Ok(items) => items
                .into_iter()
                .enumerate()
                .map(|(i, v)| (i + 1, Ok(v)))
                .collect(),
            Err(e) => vec![(1, Err(format!("invalid JSON array: {e}")))],
        };
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
        .collect()
}

fn convert(v: &Value, format: CorpusFormat) -> Result<ProblemSpec, String> {
    match format {
        CorpusFormat::HumanEvalJsonl => humaneval(v),
        CorpusFormat::MbppJsonl => mbpp(v),
        CorpusFormat::LiveCodeBenchJson => livecodebench(v),
        CorpusFormat::CustomJsonl => {
            serde_json::from_value::<ProblemSpec>(v.clone()).map_err(|e| e.to_string())
        }
    }
}

fn str_field<'a>(v: &'a Value, name: &str) -> Result<&'a str, String> {
    v.get(name)
        .ok_or_else(|| format!("missing field `{name}`"))?
        .as_str()
        .ok_or_else(|| format!("field `{name}` is not a string"))
}

fn humaneval(v: &Value) -> Result<ProblemSpec, String> {
    let id = str_field(v, "task_id")?.to_string();
    let prompt = str_field(v, "prompt")?;
    let entry = str_field(v, "entry_point")?.to_string();
    let test_code = str_field(v, "test")?;

    let hidden: Vec<TestCase> = check_body_asserts(test_code)
        .into_iter()
        .filter_map(|stmt| parse_assert(&stmt))
        .filter(|a| a.callee == "candidate")
        .map(|a| TestCase::hidden(a.args, a.expected).with_origin("check"))
        .collect();
    if hidden.is_empty() {
        return Err("no extractable hidden tests in `test`".into());
    }
    let hidden_keys: HashSet<_> = hidden
        .iter()
        .map(|t| pair_key(IoStyle::FunctionCall, t))
        .collect();
    let public = doctest_cases(prompt, &entry)
        .into_iter()
        .filter(|t| !hidden_keys.contains(&pair_key(IoStyle::FunctionCall, t)))
        .collect();
    Ok(ProblemSpec {
        id,
        description: prompt.to_string(),
        entry_point: entry,
        io_style: IoStyle::FunctionCall,
        subject_language: "python".into(),
        public_tests: public,
        hidden_tests: hidden,
        time_limit_ms: DEFAULT_TIME_LIMIT_MS,
        source_benchmark: SourceBenchmark::HumanEval,
        human_properties: vec![],
    })
}

fn mbpp(v: &Value) -> Result<ProblemSpec, String> {
    let id = match v.get("task_id") {
        Some(Value::Number(n)) => format!("MBPP/{n}"),
        Some(Value::String(s)) => s.clone(),
        _ => return Err("missing field `task_id`".into()),
    };
    let text = str_field(v, "text").or_else(|_| str_field(v, "prompt"))?;
    let tests = v
        .get("test_list")
        .ok_or("missing field `test_list`")?
        .as_array()
        .ok_or("field `test_list` is not an array")?;
    let asserts: Vec<AssertCase> = tests
        .iter()
        .filter_map(Value::as_str)
        .filter_map(parse_assert)
        .collect();
    let entry = asserts
        .first()
        .map(|a| a.callee.clone())
        .ok_or("no extractable tests in `test_list`")?;
    let hidden = asserts
        .into_iter()
        .filter(|a| a.callee == entry)
        .map(|a| TestCase::hidden(a.args, a.expected).with_origin("test_list"))
        .collect();
    let spec = ProblemSpec {
        id,
        description: text.to_string(),
        entry_point: entry,
        io_style: IoStyle::FunctionCall,
        subject_language: "python".into(),
        public_tests: vec![],
        hidden_tests: hidden,
        time_limit_ms: DEFAULT_TIME_LIMIT_MS,
        source_benchmark: SourceBenchmark::Mbpp,
        human_properties: vec![],
    };
    split_first_test_as_public(&spec).map_err(|e| e.to_string())
}

/// A field that upstream may store either inline or as a JSON-encoded string.
fn embedded_json(v: &Value, name: &str) -> Result<Value, String> {
    match v.get(name) {
        None | Some(Value::Null) => Err(format!("missing field `{name}`")),
        Some(Value::String(s)) => serde_json::from_str(s).map_err(|_| {
            format!("field `{name}` is not plain JSON (compressed upstream encoding is not supported)")
        }),
        Some(other) => Ok(other.clone()),
    }
}

fn livecodebench(v: &Value) -> Result<ProblemSpec, String> {
    let id = match v.get("question_id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err("missing field `question_id`".into()),
    };
    let content = str_field(v, "question_content")?;
    let starter = v.get("starter_code").and_then(Value::as_str).unwrap_or("");
    let public_raw = embedded_json(v, "public_test_cases")?;
    let private_raw = embedded_json(v, "private_test_cases")?;
    let metadata = embedded_json(v, "metadata").unwrap_or(Value::Null);

    let cases = |raw: &Value| -> Result<Vec<(String, String, bool)>, String> {
        raw.as_array()
            .ok_or("test list is not an array")?
            .iter()
            .map(|c| {
                let input = str_field(c, "input")?.to_string();
                let output = str_field(c, "output")?.to_string();
                let functional = c.get("testtype").and_then(Value::as_str) == Some("functional");
                Ok((input, output, functional))
            })
            .collect()
    };
    let public = cases(&public_raw)?;
    let private = cases(&private_raw)?;
    if private.is_empty() {
        return Err("no private test cases".into());
    }
    let functional = public.iter().chain(&private).any(|c| c.2);
    let (style, entry) = if functional {
        let func = metadata
            .get("func_name")
            .and_then(Value::as_str)
            .ok_or("functional tests without metadata.func_name")?;
        let entry = if starter.contains("class Solution") {
            format!("Solution.{func}")
        } else {
            func.to_string()
        };
        (IoStyle::FunctionCall, entry)
    } else {
        (IoStyle::Stdio, "main".to_string())
    };
    let convert_case = |(input, output, _): (String, String, bool), kind: TestKind| -> TestCase {
        let (input, output) = match style {
            IoStyle::FunctionCall => (
                input
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(json_to_python)
                    .collect::<Vec<_>>()
                    .join(", "),
                json_to_python(output.trim()),
            ),
            IoStyle::Stdio => (input, output),
        };
        TestCase {
            input,
            expected_output: Some(output),
            kind,
            origin: "livecodebench".into(),
        }
    };
    let public: Vec<TestCase> = public
        .into_iter()
        .map(|c| convert_case(c, TestKind::Public))
        .collect();
    let public_keys: HashSet<_> = public.iter().map(|t| pair_key(style, t)).collect();
    let hidden = private
        .into_iter()
        .map(|c| convert_case(c, TestKind::Hidden))
        .filter(|t| !public_keys.contains(&pair_key(style, t)))
        .collect();
    let mut description = content.to_string();
    if !starter.trim().is_empty() {
        description.push_str("\n\nStarter code:\n");
        description.push_str(starter);
    }
    Ok(ProblemSpec {
        id,
        description,
        entry_point: entry,
        io_style: style,
        subject_language: "python".into(),
        public_tests: public,
        hidden_tests: hidden,
        time_limit_ms: DEFAULT_TIME_LIMIT_MS,
        source_benchmark: SourceBenchmark::LiveCodeBench,
        human_properties: vec![],
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct AssertCase {
    pub callee: String,
    pub args: String,
    pub expected: String,
}

/// `name(args)` spanning the whole of `expr`.
fn whole_call(expr: &str) -> Option<(String, String)> {
    let expr = expr.trim();
    let open = expr.find('(')?;
    let name = expr[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return None;
    }
    if matching_close(expr, open)? != expr.len() - 1 {
        return None;
    }
    Some((name.to_string(), expr[open + 1..expr.len() - 1].trim().to_string()))
}

/// Parse a single `assert` statement of one of the shapes
/// `f(a) == b`, `b == f(a)`, `f(a) is True`, `f(a)`, `not f(a)`.
pub(crate) fn parse_assert(stmt: &str) -> Option<AssertCase> {
    let body = stmt.trim().strip_prefix("assert")?;
    if !body.starts_with([' ', '(']) {
        return None;
    }
    let body = strip_comment(body);
    let condition = split_top_level(body, ",").into_iter().next()?;
    let condition = condition.trim();

    let sides = split_top_level(condition, "==");
    let (call, expected) = match sides.as_slice() {
        [lhs, rhs] => match (whole_call(lhs), whole_call(rhs)) {
            (Some(c), _) => (c, rhs.trim().to_string()),
            (None, Some(c)) => (c, lhs.trim().to_string()),
            _ => return None,
        },
        [single] => {
            let is_parts = split_top_level(single, " is ");
            if let [lhs, rhs] = is_parts.as_slice() {
                let rhs = rhs.trim();
                if !matches!(rhs, "True" | "False" | "None") {
                    return None;
                }
                (whole_call(lhs)?, rhs.to_string())
            } else if let Some(inner) = single.trim().strip_prefix("not ") {
                (whole_call(inner)?, "False".to_string())
            } else {
                (whole_call(single)?, "True".to_string())
            }
        }
        _ => return None,
    };
    let (callee, args) = call;
    if expected.is_empty() || expected.contains(&format!("{callee}(")) {
        return None;
    }
    Some(AssertCase {
        callee,
        args,
        expected,
    })
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// Logical statements (continuation lines joined) directly inside
/// `def check(...)`, ignoring anything nested in loops or conditionals.
fn check_body_asserts(test_code: &str) -> Vec<String> {
    let lines: Vec<&str> = test_code.lines().collect();
    let Some(start) = lines
        .iter()
        .position(|l| l.trim_start().starts_with("def check("))
    else {
        return vec![];
    };
    let def_indent = indent_of(lines[start]);
    let mut body_indent = None;
    let mut out = Vec::new();
    let mut i = start + 1;
    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            i += 1;
            continue;
        }
        let indent = indent_of(line);
        if indent <= def_indent {
            break;
        }
        let body = *body_indent.get_or_insert(indent);
        let mut stmt = line.trim().to_string();
        i += 1;
        while (bracket_balance(&stmt) > 0 || stmt.ends_with('\\')) && i < lines.len() {
            if stmt.ends_with('\\') {
                stmt.pop();
            }
            stmt.push(' ');
            stmt.push_str(lines[i].trim());
            i += 1;
        }
        if indent == body && stmt.starts_with("assert") {
            out.push(stmt);
        }
    }
    out
}

/// `>>> entry(args)` doctests followed by their expected output.
fn doctest_cases(prompt: &str, entry: &str) -> Vec<TestCase> {
    let lines: Vec<&str> = prompt.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let Some(expr) = lines[i].trim().strip_prefix(">>>") else {
            i += 1;
            continue;
        };
        i += 1;
        let mut expected = Vec::new();
        while i < lines.len() {
            let t = lines[i].trim();
            if t.is_empty() || t.starts_with(">>>") || t.contains("\"\"\"") || t.contains("'''") {
                break;
            }
            expected.push(t);
            i += 1;
        }
        if let Some((name, args)) = whole_call(expr) {
            if name == entry && !expected.is_empty() {
                out.push(TestCase::public(args, expected.join(" ")).with_origin("doctest"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assert_shapes() {
        let a = parse_assert("assert candidate(12) == [2, 2, 3]").unwrap();
        assert_eq!((a.callee.as_str(), a.args.as_str(), a.expected.as_str()), ("candidate", "12", "[2, 2, 3]"));
        let a = parse_assert("assert [1] == f(1, 'x)')  # c").unwrap();
        assert_eq!(a.args, "1, 'x)'");
        assert_eq!(a.expected, "[1]");
        assert_eq!(parse_assert("assert f(3) is True").unwrap().expected, "True");
        assert_eq!(parse_assert("assert not f(3)").unwrap().expected, "False");
        assert_eq!(parse_assert("assert f(3)").unwrap().expected, "True");
        assert_eq!(
            parse_assert("assert f(1) == 2, \"message, with comma\"").unwrap().expected,
            "2"
        );
        assert!(parse_assert("assert abs(f(1) - 2) < 1e-6").is_none());
        assert!(parse_assert("assert math.isclose(f(1), 2)").is_none());
        assert!(parse_assert("assertion = 3").is_none());
    }

    #[test]
    fn nested_asserts_are_skipped() {
        let code = "def check(candidate):\n    assert candidate(1) == 1\n    for x in range(3):\n        assert candidate(x) == x\n    assert candidate(\n        2\n    ) == 2\n\nMETA = 1\n";
        let stmts = check_body_asserts(code);
        assert_eq!(stmts.len(), 2);
        assert_eq!(parse_assert(&stmts[1]).unwrap().args, "2");
    }

    #[test]
    fn doctests_extracted() {
        let prompt = "def f(n):\n    \"\"\" doc\n    >>> f(8)\n    [2, 2, 2]\n    >>> g(1)\n    1\n    \"\"\"\n";
        let cases = doctest_cases(prompt, "f");
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].input, "8");
        assert_eq!(cases[0].expected_output.as_deref(), Some("[2, 2, 2]"));
    }

    #[test]
    fn format_names() {
        assert_eq!("HumanEval".parse::<CorpusFormat>().unwrap(), CorpusFormat::HumanEvalJsonl);
        assert_eq!("livecodebench".parse::<CorpusFormat>().unwrap(), CorpusFormat::LiveCodeBenchJson);
        assert!(matches!("apps".parse::<CorpusFormat>(), Err(CorpusError::UnknownFormat(_))));
    }
}
