//! Static audit of the agent-side modules' access to hidden tests.

use std::fs;
use std::path::{Path, PathBuf};

/// Modules reachable from the Tester, the Generator and the loop.
pub const AGENT_MODULES: [&str; 4] = ["tester", "generator", "orchestrator", "llm"];

/// Identifiers that would give a module a path to hidden tests.
pub const FORBIDDEN: [&str; 6] = [
    "hidden_tests",
    "evaluate_hidden",
    "ProblemSpec",
    "crate::eval",
    "pbtgen_core::eval",
    "TestKind::Hidden",
];

fn sources(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            sources(&path, out);
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path);
        }
    }
}

/// `(file, line number, identifier)` for every forbidden use.
pub fn violations() -> Vec<(PathBuf, usize, &'static str)> {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut files = Vec::new();
    for m in AGENT_MODULES {
        let dir = src.join(m);
        assert!(dir.is_dir(), "missing module {m}");
        sources(&dir, &mut files);
    }
    assert!(files.len() >= 10, "audit found only {} files", files.len());
    let mut found = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        for (i, line) in text.lines().enumerate() {
            for word in FORBIDDEN {
                if line.contains(word) {
                    found.push((f.clone(), i + 1, word));
                }
            }
        }
    }
    found
}

/// The agent-visible problem type carries no hidden-test data.
pub fn public_view_has_no_hidden_field() -> bool {
    let spec = super::scenarios::factorize_problem(&[2, 4]);
    let json = serde_json::to_value(spec.public_view()).unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    !keys.iter().any(|k| k.contains("hidden")) && !json.to_string().contains("Hidden")
}
