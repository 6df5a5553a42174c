use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pbtgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbtgen"))
        .args(args)
        .env_remove("PBTGEN_LOG")
        .output()
        .expect("run pbtgen")
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

/// Solve the four-problem fixture corpus and return the run directory.
fn solved_run(out: &Path) -> PathBuf {
    let o = pbtgen(&[
        "solve",
        "--corpus",
        fixture("corpus4.jsonl").to_str().unwrap(),
        "--backend",
        "mock",
        "--script",
        fixture("script4.json").to_str().unwrap(),
        "--max-iterations",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "solve failed:\n{stdout}\n{stderr}");
    assert!(stdout.contains("pass@1: 0.7500"), "{stdout}");
    let runs: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    runs.into_iter().next().unwrap()
}

#[test]
fn solve_eval_replay_inspect() {
    let out = tempfile::tempdir().unwrap();
    let run = solved_run(out.path());
    for f in ["config.toml", "corpus.json", "transcript.jsonl", "report.json", "report.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    for p in ["add_two", "factorize", "reverse_words", "is_palindrome"] {
        assert!(run.join(p).join("iterations.jsonl").is_file());
    }

    let o = pbtgen(&["eval", "--run", run.to_str().unwrap(), "--json"]);
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.contains("\"pass_at_1\": 0.75"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["rsr"], 0.0);
    assert_eq!(report["problems"].as_array().unwrap().len(), 4);

    let o = pbtgen(&["eval", "--run", run.to_str().unwrap(), "--rsr-basis", "public"]);
    assert!(o.status.success());
    assert!(text(&o).0.contains("RSR (Public basis): 0.0000"));

    let o = pbtgen(&["replay", "--run", run.to_str().unwrap()]);
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stdout}\n{stderr}");
    assert!(stdout.contains("traces identical"));

    let o = pbtgen(&["inspect", "--run", run.to_str().unwrap(), "--problem", "factorize"]);
    let (stdout, _) = text(&o);
    assert!(o.status.success());
    assert!(stdout.contains("== factorize (BudgetExhausted)"), "{stdout}");
    assert!(stdout.contains("iter 1"));
    assert!(stdout.contains("Property Violation="));
}

#[test]
fn replay_detects_tampered_traces() {
    let out = tempfile::tempdir().unwrap();
    let run = solved_run(out.path());
    let traces = run.join("add_two").join("iterations.jsonl");
    let mut bytes = fs::read(&traces).unwrap();
    bytes.extend_from_slice(b"{}\n");
    fs::write(&traces, bytes).unwrap();
    let o = pbtgen(&["replay", "--run", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).0.contains("traces differ for: add_two"));
}

#[test]
fn ablate_prints_one_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ablation.csv");
    let o = pbtgen(&[
        "ablate",
        "--corpus",
        fixture("corpus4.jsonl").to_str().unwrap(),
        "--backend",
        "mock",
        "--script",
        fixture("script4.json").to_str().unwrap(),
        "--max-iterations",
        "1",
        "--strategy",
        "length:min",
        "--strategy",
        "runtime:max",
        "--csv",
        csv.to_str().unwrap(),
        "--json",
    ]);
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    let rows: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["strategy"], "InputLength:Min");
    assert_eq!(rows[1]["strategy"], "Runtime:Max");
    assert_eq!(rows[0]["pass_at_1"], 0.75);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = pbtgen(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).1.contains("Usage"));
}

#[test]
fn internal_failures_exit_nonzero_with_diagnostics() {
    let o = pbtgen(&["eval", "--run", "/nonexistent/run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.starts_with("error:"));

    let o = pbtgen(&["solve", "--corpus", fixture("corpus4.jsonl").to_str().unwrap(), "--backend", "mock"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("mock_script"));

    let o = pbtgen(&["solve", "--corpus", "x.jsonl", "--strategy", "sideways:min"]);
    assert_eq!(o.status.code(), Some(2));
}
