//! On-disk layout of a run.
//!
//! ```text
//! <root>/<timestamp>/
//!   config.toml  corpus.json  transcript.jsonl
//!   <problem>/
//!     result.json  tester_trace.json  iterations.jsonl  timings.jsonl
//!     candidates/iter_<k>.py  instrumented/iter_<k>.py
//! ```
//!
//! `iterations.jsonl` omits wall-clock fields so that a replayed run writes
//! the same bytes as the recording.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{IterationTrace, RunResult};

#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Create `<root>/<UTC timestamp>`, adding a suffix if it already exists.
    pub fn create(root: &Path) -> io::Result<Self> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
        fs::create_dir_all(root)?;
        for n in 0.. {
            let name = if n == 0 { stamp.clone() } else { format!("{stamp}-{n}") };
            let path = root.join(name);
            match fs::create_dir(&path) {
                Ok(()) => return Ok(Self { path }),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e),
            }
        }
        unreachable!()
    }

    pub fn open(path: &Path) -> Self {
        Self { path: path.to_path_buf() }
    }

    pub fn problem_dir(&self, problem_id: &str) -> PathBuf {
        self.path.join(problem_dir_name(problem_id))
    }

    pub fn config_path(&self) -> PathBuf {
        self.path.join("config.toml")
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.path.join("corpus.json")
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.path.join("transcript.jsonl")
    }
}

/// Directory name for a problem id: path separators and other unsafe
/// characters become `_`.
pub fn problem_dir_name(id: &str) -> String {
    let name: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    match name.trim_matches('.') {
        "" => "_".to_string(),
        _ => name,
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, &row).map_err(io::Error::other)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)
}

fn reproducible(trace: &IterationTrace) -> io::Result<serde_json::Value> {
    let mut v = serde_json::to_value(trace).map_err(io::Error::other)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("wall_time_ms");
    }
    Ok(v)
}

/// Write every artifact of one problem's run.
pub fn write_problem(run: &RunDir, result: &RunResult) -> io::Result<PathBuf> {
    let dir = run.problem_dir(&result.problem_id);
    fs::create_dir_all(dir.join("candidates"))?;
    fs::create_dir_all(dir.join("instrumented"))?;
    for c in &result.candidates {
        fs::write(dir.join("candidates").join(format!("iter_{}.py", c.iteration)), &c.source)?;
    }
    for (iteration, inst) in &result.instrumented {
        fs::write(
            dir.join("instrumented").join(format!("iter_{iteration}.py")),
            &inst.program.source,
        )?;
    }
    let tester = json!({
        "properties": result.properties,
        "checks": result.checks,
        "pbt_batch": result.pbt_batch,
    });
    fs::write(
        dir.join("tester_trace.json"),
        serde_json::to_string_pretty(&tester).map_err(io::Error::other)?,
    )?;
    let rows = result.traces.iter().map(reproducible).collect::<io::Result<Vec<_>>>()?;
    write_jsonl(&dir.join("iterations.jsonl"), rows)?;
    write_jsonl(
        &dir.join("timings.jsonl"),
        result
            .traces
            .iter()
            .map(|t| json!({"iteration": t.iteration, "wall_time_ms": t.wall_time_ms})),
    )?;
    fs::write(
        dir.join("result.json"),
        serde_json::to_string_pretty(result).map_err(io::Error::other)?,
    )?;
    Ok(dir)
}

/// Results read back from a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredRun {
    pub results: Vec<RunResult>,
}

/// Load every `<problem>/result.json` under a run directory, sorted by
/// directory name.
pub fn read_run(path: &Path) -> io::Result<StoredRun> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("result.json").is_file())
        .collect();
    dirs.sort();
    let results = dirs
        .iter()
        .map(|d| {
            let text = fs::read_to_string(d.join("result.json"))?;
            serde_json::from_str(&text).map_err(io::Error::other)
        })
        .collect::<io::Result<Vec<RunResult>>>()?;
    Ok(StoredRun { results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_names_are_path_safe() {
        assert_eq!(problem_dir_name("HumanEval/12"), "HumanEval_12");
        assert_eq!(problem_dir_name(".."), "_");
        assert_eq!(problem_dir_name("a b?c"), "a_b_c");
    }

    #[test]
    fn run_dirs_never_collide() {
        let root = tempfile::tempdir().unwrap();
        let a = RunDir::create(root.path()).unwrap();
        let b = RunDir::create(root.path()).unwrap();
        assert_ne!(a.path, b.path);
    }
}
