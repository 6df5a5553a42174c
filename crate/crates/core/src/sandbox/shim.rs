//! Wire protocol between the sandbox supervisor and the runner harness.
//!
//! The supervisor writes a [`ShimManifest`] as JSON next to the program and
//! input files, then runs `interpreter runner.py manifest.json`. The runner's
//! exit code and stderr are interpreted with [`ShimExit::from_code`].
//!
//! A runner bundled with the crate ([`EMBEDDED_SHIM`]) is used unless an
//! external one is configured; any replacement must honour this module.

use serde::{Deserialize, Serialize};

use crate::problem::IoStyle;

pub const MANIFEST_VERSION: u32 = 1;

/// Prefix of every property-violation message on stderr; followed by the
/// property id and a colon.
pub const SENTINEL_PREFIX: &str = "PGS_PV:";

/// Marker the runner prints on stderr before exiting with [`EXIT_SETUP_ERROR`].
pub const SETUP_ERROR_MARKER: &str = "PGS_SHIM_ERROR:";

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNCAUGHT: i32 = 1;
pub const EXIT_VIOLATION: i32 = 3;
pub const EXIT_SETUP_ERROR: i32 = 78;

/// Name of the runner file inside a scratch directory.
pub const SHIM_FILE: &str = "runner.py";

pub const EMBEDDED_SHIM: &str = include_str!("../../assets/shim/runner.py");

/// Sentinel string announcing a violation of property `id`.
pub fn sentinel_for(id: &str) -> String {
    format!("{SENTINEL_PREFIX}{id}:")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSource {
    pub property_id: String,
    /// Python source defining `check(...)`; see the module docs of `tester`.
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimManifest {
    pub version: u32,
    pub mode: IoStyle,
    /// Callable to invoke in function-call mode; `Class.method` instantiates `Class`.
    pub entry_point: String,
    pub program_path: String,
    pub input_path: String,
    /// Checks evaluated after the program returns, in order.
    pub check_sources: Vec<CheckSource>,
    pub coverage: bool,
    pub coverage_path: String,
    pub sentinel_prefix: String,
}

impl ShimManifest {
    pub fn new(mode: IoStyle, entry_point: &str) -> Self {
        Self {
            version: MANIFEST_VERSION,
            mode,
            entry_point: entry_point.to_string(),
            program_path: "candidate.py".into(),
            input_path: "input.txt".into(),
            check_sources: Vec::new(),
            coverage: false,
            coverage_path: "coverage.json".into(),
            sentinel_prefix: SENTINEL_PREFIX.into(),
        }
    }
}

/// Meaning of a runner exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShimExit {
    Ok,
    Uncaught,
    Violation,
    SetupError,
    /// Any other code, e.g. `sys.exit(2)` from the candidate.
    Other(i32),
}

impl ShimExit {
    pub fn from_code(code: i32) -> Self {
        match code {
            EXIT_OK => ShimExit::Ok,
            EXIT_UNCAUGHT => ShimExit::Uncaught,
            EXIT_VIOLATION => ShimExit::Violation,
            EXIT_SETUP_ERROR => ShimExit::SetupError,
            other => ShimExit::Other(other),
        }
    }
}

/// Property id of the earliest registered sentinel in `stderr`.
pub fn find_violation<'a>(stderr: &str, ids: impl IntoIterator<Item = &'a str>) -> Option<String> {
    ids.into_iter()
        .filter_map(|id| stderr.find(&sentinel_for(id)).map(|pos| (pos, id)))
        .min()
        .map(|(_, id)| id.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_json_shape() {
        let mut m = ShimManifest::new(IoStyle::FunctionCall, "factorize");
        m.check_sources.push(CheckSource {
            property_id: "p1".into(),
            code: "def check(args, result):\n    return True\n".into(),
        });
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["mode"], "FunctionCall");
        assert_eq!(v["sentinel_prefix"], "PGS_PV:");
        assert_eq!(v["check_sources"][0]["property_id"], "p1");
        let back: ShimManifest = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn exit_code_table() {
        assert_eq!(ShimExit::from_code(0), ShimExit::Ok);
        assert_eq!(ShimExit::from_code(1), ShimExit::Uncaught);
        assert_eq!(ShimExit::from_code(3), ShimExit::Violation);
        assert_eq!(ShimExit::from_code(78), ShimExit::SetupError);
        assert_eq!(ShimExit::from_code(2), ShimExit::Other(2));
    }

    #[test]
    fn earliest_sentinel_wins() {
        let err = "noise PGS_PV:p2: x\nPGS_PV:p1: y";
        assert_eq!(find_violation(err, ["p1", "p2"]), Some("p2".into()));
        assert_eq!(find_violation(err, ["p3"]), None);
        // p1 must not match p10
        assert_eq!(find_violation("PGS_PV:p10: z", ["p1"]), None);
    }
}
