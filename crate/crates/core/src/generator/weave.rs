//! Built-in instrumentation for function-call programs.
//!
//! The woven block wraps the entry point so that the outermost call, once it
//! returns, runs every check on a copy of its arguments and its result and
//! raises `AssertionError("<sentinel> ...")` on the first violation. Recursive
//! calls are not checked.

use crate::sandbox::INSTRUMENTATION_MARKER;
use crate::tester::PropertyCheck;

const WEAVER: &str = r#"def __pgs_install(entry, sources):
    import copy
    import functools

    checks = []
    for pid, sentinel, src in sources:
        ns = {"__name__": "__pgs_check__"}
        exec(compile(src, "<check %s>" % pid, "exec"), ns)
        checks.append((sentinel, ns["check"]))
    depth = [0]

    def safe_copy(value):
        try:
            return copy.deepcopy(value)
        except Exception:
            return value

    def wrap(fn, is_method):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            outer = depth[0] == 0
            call_args = args[1:] if is_method else args
            saved = safe_copy(call_args) if outer else None
            depth[0] += 1
            try:
                result = fn(*args, **kwargs)
            finally:
                depth[0] -= 1
            if outer:
                for sentinel, check in checks:
                    try:
                        verdict = check(safe_copy(saved), safe_copy(result))
                        failed = verdict is not None and not bool(verdict)
                    except AssertionError:
                        failed = True
                    if failed:
                        raise AssertionError(
                            "%s property violated for input %r, output=%r" % (sentinel, saved, result)
                        )
            return result

        return inner

    scope = globals()
    if "." in entry:
        cls_name, meth = entry.split(".", 1)
        cls = scope.get(cls_name)
        if cls is not None and hasattr(cls, meth):
            setattr(cls, meth, wrap(getattr(cls, meth), True))
    elif entry in scope:
        scope[entry] = wrap(scope[entry], False)
"#;

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// Text before the instrumentation marker line, or all of `source`.
/// Inverts [`weave_checks`] for sources ending in a newline.
pub fn strip_instrumentation(source: &str) -> &str {
    let mut offset = 0;
    for line in source.split_inclusive('\n') {
        if line.trim_start().starts_with(INSTRUMENTATION_MARKER) {
            return &source[..offset];
        }
        offset += line.len();
    }
    source
}

/// `source` followed by an instrumentation block for `checks`.
pub fn weave_checks(source: &str, entry_point: &str, checks: &[&PropertyCheck]) -> String {
    let mut out = String::with_capacity(source.len() + WEAVER.len() + 256);
    out.push_str(source);
    if !source.is_empty() && !source.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(INSTRUMENTATION_MARKER);
    out.push('\n');
    out.push_str(WEAVER);
    out.push_str("\n\n__pgs_install(\n    ");
    out.push_str(&py_str(entry_point));
    out.push_str(",\n    [\n");
    for c in checks {
        out.push_str(&format!(
            "        ({}, {}, {}),\n",
            py_str(&c.property_id),
            py_str(&c.sentinel),
            py_str(&c.code)
        ));
    }
    out.push_str("    ],\n)\ndel __pgs_install\n");
    out
}
