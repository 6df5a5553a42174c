#![allow(dead_code)]

use pbtgen_core::problem::IoStyle;
use pbtgen_core::sandbox::{CheckSource, Program, ResourceLimits, Sandbox, SandboxConfig, Verdict};

pub fn sandbox() -> Sandbox {
    Sandbox::new(SandboxConfig::default()).expect("sandbox")
}

pub struct Fixture {
    pub name: &'static str,
    pub program: Program,
    pub input: &'static str,
    pub expected: Option<&'static str>,
    pub limits: ResourceLimits,
    pub verdict: Verdict,
    pub violated: Option<&'static str>,
}

fn f(
    name: &'static str,
    source: &str,
    style: IoStyle,
    entry: &str,
    input: &'static str,
    expected: Option<&'static str>,
    verdict: Verdict,
) -> Fixture {
    Fixture {
        name,
        program: Program::plain(source, style, entry),
        input,
        expected,
        limits: ResourceLimits::with_time_limit(4000),
        verdict,
        violated: None,
    }
}

fn check(id: &str, code: &str) -> CheckSource {
    CheckSource {
        property_id: id.into(),
        code: code.into(),
    }
}

pub const FACTORIZE_OK: &str = "\
def factorize(n):
    out, d = [], 2
    while d * d <= n:
        while n % d == 0:
            out.append(d)
            n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out
";

/// Drops the final cofactor: 12 -> [2, 2], 97 -> [].
pub const FACTORIZE_BUGGY: &str = "\
def factorize(n):
    out, d = [], 2
    while d * d <= n:
        while n % d == 0:
            out.append(d)
            n //= d
        d += 1
    return out
";

pub const PRODUCT_CHECK: &str = "\
def check(args, result):
    n = args[0]
    p = 1
    for x in result:
        p *= x
    assert p == n, f'product {p} != {n}'
    return True
";

pub const STDIO_SUM: &str = "a, b = map(int, input().split())\nprint(a + b)\n";

pub fn verdict_fixtures() -> Vec<Fixture> {
    use IoStyle::{FunctionCall as Fc, Stdio};
    use Verdict::*;
    let mut v = vec![
        f("pass_factorize", FACTORIZE_OK, Fc, "factorize", "12", Some("[2,2,3]"), Pass),
        f("pass_stdio_sum", STDIO_SUM, Stdio, "main", "1 2\n", Some("3\n"), Pass),
        f(
            "pass_solution_method",
            "class Solution:\n    def total(self, xs):\n        return sum(xs)\n",
            Fc,
            "Solution.total",
            "[1, 2, 3]",
            Some("6"),
            Pass,
        ),
        f("pass_string_result", "def rev(s):\n    return s[::-1]\n", Fc, "rev", "'ab'", Some("\"ba\""), Pass),
        f(
            "pass_despite_debug_print",
            "def sq(x):\n    print('debug', x)\n    return x * x\n",
            Fc,
            "sq",
            "7",
            Some("49"),
            Pass,
        ),
        f("pass_multiple_args", "def add(a, b):\n    return a + b\n", Fc, "add", "[1], [2]", Some("[1, 2]"), Pass),
        f("wa_factorize", FACTORIZE_BUGGY, Fc, "factorize", "12", Some("[2, 2, 3]"), WrongAnswer),
        f("wa_stdio_sum", "print(0)\n", Stdio, "main", "1 2\n", Some("3\n"), WrongAnswer),
        f("wa_stdio_trailing_space", "print('3 ')\n", Stdio, "main", "", Some("3\n"), WrongAnswer),
        f("wa_none_result", "def g(x):\n    pass\n", Fc, "g", "1", Some("0"), WrongAnswer),
        f("re_raise", "def g(x):\n    raise ValueError('bad')\n", Fc, "g", "1", Some("1"), RuntimeError),
        f("re_zero_division", "def g(x):\n    return 1 // x\n", Fc, "g", "0", Some("1"), RuntimeError),
        f("re_missing_entry", "def other(x):\n    return x\n", Fc, "g", "1", Some("1"), RuntimeError),
        f("re_syntax_error", "def g(x)\n    return x\n", Fc, "g", "1", Some("1"), RuntimeError),
        f("re_stdio_exit_code", "import sys\nsys.exit(2)\n", Stdio, "main", "", Some(""), RuntimeError),
        f(
            "re_memory_limit",
            "def g(x):\n    return len(bytearray(x))\n",
            Fc,
            "g",
            "8 * 1024 ** 3",
            Some("0"),
            RuntimeError,
        ),
        f(
            "re_recursion",
            "def g(x):\n    return g(x + 1)\n",
            Fc,
            "g",
            "0",
            Some("0"),
            RuntimeError,
        ),
        f("tle_busy_loop", "def g(x):\n    while True:\n        x += 1\n", Fc, "g", "0", Some("0"), TimeLimitExceeded),
        f(
            "tle_sleep",
            "import time\ndef g(x):\n    time.sleep(60)\n    return x\n",
            Fc,
            "g",
            "0",
            Some("0"),
            TimeLimitExceeded,
        ),
        f("tle_stdio_loop", "while True:\n    pass\n", Stdio, "main", "", Some(""), TimeLimitExceeded),
    ];
    for t in v.iter_mut().filter(|t| t.verdict == TimeLimitExceeded) {
        t.limits = ResourceLimits::with_time_limit(1000);
    }

    let mut pv_posthoc = f("pv_posthoc_product", FACTORIZE_BUGGY, Fc, "factorize", "12", Some("[2, 2, 3]"), PropertyViolation);
    pv_posthoc.program.posthoc_checks.push(check("p1", PRODUCT_CHECK));
    pv_posthoc.violated = Some("p1");
    v.push(pv_posthoc);

    let mut pv_pbt = f("pv_posthoc_pbt_input", FACTORIZE_BUGGY, Fc, "factorize", "97", None, PropertyViolation);
    pv_pbt.program.posthoc_checks.push(check("p1", PRODUCT_CHECK));
    pv_pbt.violated = Some("p1");
    v.push(pv_pbt);

    let mut pv_embedded = f(
        "pv_embedded_sentinel",
        "def g(x):\n    r = x - 1\n    if r < x:\n        raise AssertionError('PGS_PV:p2: result must not shrink')\n    return r\n",
        Fc,
        "g",
        "5",
        Some("5"),
        PropertyViolation,
    );
    pv_embedded.program.embedded_properties.push("p2".into());
    pv_embedded.violated = Some("p2");
    v.push(pv_embedded);

    let mut pv_stdio = f("pv_stdio_check", "print(-1)\n", Stdio, "main", "1 2\n", Some("3\n"), PropertyViolation);
    pv_stdio.program.posthoc_checks.push(check(
        "p3",
        "def check(input_text, output_text):\n    return int(output_text) >= 0\n",
    ));
    pv_stdio.violated = Some("p3");
    v.push(pv_stdio);

    let mut unregistered = f(
        "re_unregistered_sentinel",
        "def g(x):\n    raise AssertionError('PGS_PV:p9: not ours')\n",
        Fc,
        "g",
        "1",
        Some("1"),
        RuntimeError,
    );
    unregistered.program.embedded_properties.push("p1".into());
    v.push(unregistered);

    let mut crashing_check = f("re_check_crash", FACTORIZE_OK, Fc, "factorize", "12", Some("[2, 2, 3]"), RuntimeError);
    crashing_check.program.posthoc_checks.push(check("p1", "def check(args, result):\n    return result['x']\n"));
    v.push(crashing_check);

    let mut wa_check_holds = f("wa_check_holds", "def factorize(n):\n    return [n]\n", Fc, "factorize", "12", Some("[2, 2, 3]"), WrongAnswer);
    wa_check_holds.program.posthoc_checks.push(check("p1", PRODUCT_CHECK));
    v.push(wa_check_holds);

    v
}

pub mod audit;
pub mod scenarios;
pub mod selection;
