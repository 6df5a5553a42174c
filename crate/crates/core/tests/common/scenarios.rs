//! Problems, scripted backends and oracles shared by the loop-level tests.

use pbtgen_core::llm::{BackendError, ChatBackend, ChatRequest, ChatResponse, MockBackend, TokenUsage};
use pbtgen_core::orchestrator::RunConfig;
use pbtgen_core::problem::{IoStyle, ProblemSpec, SourceBenchmark, TestCase};

use super::{FACTORIZE_OK, PRODUCT_CHECK};

/// Keeps each prime once: 12 -> [2, 3].
pub const FACTORIZE_DEDUP: &str = "\
def factorize(n):
    out, d = [], 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out
";

pub const PRIME_CHECK: &str = "\
def check(args, result):
    for f in result:
        assert f >= 2 and all(f % k for k in range(2, int(f ** 0.5) + 1)), f'{f} is not prime'
";

pub const SORTED_CHECK: &str = "\
def check(args, result):
    return list(result) == sorted(result)
";

pub const FACTORIZE_PROPERTIES: &str = "\
1. The product of the returned factors equals n.
2. Every returned factor is a prime number.
3. The factors are listed in non-decreasing order.
";

/// Prints twenty seeded integers in [2, 400], one per line.
pub const INT_GENERATOR: &str = "\
import os, random
random.seed(int(os.environ.get('PGS_SEED', '0')))
for _ in range(20):
    print(random.randint(2, 400))
";

pub fn fenced(code: &str) -> String {
    format!("Here is the program.\n\n```python\n{code}```\n")
}

/// Prime factors with multiplicity by testing every candidate divisor
/// against a brute-force primality test.
pub fn factorize_oracle(n: u64) -> Vec<u64> {
    let is_prime = |p: u64| p >= 2 && (2..p).all(|k| p % k != 0);
    let mut out = Vec::new();
    let mut rest = n;
    for p in 2..=n {
        if !is_prime(p) {
            continue;
        }
        while rest % p == 0 {
            out.push(p);
            rest /= p;
        }
    }
    out
}

pub fn py_list(xs: &[u64]) -> String {
    let items: Vec<String> = xs.iter().map(u64::to_string).collect();
    format!("[{}]", items.join(", "))
}

pub const FACTORIZE_HIDDEN: [u64; 5] = [2, 4, 12, 97, 360];

pub fn factorize_problem(hidden: &[u64]) -> ProblemSpec {
    ProblemSpec {
        id: "factorize".into(),
        description: "Write a function factorize(n) that returns the list of prime factors of the integer n >= 2 in non-decreasing order, each prime repeated as many times as it divides n.".into(),
        entry_point: "factorize".into(),
        io_style: IoStyle::FunctionCall,
        subject_language: "python".into(),
        public_tests: vec![TestCase::public("12", "[2, 2, 3]")],
        // May repeat the public pair; hidden judging does not care.
        hidden_tests: hidden
            .iter()
            .map(|n| TestCase::hidden(n.to_string(), py_list(&factorize_oracle(*n))))
            .collect(),
        time_limit_ms: 6000,
        source_benchmark: SourceBenchmark::Custom,
        human_properties: Vec::new(),
    }
}

/// Scripted factorize run: the deduplicating program first, the correct one
/// after any refinement.
pub fn factorize_backend() -> MockBackend {
    MockBackend::new()
        .script("initial_code", fenced(FACTORIZE_DEDUP))
        .script("define_properties", FACTORIZE_PROPERTIES)
        .script("instantiate_checks", fenced(PRODUCT_CHECK))
        .script("instantiate_checks", fenced(PRIME_CHECK))
        .script("instantiate_checks", fenced(SORTED_CHECK))
        .script("input_generator", fenced(INT_GENERATOR))
        .script("instrument_program", "I cannot do that.")
        .script("refine_code", fenced(FACTORIZE_OK))
}

/// Replies with the last user message, whatever was asked.
pub struct EchoBackend;

impl ChatBackend for EchoBackend {
    fn backend_id(&self) -> String {
        "echo".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let content = request.last_user_content().to_string();
        Ok(ChatResponse {
            token_usage: TokenUsage {
                prompt: content.len() as u64,
                completion: content.len() as u64,
            },
            content,
            latency_ms: 0,
            backend_id: self.backend_id(),
        })
    }
}

/// Settings that keep loop tests quick.
pub fn test_config() -> RunConfig {
    RunConfig {
        time_limit_ms: 4000,
        parallelism: 2,
        ..RunConfig::default()
    }
}

/// Ten candidate checks for factorize; several are false on 12 -> [2, 2, 3].
pub const SOUNDNESS_CHECKS: [&str; 10] = [
    "def check(args, result):\n    p = 1\n    for f in result:\n        p *= f\n    return p == args[0]\n",
    "def check(args, result):\n    return all(f > 1 and all(f % k for k in range(2, f)) for f in result)\n",
    "def check(args, result):\n    assert list(result) == sorted(result)\n",
    "def check(args, result):\n    return len(result) == 2\n",
    "def check(args, result):\n    assert len(set(result)) == len(result), 'duplicate factor'\n",
    "def check(args, result):\n    return all(args[0] % f == 0 for f in result)\n",
    "def check(args, result):\n    return max(result) <= args[0]\n",
    "def check(args, result):\n    return sum(result) == args[0]\n",
    "def check(args, result):\n    if args[0] > 1:\n        assert result, 'empty factor list'\n",
    "def check(args, result):\n    return 0 if len(result) < 4 else 1\n",
];

/// Whether `code`'s check holds on one call, judged by a bare interpreter
/// run: an AssertionError or a falsy non-None value means it does not.
pub fn check_holds(code: &str, args: &str, result: &str) -> bool {
    let script = format!(
        "{code}\ntry:\n    r = check(({args},), {result})\n    print(r is None or bool(r))\nexcept AssertionError:\n    print(False)\n"
    );
    let out = std::process::Command::new("python3")
        .arg("-c")
        .arg(script)
        .output()
        .expect("python3");
    match String::from_utf8_lossy(&out.stdout).trim() {
        "True" => true,
        "False" => false,
        other => panic!("check did not evaluate: {other:?} {}", String::from_utf8_lossy(&out.stderr)),
    }
}
