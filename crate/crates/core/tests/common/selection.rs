//! Random validation reports and an independent reference for choosing the
//! case to report.

use std::collections::BTreeSet;

use pbtgen_core::problem::TestCase;
use pbtgen_core::sandbox::{CaseResult, ExecutionResult, ExitInfo, ValidationReport, Verdict};
use pbtgen_core::tester::{select_failure, Rank};
use proptest::prelude::*;

pub const RANKS: [Rank; 3] = [Rank::Min, Rank::Median, Rank::Max];

/// One generated case: verdict, input text, and whether a violated check
/// is a demoted one.
#[derive(Debug, Clone)]
pub struct GenCase {
    pub verdict: Verdict,
    pub input: String,
    pub demoted: bool,
}

pub fn verdict() -> impl Strategy<Value = Verdict> {
    prop::sample::select(Verdict::ALL.to_vec())
}

pub fn case_with(v: impl Strategy<Value = Verdict>) -> impl Strategy<Value = GenCase> {
    (v, "[a-z0-9 ,\\[\\]]{0,24}", any::<bool>()).prop_map(|(verdict, input, demoted)| GenCase {
        verdict,
        input,
        demoted: demoted && verdict == Verdict::PropertyViolation,
    })
}

/// Reports with arbitrary verdict mixes and at least one failure.
pub fn mixed_family() -> impl Strategy<Value = Vec<GenCase>> {
    prop::collection::vec(case_with(verdict()), 1..30)
        .prop_filter("needs a failure", |cs| cs.iter().any(|c| c.verdict != Verdict::Pass))
}

/// Reports whose failures all share one verdict and no demoted check fired.
pub fn single_cause_family() -> impl Strategy<Value = Vec<GenCase>> {
    let failing = prop::sample::select(vec![
        Verdict::PropertyViolation,
        Verdict::WrongAnswer,
        Verdict::RuntimeError,
        Verdict::TimeLimitExceeded,
    ]);
    (failing, prop::collection::vec((any::<bool>(), "[a-z0-9 ,]{0,24}"), 1..30))
        .prop_map(|(v, raw)| {
            raw.into_iter()
                .map(|(fails, input)| GenCase {
                    verdict: if fails { v } else { Verdict::Pass },
                    input,
                    demoted: false,
                })
                .collect::<Vec<_>>()
        })
        .prop_filter("needs a failure", |cs| cs.iter().any(|c| c.verdict != Verdict::Pass))
}

pub fn build(cases: &[GenCase]) -> (ValidationReport, BTreeSet<String>) {
    let results = cases
        .iter()
        .map(|c| CaseResult {
            case: TestCase::pbt(c.input.clone(), "generated"),
            result: ExecutionResult {
                verdict: c.verdict,
                actual_output: String::new(),
                stderr: String::new(),
                runtime_ms: 0,
                exit: ExitInfo::Code(0),
                violated_property: (c.verdict == Verdict::PropertyViolation)
                    .then(|| if c.demoted { "weak".to_string() } else { "strong".to_string() }),
                output_truncated: false,
            },
        })
        .collect();
    (ValidationReport::from_results(results), BTreeSet::from(["weak".to_string()]))
}

/// Byte length of each case's input: the ranking key of the length axis.
pub fn length_keys(cases: &[GenCase]) -> Vec<Option<u64>> {
    cases.iter().map(|c| Some(c.input.len() as u64)).collect()
}

fn priority(v: Verdict) -> u8 {
    match v {
        Verdict::PropertyViolation | Verdict::WrongAnswer => 0,
        Verdict::RuntimeError => 1,
        Verdict::TimeLimitExceeded => 2,
        Verdict::Pass => u8::MAX,
    }
}

/// Reference choice: failing cases of the best cause class, demoted
/// violations dropped if anything else is left, sorted by length with
/// execution order breaking ties, then indexed by rank (lower median).
pub fn reference(cases: &[GenCase], rank: Rank) -> usize {
    let best = cases.iter().map(|c| priority(c.verdict)).min().unwrap();
    let mut pool: Vec<usize> = (0..cases.len()).filter(|&i| priority(cases[i].verdict) == best).collect();
    if pool.iter().any(|&i| !cases[i].demoted) {
        pool.retain(|&i| !cases[i].demoted);
    }
    pool.sort_by_key(|&i| (cases[i].input.len(), i));
    let n = pool.len();
    let pos = match rank {
        Rank::Min => 0,
        Rank::Median => (n - 1) / 2,
        Rank::Max => n - 1,
    };
    let len = cases[pool[pos]].input.len();
    *pool.iter().find(|&&i| cases[i].input.len() == len).unwrap()
}

/// The selection agrees with the reference for every rank.
pub fn agrees_with_reference(cases: &[GenCase]) -> Result<(), String> {
    let (report, demoted) = build(cases);
    let keys = length_keys(cases);
    for rank in RANKS {
        let got = select_failure(&report, &demoted, &keys, rank);
        let want = reference(cases, rank);
        if got != Some(want) {
            return Err(format!("{rank:?}: selected {got:?}, expected {want} for {cases:?}"));
        }
        if select_failure(&report, &demoted, &keys, rank) != got {
            return Err("selection is not deterministic".into());
        }
    }
    Ok(())
}

/// On single-cause reports the chosen input has the global min, lower-median
/// and max length over all failing cases.
pub fn globally_ranked(cases: &[GenCase]) -> Result<(), String> {
    let (report, demoted) = build(cases);
    let keys = length_keys(cases);
    let mut lengths: Vec<usize> = cases
        .iter()
        .filter(|c| c.verdict != Verdict::Pass)
        .map(|c| c.input.len())
        .collect();
    lengths.sort_unstable();
    let n = lengths.len();
    for (rank, want) in [(Rank::Min, lengths[0]), (Rank::Median, lengths[(n - 1) / 2]), (Rank::Max, lengths[n - 1])] {
        let i = select_failure(&report, &demoted, &keys, rank).ok_or("nothing selected")?;
        if cases[i].verdict == Verdict::Pass {
            return Err(format!("{rank:?} selected a passing case"));
        }
        if cases[i].input.len() != want {
            return Err(format!("{rank:?} selected length {}, expected {want}", cases[i].input.len()));
        }
        if cases[..i].iter().any(|c| c.verdict != Verdict::Pass && c.input.len() == want) {
            return Err(format!("{rank:?} tie not broken by execution order"));
        }
    }
    Ok(())
}

/// Adding a failing case of the same cause never lengthens the Min choice.
pub fn min_is_monotone(cases: &[GenCase], extra: GenCase) -> Result<(), String> {
    let (report, demoted) = build(cases);
    let before = select_failure(&report, &demoted, &length_keys(cases), Rank::Min).unwrap();
    let mut grown = cases.to_vec();
    grown.push(extra);
    let (report, demoted) = build(&grown);
    let after = select_failure(&report, &demoted, &length_keys(&grown), Rank::Min).unwrap();
    if grown[after].input.len() > cases[before].input.len() {
        return Err(format!("min length grew from {} to {}", cases[before].input.len(), grown[after].input.len()));
    }
    Ok(())
}
