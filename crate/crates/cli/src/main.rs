//! `pbtgen` command-line driver.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pbtgen_core::eval::{
    ablation_run, compute_metrics, evaluate_hidden_all, write_ablation_csv, EvalReport,
};
use pbtgen_core::llm::{ChatBackend, RecordingBackend};
use pbtgen_core::orchestrator::{
    read_run, solve_batch, write_problem, BackendKind, RsrBasis, RunConfig, RunDir, RunResult,
};
use pbtgen_core::problem::{load_corpus, load_corpus_cache, save_corpus_cache, CorpusFormat, ProblemSpec};
use pbtgen_core::sandbox::Sandbox;
use pbtgen_core::tester::SelectionStrategy;

#[derive(Parser)]
#[command(name = "pbtgen", version, about = "Property-guided LLM code generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the generate/test/refine loop over a corpus and write a run directory.
    Solve(SolveArgs),
    /// Score an existing run directory on hidden tests.
    Eval(EvalArgs),
    /// Re-run a recorded run from its transcript and compare traces.
    Replay(RunArgs),
    /// Compare feedback-selection strategies on a corpus.
    Ablate(AblateArgs),
    /// Print the iteration traces of a run.
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct RunOptions {
    /// TOML configuration file; `PBTGEN_*` variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Mock script (JSON) for `--backend mock`.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Transcript (JSONL) for `--backend replay`.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Refinement rounds after the initial candidate.
    #[arg(long)]
    max_iterations: Option<u32>,
}

#[derive(Args)]
struct CorpusOptions {
    #[arg(long)]
    corpus: PathBuf,
    /// humaneval, mbpp, livecodebench or custom.
    #[arg(long, default_value = "custom")]
    format: String,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    corpus: CorpusOptions,
    #[command(flatten)]
    run: RunOptions,
    /// Feedback selection, e.g. `length:min`.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<SelectionStrategy>,
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_parser = parse_basis)]
    rsr_basis: Option<RsrBasis>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    corpus: CorpusOptions,
    #[command(flatten)]
    run: RunOptions,
    /// Strategies to compare; all nine when omitted. Repeatable.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Vec<SelectionStrategy>,
    /// Write the table as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    run: PathBuf,
    /// Only this problem.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    json: bool,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_strategy(s: &str) -> Result<SelectionStrategy, String> {
    s.parse()
}

fn parse_basis(s: &str) -> Result<RsrBasis, String> {
    match s.to_ascii_lowercase().as_str() {
        "hidden" => Ok(RsrBasis::Hidden),
        "public" | "visible" => Ok(RsrBasis::Public),
        _ => Err(format!("expected hidden or public, got `{s}`")),
    }
}

fn load_config(opts: &RunOptions) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(opts.config.as_deref(), std::env::vars())?;
    if let Some(b) = opts.backend {
        cfg.backend = b;
    }
    if let Some(p) = &opts.script {
        cfg.mock_script = Some(p.clone());
    }
    if let Some(p) = &opts.transcript {
        cfg.transcript = Some(p.clone());
    }
    if let Some(n) = opts.parallelism {
        cfg.parallelism = n;
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(n) = opts.max_iterations {
        cfg.max_iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_problems(opts: &CorpusOptions) -> Result<(String, Vec<ProblemSpec>)> {
    let format: CorpusFormat = opts.format.parse()?;
    let loaded = load_corpus(&opts.corpus, format)?;
    for r in &loaded.rejections {
        eprintln!("warning: skipped record at line {}: {}", r.line, r.reason);
    }
    if loaded.problems.is_empty() {
        bail!("corpus {} has no usable problems", opts.corpus.display());
    }
    let id = opts
        .corpus
        .file_stem()
        .map_or_else(|| "corpus".to_string(), |s| s.to_string_lossy().into_owned());
    Ok((id, loaded.problems))
}

fn sandbox_for(cfg: &RunConfig) -> Result<Sandbox> {
    let sandbox = Sandbox::new(cfg.sandbox_config(None))?;
    sandbox.probe().context("sandbox self-check failed")?;
    Ok(sandbox)
}

fn public_views(problems: &[ProblemSpec]) -> Vec<pbtgen_core::problem::PublicProblem> {
    problems.iter().map(ProblemSpec::public_view).collect()
}

fn evaluate(run: &RunDir, cfg: &RunConfig, basis: RsrBasis, sandbox: &Sandbox) -> Result<EvalReport> {
    let corpus = load_corpus_cache(&run.corpus_path())?;
    let stored = read_run(&run.path)?;
    if stored.results.is_empty() {
        bail!("no results under {}", run.path.display());
    }
    let hidden = evaluate_hidden_all(&corpus.problems, &stored.results, sandbox, &cfg.limits())?;
    let report = compute_metrics(&corpus.corpus_id, &cfg.fingerprint(), basis, &stored.results, &hidden)?;
    report.write_json(&run.path.join("report.json"))?;
    report.write_csv(&run.path.join("report.csv"))?;
    Ok(report)
}

fn print_report(report: &EvalReport, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(report)?);
    } else {
        print!("{}", report.summary());
    }
    Ok(())
}

fn run_config_of(run: &RunDir) -> Result<RunConfig> {
    let text = fs::read_to_string(run.config_path())
        .with_context(|| format!("reading {}", run.config_path().display()))?;
    Ok(RunConfig::from_toml(&text)?)
}

fn solve(args: SolveArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.run)?;
    if let Some(s) = args.strategy {
        cfg.selection_strategy = s;
    }
    let (corpus_id, problems) = load_problems(&args.corpus)?;
    let sandbox = sandbox_for(&cfg)?;
    let backend = RecordingBackend::new(cfg.build_backend()?);
    let run = RunDir::create(&args.out)?;
    fs::write(run.config_path(), cfg.to_toml())?;
    save_corpus_cache(&run.corpus_path(), &corpus_id, &problems)?;

    let batch = solve_batch(&public_views(&problems), &cfg, &backend, &sandbox, cfg.parallelism);
    backend.write_transcript(&run.transcript_path())?;
    for r in &batch.results {
        write_problem(&run, r)?;
    }
    let report = evaluate(&run, &cfg, cfg.rsr_basis, &sandbox)?;
    print_report(&report, args.json)?;
    eprintln!("run written to {}", run.path.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let run = RunDir::open(&args.run);
    let cfg = run_config_of(&run)?;
    let sandbox = sandbox_for(&cfg)?;
    let report = evaluate(&run, &cfg, args.rsr_basis.unwrap_or(cfg.rsr_basis), &sandbox)?;
    print_report(&report, args.json)?;
    Ok(ExitCode::SUCCESS)
}

fn replay(args: RunArgs) -> Result<ExitCode> {
    let run = RunDir::open(&args.run);
    let mut cfg = run_config_of(&run)?;
    cfg.backend = BackendKind::Replay;
    cfg.transcript = Some(run.transcript_path());
    if let Some(n) = args.parallelism {
        cfg.parallelism = n;
    }
    let corpus = load_corpus_cache(&run.corpus_path())?;
    let sandbox = sandbox_for(&cfg)?;
    let backend = cfg.build_backend()?;
    let batch = solve_batch(&public_views(&corpus.problems), &cfg, backend.as_ref(), &sandbox, cfg.parallelism);

    let scratch = tempfile::tempdir()?;
    let fresh = RunDir::open(scratch.path());
    let mut differing = Vec::new();
    for r in &batch.results {
        write_problem(&fresh, r)?;
        let name = |d: &RunDir| d.problem_dir(&r.problem_id).join("iterations.jsonl");
        let recorded = fs::read(name(&run)).with_context(|| format!("recorded traces of {}", r.problem_id))?;
        if recorded != fs::read(name(&fresh))? {
            differing.push(r.problem_id.clone());
        }
    }
    if differing.is_empty() {
        println!("traces identical ({} problems)", batch.results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("traces differ for: {}", differing.join(", "));
        Ok(ExitCode::FAILURE)
    }
}

fn ablate(args: AblateArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.run)?;
    let (corpus_id, problems) = load_problems(&args.corpus)?;
    let sandbox = sandbox_for(&cfg)?;
    let strategies = if args.strategy.is_empty() { SelectionStrategy::all().to_vec() } else { args.strategy };
    let factory = |_: SelectionStrategy| -> Result<Box<dyn ChatBackend>, String> {
        cfg.build_backend().map_err(|e| e.to_string())
    };
    let rows = ablation_run(&corpus_id, &problems, &strategies, &cfg, &factory, &sandbox)?;
    if let Some(path) = &args.csv {
        write_ablation_csv(&rows, path)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        println!("{:<20} {:>9} {:>9} {:>12}", "strategy", "pass@1", "RSR", "mean tokens");
        for r in &rows {
            let rsr = r.rsr.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
            println!("{:<20} {:>9.4} {:>9} {:>12.1}", r.strategy.to_string(), r.pass_at_1, rsr, r.mean_tokens);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_traces(r: &RunResult) {
    println!("== {} ({:?})", r.problem_id, r.terminal_status);
    if let Some(reason) = &r.degraded_reason {
        println!("   degraded: {reason}");
    }
    for t in &r.traces {
        let counts = t.report.as_ref().map_or_else(
            || "not run".to_string(),
            |rep| {
                rep.counts
                    .iter()
                    .filter(|(_, n)| **n > 0)
                    .map(|(v, n)| format!("{}={n}", v.label()))
                    .collect::<Vec<_>>()
                    .join(" ")
            },
        );
        let hash = &t.candidate_hash[..t.candidate_hash.len().min(12)];
        println!("  iter {} {hash} tokens={} [{counts}]", t.iteration, t.token_usage.total());
        let statuses: BTreeMap<_, _> = t.check_statuses.iter().collect();
        if !statuses.is_empty() {
            let s: Vec<String> = statuses.iter().map(|(id, st)| format!("{id}:{st:?}")).collect();
            println!("    checks: {}", s.join(" "));
        }
        if let Some(f) = &t.feedback {
            println!("    refined from {} feedback on input {:?}", f.strategy_used, f.failing_input);
        }
        if t.no_progress {
            println!("    no progress: refinement returned the same program");
        }
        for w in &t.warnings {
            println!("    warning: {w}");
        }
    }
}

fn inspect(args: InspectArgs) -> Result<ExitCode> {
    let stored = read_run(&args.run)?;
    let selected: Vec<&RunResult> = stored
        .results
        .iter()
        .filter(|r| args.problem.as_ref().is_none_or(|p| &r.problem_id == p))
        .collect();
    if selected.is_empty() {
        bail!("no matching problems under {}", args.run.display());
    }
    if args.json {
        let traces: BTreeMap<_, _> = selected.iter().map(|r| (&r.problem_id, &r.traces)).collect();
        println!("{}", serde_json::to_string_pretty(&traces)?);
    } else {
        selected.into_iter().for_each(print_traces);
    }
    Ok(ExitCode::SUCCESS)
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("PBTGEN_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let outcome = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Replay(a) => replay(a),
        Command::Ablate(a) => ablate(a),
        Command::Inspect(a) => inspect(a),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
