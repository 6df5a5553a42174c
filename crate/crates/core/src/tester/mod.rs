//! The Tester agent.
//!
//! It never sees a candidate's hidden tests: every entry point takes a
//! [`PublicProblem`]. The pipeline per problem is
//! [`Tester::define_properties`] → [`Tester::instantiate_checks`] →
//! [`Tester::validate_checks`], plus [`Tester::synthesize_inputs`] for PBT
//! inputs; after each failing suite run [`Tester::formulate_feedback`] picks
//! one failure and describes it for the Generator.
//!
//! Check conventions, shared with the runner:
//! function-call problems use `check(args, result)` where `args` is the tuple
//! of positional arguments; stdio problems use `check(input_text, output_text)`.
//! A check signals a violation by returning `False` or raising `AssertionError`.

mod feedback;
mod inputs;
mod parse;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{
    first_code_block, render_prompt, BackendError, Bindings, ChatBackend, ChatRequest, LlmSettings,
    TemplateId, UnboundPlaceholder,
};
use crate::problem::{IoStyle, PublicProblem, TestCase};
use crate::sandbox::{sentinel_for, CheckSource, ResourceLimits, Sandbox, SandboxError};

pub use feedback::{
    cause_tier, clean_traceback, select_failure, Feedback, FeedbackCause, Rank, RankAxis, SelectionStrategy,
};
pub use inputs::PbtInputBatch;
pub use parse::parse_property_list;
pub use validate::{constant_program, KnownError};

#[derive(Debug, Error)]
pub enum TesterError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] UnboundPlaceholder),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error("no failing cases to report")]
    NoFailingCases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropertyOrigin {
    Llm,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Property {
    /// `p1`, `p2`, ... in definition order.
    pub id: String,
    pub text: String,
    pub origin: PropertyOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Unvalidated,
    /// Holds on every public test and fails on at least one known wrong output
    /// (or no wrong outputs are known yet).
    Sound,
    /// Fails or crashes on a public test; never used.
    RejectedUnsound,
    /// Holds on every known wrong output; still run, but its violations rank
    /// below those of sound checks.
    RejectedInsensitive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property_id: String,
    pub code: String,
    pub status: CheckStatus,
    pub sentinel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PropertyCheck {
    pub fn new(property_id: &str, code: impl Into<String>) -> Self {
        Self {
            property_id: property_id.to_string(),
            code: code.into(),
            status: CheckStatus::Unvalidated,
            sentinel: sentinel_for(property_id),
            note: None,
        }
    }

    /// Checks that take part in classification.
    pub fn is_usable(&self) -> bool {
        matches!(self.status, CheckStatus::Sound | CheckStatus::RejectedInsensitive)
    }

    pub fn source(&self) -> CheckSource {
        CheckSource {
            property_id: self.property_id.clone(),
            code: self.code.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TesterConfig {
    pub max_properties: usize,
    pub pbt_input_count: usize,
    pub seed: u64,
    pub llm: LlmSettings,
    pub limits: ResourceLimits,
    /// Wall-clock limit for the input generator script.
    pub generator_time_limit_ms: u64,
}

impl Default for TesterConfig {
    fn default() -> Self {
        Self {
            max_properties: 5,
            pbt_input_count: 20,
            seed: 0,
            llm: LlmSettings::default(),
            limits: ResourceLimits::default(),
            generator_time_limit_ms: 20_000,
        }
    }
}

pub struct Tester<'a> {
    backend: &'a dyn ChatBackend,
    sandbox: &'a Sandbox,
    config: TesterConfig,
}

pub(crate) fn check_signature(problem: &PublicProblem) -> String {
    match problem.io_style {
        IoStyle::FunctionCall => format!(
            "Write a Python function `def check(args, result) -> bool`. `args` is the tuple of positional arguments passed to `{}` and `result` is the value it returned.",
            problem.entry_point
        ),
        IoStyle::Stdio => "Write a Python function `def check(input_text: str, output_text: str) -> bool`. `input_text` is the program's complete standard input and `output_text` its complete standard output.".to_string(),
    }
}

impl<'a> Tester<'a> {
    pub fn new(backend: &'a dyn ChatBackend, sandbox: &'a Sandbox, config: TesterConfig) -> Self {
        Self {
            backend,
            sandbox,
            config,
        }
    }

    pub fn config(&self) -> &TesterConfig {
        &self.config
    }

    fn ask(&self, problem: &PublicProblem, id: TemplateId, bindings: Bindings) -> Result<String, TesterError> {
        let messages = render_prompt(id, &bindings)?;
        let req = ChatRequest::new(
            messages,
            self.config.llm.temperature,
            self.config.llm.max_tokens,
            id.tag(),
            problem.id.as_str(),
        )?;
        Ok(self.backend.complete(&req)?.content)
    }

    /// Human-written properties when the problem has them, otherwise the
    /// model's numbered list. A response with no parseable item is asked
    /// again once; if that fails too the list is empty.
    pub fn define_properties(&self, problem: &PublicProblem) -> Result<Vec<Property>, TesterError> {
        let (texts, origin) = if problem.human_properties.is_empty() {
            let bindings = Bindings::from([
                ("description".to_string(), problem.description.clone()),
                ("max_properties".to_string(), self.config.max_properties.to_string()),
            ]);
            let mut texts = Vec::new();
            for attempt in 0..2 {
                texts = parse_property_list(&self.ask(problem, TemplateId::DefineProperties, bindings.clone())?);
                if !texts.is_empty() {
                    break;
                }
                tracing::warn!(problem = %problem.id, attempt, "no properties parsed");
            }
            (texts, PropertyOrigin::Llm)
        } else {
            (parse::dedup(problem.human_properties.clone()), PropertyOrigin::Human)
        };
        if texts.is_empty() {
            tracing::warn!(problem = %problem.id, "no properties defined");
        }
        Ok(texts
            .into_iter()
            .take(self.config.max_properties)
            .enumerate()
            .map(|(i, text)| Property {
                id: format!("p{}", i + 1),
                text,
                origin,
            })
            .collect())
    }

    /// One request per property. Properties whose response holds no
    /// `check` function are dropped with a warning.
    pub fn instantiate_checks(
        &self,
        problem: &PublicProblem,
        properties: &[Property],
    ) -> Result<Vec<PropertyCheck>, TesterError> {
        if properties.is_empty() {
            return Err(TesterError::Precondition("no properties to instantiate"));
        }
        let signature = check_signature(problem);
        let mut checks = Vec::new();
        for prop in properties {
            let bindings = Bindings::from([
                ("description".to_string(), problem.description.clone()),
                ("property".to_string(), prop.text.clone()),
                ("check_signature".to_string(), signature.clone()),
            ]);
            let reply = self.ask(problem, TemplateId::InstantiateChecks, bindings)?;
            match first_code_block(&reply).filter(|c| c.contains("def check")) {
                Some(code) => checks.push(PropertyCheck::new(&prop.id, code)),
                None => tracing::warn!(problem = %problem.id, property = %prop.id, "no check function in response"),
            }
        }
        Ok(checks)
    }

    pub fn validate_checks(
        &self,
        problem: &PublicProblem,
        checks: &[PropertyCheck],
        known_errors: &[KnownError],
    ) -> Result<Vec<PropertyCheck>, TesterError> {
        validate::validate(self.sandbox, &self.config.limits, problem, checks, known_errors)
    }

    /// Never fails: a generator that cannot be obtained or run yields an
    /// empty batch whose diagnostics say why.
    pub fn synthesize_inputs(&self, problem: &PublicProblem) -> PbtInputBatch {
        inputs::synthesize(self, problem)
    }

    pub fn formulate_feedback(
        &self,
        problem: &PublicProblem,
        report: &crate::sandbox::ValidationReport,
        properties: &[Property],
        checks: &[PropertyCheck],
        candidate: &crate::sandbox::Program,
        strategy: SelectionStrategy,
    ) -> Result<Feedback, TesterError> {
        feedback::formulate(self.sandbox, &self.config.limits, problem, report, properties, checks, candidate, strategy)
    }
}

/// A PBT test case produced by the generator script with the given seed.
pub(crate) fn pbt_case(input: String, seed: u64) -> TestCase {
    TestCase::pbt(input, format!("generator:seed={seed}"))
}
