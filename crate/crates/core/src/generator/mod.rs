//! The Generator agent: writes the initial program, refines it from
//! feedback, and instruments it with the Tester's checks.

mod weave;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{
    extract_code_blocks, first_code_block, render_prompt, BackendError, Bindings, ChatBackend,
    ChatRequest, LlmSettings, TemplateId, UnboundPlaceholder,
};
use crate::problem::{IoStyle, PublicProblem};
use crate::sandbox::{Program, ResourceLimits, Sandbox, SandboxError};
use crate::tester::{Feedback, PropertyCheck};

pub use weave::{strip_instrumentation, weave_checks};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] UnboundPlaceholder),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("response contained no code")]
    EmptyCode,
    #[error("instrumentation needs at least one usable check")]
    NoChecks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Initial,
    Refined,
}

/// sha256 of the program text, hex encoded.
pub fn program_hash(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub source: String,
    pub hash: String,
    pub iteration: u32,
    /// Hash of the program this one was refined from; `None` only at iteration 0.
    pub parent_hash: Option<String>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CandidateProgram {
    pub fn plain_program(&self, problem: &PublicProblem) -> Program {
        Program::plain(self.source.clone(), problem.io_style, problem.entry_point.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstrumentationMode {
    /// Model-written instrumentation that passed the self-test.
    Llm,
    /// Checks woven around the entry point by [`weave_checks`].
    Woven,
    /// Checks evaluated by the runner after the program finishes.
    PostHoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedProgram {
    pub base_hash: String,
    pub mode: InstrumentationMode,
    /// Property id to sentinel, for every check attached.
    pub sentinel_map: BTreeMap<String, String>,
    /// What the sandbox runs; its source is the instrumented text.
    pub program: Program,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub llm: LlmSettings,
    pub limits: ResourceLimits,
    /// Ask the model to instrument function-call programs before falling back
    /// to the built-in weaver.
    pub llm_instrumentation: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            llm: LlmSettings::default(),
            limits: ResourceLimits::default(),
            llm_instrumentation: true,
        }
    }
}

pub struct Generator<'a> {
    backend: &'a dyn ChatBackend,
    sandbox: &'a Sandbox,
    config: GeneratorConfig,
}

impl<'a> Generator<'a> {
    pub fn new(backend: &'a dyn ChatBackend, sandbox: &'a Sandbox, config: GeneratorConfig) -> Self {
        Self {
            backend,
            sandbox,
            config,
        }
    }

    fn ask(&self, problem: &PublicProblem, id: TemplateId, bindings: Bindings) -> Result<String, GeneratorError> {
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

    fn extract(reply: &str) -> Result<(String, Vec<String>), GeneratorError> {
        let code = first_code_block(reply).ok_or(GeneratorError::EmptyCode)?;
        let fenced = extract_code_blocks(reply).iter().any(|b| b.language.is_some()) || reply.contains("```") || reply.contains("~~~");
        let warnings = if fenced {
            Vec::new()
        } else {
            vec!["response had no code fence; using it verbatim".to_string()]
        };
        let code = if code.ends_with('\n') { code } else { code + "\n" };
        Ok((code, warnings))
    }

    pub fn generate_initial(&self, problem: &PublicProblem) -> Result<CandidateProgram, GeneratorError> {
        let reply = self.ask(
            problem,
            TemplateId::InitialCode,
            Bindings::from([("description".to_string(), problem.description.clone())]),
        )?;
        let (source, warnings) = Self::extract(&reply)?;
        Ok(CandidateProgram {
            hash: program_hash(&source),
            source,
            iteration: 0,
            parent_hash: None,
            provenance: Provenance::Initial,
            warnings,
        })
    }

    pub fn refine(
        &self,
        problem: &PublicProblem,
        candidate: &CandidateProgram,
        feedback: &Feedback,
    ) -> Result<CandidateProgram, GeneratorError> {
        let reply = self.ask(
            problem,
            TemplateId::RefineCode,
            Bindings::from([
                ("description".to_string(), problem.description.clone()),
                ("code".to_string(), candidate.source.trim_end().to_string()),
                ("feedback".to_string(), feedback.narrative.clone()),
            ]),
        )?;
        // A reply without code keeps the previous program; the turn still counts.
        let (source, warnings) = match Self::extract(&reply) {
            Ok(found) => found,
            Err(_) => (
                candidate.source.clone(),
                vec!["refinement response contained no code; previous program kept".to_string()],
            ),
        };
        Ok(CandidateProgram {
            hash: program_hash(&source),
            source,
            iteration: candidate.iteration + 1,
            parent_hash: Some(candidate.hash.clone()),
            provenance: Provenance::Refined,
            warnings,
        })
    }

    /// Attach the usable checks to `candidate`.
    ///
    /// Stdio programs get post-hoc checks. Function-call programs get
    /// model-written instrumentation if enabled and it behaves exactly like
    /// the post-hoc checks on every public test, otherwise woven checks.
    pub fn instrument(
        &self,
        problem: &PublicProblem,
        candidate: &CandidateProgram,
        checks: &[PropertyCheck],
    ) -> Result<InstrumentedProgram, GeneratorError> {
        let usable: Vec<&PropertyCheck> = checks.iter().filter(|c| c.is_usable()).collect();
        if usable.is_empty() {
            return Err(GeneratorError::NoChecks);
        }
        let plain = candidate.plain_program(problem);
        let sentinel_map: BTreeMap<String, String> = usable
            .iter()
            .map(|c| (c.property_id.clone(), c.sentinel.clone()))
            .collect();
        let wrap = |mode, program, warnings| InstrumentedProgram {
            base_hash: candidate.hash.clone(),
            mode,
            sentinel_map: sentinel_map.clone(),
            program,
            warnings,
        };
        if problem.io_style == IoStyle::Stdio {
            let mut p = plain;
            p.posthoc_checks = usable.iter().map(|c| c.source()).collect();
            return Ok(wrap(InstrumentationMode::PostHoc, p, Vec::new()));
        }
        let mut warnings = Vec::new();
        if self.config.llm_instrumentation {
            match self.llm_instrumented(problem, candidate, &usable) {
                Ok(p) => return Ok(wrap(InstrumentationMode::Llm, p, warnings)),
                Err(why) => warnings.push(format!("model instrumentation rejected: {why}")),
            }
        }
        let mut p = plain;
        p.source = weave_checks(&candidate.source, &problem.entry_point, &usable);
        p.embedded_properties = usable.iter().map(|c| c.property_id.clone()).collect();
        Ok(wrap(InstrumentationMode::Woven, p, warnings))
    }

    fn llm_instrumented(
        &self,
        problem: &PublicProblem,
        candidate: &CandidateProgram,
        usable: &[&PropertyCheck],
    ) -> Result<Program, String> {
        let checks_text = usable
            .iter()
            .map(|c| format!("# {}\n{}", c.property_id, c.code.trim_end()))
            .collect::<Vec<_>>()
            .join("\n\n");
        let sentinels = usable
            .iter()
            .map(|c| format!("{}: {}", c.property_id, c.sentinel))
            .collect::<Vec<_>>()
            .join("\n");
        let reply = self
            .ask(
                problem,
                TemplateId::InstrumentProgram,
                Bindings::from([
                    ("code".to_string(), candidate.source.trim_end().to_string()),
                    ("checks".to_string(), checks_text),
                    ("entry_point".to_string(), problem.entry_point.clone()),
                    ("sentinels".to_string(), sentinels),
                ]),
            )
            .map_err(|e| e.to_string())?;
        let source = first_code_block(&reply).ok_or("no code in response")?;
        if let Some(c) = usable.iter().find(|c| !source.contains(&c.sentinel)) {
            return Err(format!("sentinel {} missing", c.sentinel));
        }
        let mut instrumented = candidate.plain_program(problem);
        instrumented.source = source;
        instrumented.embedded_properties = usable.iter().map(|c| c.property_id.clone()).collect();
        let mut reference = candidate.plain_program(problem);
        reference.posthoc_checks = usable.iter().map(|c| c.source()).collect();
        for t in &problem.public_tests {
            let a = self
                .sandbox
                .run_case(&instrumented, t, &self.config.limits)
                .map_err(|e| e.to_string())?;
            let b = self
                .sandbox
                .run_case(&reference, t, &self.config.limits)
                .map_err(|e| e.to_string())?;
            if (a.verdict, &a.violated_property) != (b.verdict, &b.violated_property) {
                return Err(format!(
                    "self-test on input {} gave {} instead of {}",
                    t.input.trim(),
                    a.verdict,
                    b.verdict
                ));
            }
        }
        Ok(instrumented)
    }
}
