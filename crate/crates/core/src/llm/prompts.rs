//! Prompt templates for the Tester and Generator.
//!
//! Template texts live in `assets/prompts/*.txt`. Lines starting with `#!` are
//! metadata; `[system]` and `[user]` lines open message sections; `{{name}}`
//! marks a placeholder. Substituted values are inserted verbatim and never
//! rescanned for placeholders.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Message, Role};

/// Bumped whenever any template text changes; recorded in every trace.
pub const PROMPT_ASSET_VERSION: &str = "prompts-v1";

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    InitialCode,
    RefineCode,
    DefineProperties,
    InstantiateChecks,
    InputGenerator,
    InstrumentProgram,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::InitialCode,
        TemplateId::RefineCode,
        TemplateId::DefineProperties,
        TemplateId::InstantiateChecks,
        TemplateId::InputGenerator,
        TemplateId::InstrumentProgram,
    ];

    /// Request tag used for backend calls rendered from this template.
    pub fn tag(self) -> &'static str {
        match self {
            TemplateId::InitialCode => "initial_code",
            TemplateId::RefineCode => "refine_code",
            TemplateId::DefineProperties => "define_properties",
            TemplateId::InstantiateChecks => "instantiate_checks",
            TemplateId::InputGenerator => "input_generator",
            TemplateId::InstrumentProgram => "instrument_program",
        }
    }

    fn asset(self) -> &'static str {
        match self {
            TemplateId::InitialCode => include_str!("../../assets/prompts/initial_code.txt"),
            TemplateId::RefineCode => include_str!("../../assets/prompts/refine_code.txt"),
            TemplateId::DefineProperties => {
                include_str!("../../assets/prompts/define_properties.txt")
            }
            TemplateId::InstantiateChecks => {
                include_str!("../../assets/prompts/instantiate_checks.txt")
            }
            TemplateId::InputGenerator => include_str!("../../assets/prompts/input_generator.txt"),
            TemplateId::InstrumentProgram => {
                include_str!("../../assets/prompts/instrument_program.txt")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    pub fn builtin(id: TemplateId) -> Self {
        Self {
            template_id: id,
            body: id.asset().to_string(),
        }
    }

    /// Placeholder names referenced by the template.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            match after.find("}}") {
                Some(end) if is_name(&after[..end]) => {
                    names.insert(after[..end].to_string());
                    rest = &after[end + 2..];
                }
                _ => rest = after,
            }
        }
        names
    }

    pub fn render(&self, bindings: &Bindings) -> Result<Vec<Message>, UnboundPlaceholder> {
        if let Some(missing) = self.placeholders().into_iter().find(|n| !bindings.contains_key(n)) {
            return Err(UnboundPlaceholder(missing));
        }
        let mut messages: Vec<Message> = Vec::new();
        let mut role = Role::User;
        let mut buf: Vec<String> = Vec::new();
        let flush = |role: Role, buf: &mut Vec<String>, messages: &mut Vec<Message>| {
            let text = buf.join("\n").trim().to_string();
            buf.clear();
            if !text.is_empty() {
                messages.push(Message::new(role, text));
            }
        };
        for line in self.body.lines() {
            if line.starts_with("#!") {
                continue;
            }
            let next_role = match line.trim() {
                "[system]" => Some(Role::System),
                "[user]" => Some(Role::User),
                "[assistant]" => Some(Role::Assistant),
                _ => None,
            };
            if let Some(r) = next_role {
                flush(role, &mut buf, &mut messages);
                role = r;
                continue;
            }
            buf.push(substitute(line, bindings));
        }
        flush(role, &mut buf, &mut messages);
        if messages.is_empty() {
            messages.push(Message::new(Role::User, String::new()));
        }
        Ok(messages)
    }
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_' || c.is_ascii_digit())
}

fn substitute(line: &str, bindings: &Bindings) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) if is_name(&after[..end]) => {
                out.push_str(&bindings[&after[..end]]);
                rest = &after[end + 2..];
            }
            _ => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Render a built-in template. Fails with the name of the first unbound placeholder.
pub fn render_prompt(id: TemplateId, bindings: &Bindings) -> Result<Vec<Message>, UnboundPlaceholder> {
    PromptTemplate::builtin(id).render(bindings)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unbound placeholder `{0}`")]
pub struct UnboundPlaceholder(pub String);

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn define_properties_embeds_problem() {
        let msgs = render_prompt(
            TemplateId::DefineProperties,
            &bind(&[("description", "Return the prime factors: factorize(n)"), ("max_properties", "5")]),
        )
        .unwrap();
        assert_eq!(msgs[0].role, Role::System);
        assert!(msgs.iter().any(|m| m.content.contains("factorize")));
        assert!(msgs.iter().any(|m| m.content.contains("up to 5")));
    }

    #[test]
    fn empty_binding_is_well_formed() {
        let msgs = render_prompt(TemplateId::InitialCode, &bind(&[("description", "")])).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[1].role, Role::User);
        assert!(!msgs[1].content.contains("{{"));
    }

    #[test]
    fn missing_binding_is_reported() {
        let err = render_prompt(
            TemplateId::RefineCode,
            &bind(&[("description", "d"), ("code", "c")]),
        )
        .unwrap_err();
        assert_eq!(err, UnboundPlaceholder("feedback".into()));
    }

    #[test]
    fn values_are_not_rescanned() {
        let msgs = render_prompt(TemplateId::InitialCode, &bind(&[("description", "uses {{code}} literally")])).unwrap();
        assert!(msgs[1].content.contains("{{code}}"));
    }

    #[test]
    fn every_template_renders_deterministically() {
        for id in TemplateId::ALL {
            let t = PromptTemplate::builtin(id);
            let b: Bindings = t.placeholders().into_iter().map(|n| (n.clone(), format!("<{n}>"))).collect();
            assert_eq!(t.render(&b).unwrap(), t.render(&b).unwrap());
        }
    }
}
