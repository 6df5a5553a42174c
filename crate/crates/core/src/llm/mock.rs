//! Deterministic scripted backend.
//!
//! A script is a list of entries `{tag, scope?, when?, content}`. For a
//! request, entries with a matching tag are considered, preferring ones
//! scoped to the request's problem over unscoped ones. A `when` entry fires
//! if its text occurs in the last user message; otherwise the unconditional
//! entries are served in order, and the last one repeats once the list runs
//! out.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, BackendError, ChatBackend, ChatRequest, ChatResponse, TokenUsage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub responses: Vec<MockEntry>,
}

impl MockScript {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    cursors: Mutex<HashMap<(String, String), usize>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_script(script: MockScript) -> Self {
        Self {
            script,
            cursors: Mutex::default(),
        }
    }

    pub fn script(mut self, tag: &str, content: impl Into<String>) -> Self {
        self.script.responses.push(MockEntry {
            tag: tag.into(),
            scope: None,
            when: None,
            content: content.into(),
        });
        self
    }

    pub fn script_scoped(mut self, scope: &str, tag: &str, content: impl Into<String>) -> Self {
        self.script.responses.push(MockEntry {
            tag: tag.into(),
            scope: Some(scope.into()),
            when: None,
            content: content.into(),
        });
        self
    }

    pub fn script_when(mut self, tag: &str, when: &str, content: impl Into<String>) -> Self {
        self.script.responses.push(MockEntry {
            tag: tag.into(),
            scope: None,
            when: Some(when.into()),
            content: content.into(),
        });
        self
    }

    pub fn into_script(self) -> MockScript {
        self.script
    }

    fn pick(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let tagged: Vec<&MockEntry> = self
            .script
            .responses
            .iter()
            .filter(|e| e.tag == req.tag)
            .collect();
        let scoped: Vec<&MockEntry> = tagged
            .iter()
            .copied()
            .filter(|e| e.scope.as_deref() == Some(req.scope.as_str()))
            .collect();
        let pool = if scoped.is_empty() {
            tagged.into_iter().filter(|e| e.scope.is_none()).collect()
        } else {
            scoped
        };
        let prompt = req.last_user_content();
        if let Some(hit) = pool
            .iter()
            .find(|e| e.when.as_deref().is_some_and(|w| prompt.contains(w)))
        {
            return Ok(hit.content.clone());
        }
        let sequential: Vec<&&MockEntry> = pool.iter().filter(|e| e.when.is_none()).collect();
        if sequential.is_empty() {
            return Err(BackendError::Unscripted(req.tag.clone()));
        }
        // Cursors are per problem even for unscoped entries, so concurrent
        // problems never consume each other's responses.
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry((req.scope.clone(), req.tag.clone())).or_insert(0);
        let idx = (*cursor).min(sequential.len() - 1);
        *cursor += 1;
        Ok(sequential[idx].content.clone())
    }
}

impl ChatBackend for MockBackend {
    fn backend_id(&self) -> String {
        "mock".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let content = self.pick(request)?;
        let prompt: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        Ok(ChatResponse {
            token_usage: TokenUsage {
                prompt,
                completion: estimate_tokens(&content),
            },
            content,
            latency_ms: 0,
            backend_id: self.backend_id(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Message, Role};

    fn req(tag: &str, scope: &str, text: &str) -> ChatRequest {
        ChatRequest::new(vec![Message::new(Role::User, text)], 0.5, 64, tag, scope).unwrap()
    }

    #[test]
    fn scripted_content_by_tag() {
        let mock = MockBackend::new().script("define_properties", "P1: ...");
        let resp = mock.complete(&req("define_properties", "p", "q")).unwrap();
        assert_eq!(resp.content, "P1: ...");
        assert_eq!(resp.backend_id, "mock");
    }

    #[test]
    fn sequential_then_sticky() {
        let mock = MockBackend::new().script("t", "a").script("t", "b");
        let got: Vec<String> = (0..4).map(|_| mock.complete(&req("t", "p", "")).unwrap().content).collect();
        assert_eq!(got, ["a", "b", "b", "b"]);
        // a different problem has its own cursor
        assert_eq!(mock.complete(&req("t", "other", "")).unwrap().content, "a");
    }

    #[test]
    fn scoped_and_conditional_entries() {
        let mock = MockBackend::new()
            .script("t", "generic")
            .script_scoped("special", "t", "scoped")
            .script_when("t", "needle", "conditional");
        assert_eq!(mock.complete(&req("t", "p", "hay")).unwrap().content, "generic");
        assert_eq!(mock.complete(&req("t", "p", "a needle")).unwrap().content, "conditional");
        assert_eq!(mock.complete(&req("t", "special", "needle")).unwrap().content, "scoped");
    }

    #[test]
    fn unscripted_tag_errors() {
        let mock = MockBackend::new();
        assert!(matches!(mock.complete(&req("x", "p", "")), Err(BackendError::Unscripted(t)) if t == "x"));
    }
}
