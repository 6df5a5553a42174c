//! Transcript recording and replay.
//!
//! A transcript is JSONL, one [`TranscriptEntry`] per backend call. Replay
//! serves entries per (problem, tag) in recorded order and refuses a request
//! whose fingerprint differs from the recording. Failed calls are recorded
//! too and fail again on replay with the same message.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(default)]
    pub scope: String,
    pub tag: String,
    pub request_fingerprint: String,
    /// Exactly one of `response` and `error` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ChatResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_transcript(path: &Path) -> std::io::Result<Vec<TranscriptEntry>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

/// Wraps a live or scripted backend and keeps every exchange.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            entries: Mutex::default(),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn write_transcript(&self, path: &Path) -> std::io::Result<()> {
        write_transcript(path, &self.entries.lock().unwrap())
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let outcome = self.inner.complete(request);
        self.entries.lock().unwrap().push(TranscriptEntry {
            scope: request.scope.clone(),
            tag: request.tag.clone(),
            request_fingerprint: request.fingerprint(),
            response: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().map(ToString::to_string),
        });
        outcome
    }
}

#[derive(Debug)]
pub struct ReplayBackend {
    queues: Mutex<HashMap<(String, String), VecDeque<TranscriptEntry>>>,
    scopes: HashSet<String>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let scopes = entries.iter().map(|e| e.scope.clone()).collect();
        let mut queues: HashMap<(String, String), VecDeque<TranscriptEntry>> = HashMap::new();
        for e in entries {
            queues
                .entry((e.scope.clone(), e.tag.clone()))
                .or_default()
                .push_back(e);
        }
        Self {
            queues: Mutex::new(queues),
            scopes,
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(read_transcript(path)?))
    }
}

impl ChatBackend for ReplayBackend {
    fn backend_id(&self) -> String {
        "replay".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let actual = request.fingerprint();
        if !self.scopes.contains(&request.scope) {
            return Err(BackendError::FingerprintMismatch {
                tag: request.tag.clone(),
                recorded: None,
                actual,
            });
        }
        let mut queues = self.queues.lock().unwrap();
        let entry = queues
            .get_mut(&(request.scope.clone(), request.tag.clone()))
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::ReplayExhausted(request.tag.clone()))?;
        if entry.request_fingerprint != actual {
            return Err(BackendError::FingerprintMismatch {
                tag: request.tag.clone(),
                recorded: Some(entry.request_fingerprint),
                actual,
            });
        }
        match (entry.response, entry.error) {
            (Some(resp), _) => Ok(resp),
            (None, error) => Err(BackendError::Recorded(error.unwrap_or_default())),
        }
    }
}
