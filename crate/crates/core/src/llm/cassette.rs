//! Record and replay of chat exchanges.
//!
//! A cassette is a JSON array of `{request_hash, request_snapshot, response}`
//! entries. Replay looks responses up by the request's content hash; several
//! entries with the same hash are served in order, and the last one repeats
//! once the others are used up.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub request_snapshot: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Cassette(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let entries: Vec<CassetteEntry> =
            serde_json::from_str(text).map_err(|e| LlmError::Cassette(format!("malformed cassette: {e}")))?;
        for e in &entries {
            let actual = e.request_snapshot.content_hash();
            if actual != e.request_hash {
                return Err(LlmError::Cassette(format!(
                    "entry hash {} does not match its request snapshot ({actual})",
                    e.request_hash
                )));
            }
        }
        Ok(Cassette { entries })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("serializable") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| LlmError::Cassette(format!("cannot write {}: {e}", path.display())))
    }

    pub fn push(&mut self, request: &ChatRequest, response: ChatResponse) {
        self.entries.push(CassetteEntry {
            request_hash: request.content_hash(),
            request_snapshot: request.clone(),
            response,
        });
    }
}

struct Track {
    queue: VecDeque<ChatResponse>,
    last: ChatResponse,
}

pub struct ReplayBackend {
    tracks: Mutex<HashMap<String, Track>>,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        let mut tracks: HashMap<String, Track> = HashMap::new();
        for e in cassette.entries {
            match tracks.get_mut(&e.request_hash) {
                Some(t) => t.queue.push_back(e.response),
                None => {
                    let last = e.response.clone();
                    tracks.insert(e.request_hash, Track { queue: VecDeque::from([e.response]), last });
                }
            }
        }
        ReplayBackend { tracks: Mutex::new(tracks) }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Cassette::load(path)?))
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let hash = request.content_hash();
        let mut tracks = self.tracks.lock().expect("replay lock");
        match tracks.get_mut(&hash) {
            Some(track) => {
                if let Some(r) = track.queue.pop_front() {
                    track.last = r.clone();
                    Ok(r)
                } else {
                    Ok(track.last.clone())
                }
            }
            None => Err(LlmError::ReplayMismatch {
                hash,
                snapshot: serde_json::to_string_pretty(request).expect("serializable"),
            }),
        }
    }
}

/// Forwards to an inner backend and records every exchange. When a path is
/// given the cassette file is rewritten after each exchange.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    cassette: Mutex<Cassette>,
    path: Option<PathBuf>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, path: Option<PathBuf>) -> Self {
        RecordingBackend { inner, cassette: Mutex::default(), path }
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().expect("recording lock").clone()
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(request)?;
        let mut cassette = self.cassette.lock().expect("recording lock");
        cassette.push(request, response.clone());
        if let Some(path) = &self.path {
            cassette.save(path)?;
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{queued_backend, ChatMessage, Role};
    use serde_json::json;

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::new(Role::User, text)])
    }

    #[test]
    fn record_then_replay_is_identical() {
        let rec = RecordingBackend::new(
            Arc::new(queued_backend(vec![
                ChatResponse::text("one"),
                ChatResponse::tool("adapt_lemma", json!({"lemma": "HL2"})),
                ChatResponse::text("two"),
            ])),
            None,
        );
        let a = rec.complete(&req("a")).unwrap();
        let b = rec.complete(&req("b")).unwrap();
        let c = rec.complete(&req("a")).unwrap();
        let json = rec.cassette().to_json();
        let replay = ReplayBackend::new(Cassette::from_json(&json).unwrap());
        assert_eq!(replay.complete(&req("a")).unwrap(), a);
        let tool = replay.complete(&req("b")).unwrap();
        assert_eq!(tool, b);
        assert!(tool.text.is_none() && tool.tool_call.is_some());
        assert_eq!(replay.complete(&req("a")).unwrap(), c);
        assert_eq!(replay.complete(&req("a")).unwrap(), c);
    }

    #[test]
    fn mismatch_reports_request() {
        let replay = ReplayBackend::new(Cassette::default());
        match replay.complete(&req("unrecorded prompt")) {
            Err(LlmError::ReplayMismatch { snapshot, .. }) => assert!(snapshot.contains("unrecorded prompt")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tampered_snapshot_detected() {
        let mut c = Cassette::default();
        c.push(&req("a"), ChatResponse::text("x"));
        let json = c.to_json().replace("\"a\"", "\"b\"");
        assert!(Cassette::from_json(&json).is_err());
    }

    #[test]
    fn recording_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let rec = RecordingBackend::new(Arc::new(queued_backend(vec![ChatResponse::text("x")])), Some(path.clone()));
        rec.complete(&req("a")).unwrap();
        assert_eq!(Cassette::load(&path).unwrap().entries.len(), 1);
    }
}
