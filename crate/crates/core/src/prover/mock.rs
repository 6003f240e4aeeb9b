//! Deterministic scripted prover.
//!
//! A mock script is a tree of prover states. State 0 is the empty session;
//! each recorded step maps `(state, sentence)` to a reply. Sentences are
//! matched after comment removal and whitespace collapsing. Unrecorded
//! sentences are rejected with `default_rejection`.
//!
//! ```json
//! { "schema": "lemmata.mock-script/1",
//!   "sentence_delay_ms": 0,
//!   "default_rejection": "Error: ...",
//!   "steps": [
//!     { "from": 0, "sentence": "Lemma t : True.", "accepted": true, "to": 1,
//!       "goals_after": ["True"], "message": "" },
//!     { "from": 1, "sentence": "apply HL2.", "accepted": false, "message": "Error: ..." }
//!   ] }
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendKind, BackendReply, ProverBackend, ProverFactory, SessionError};
use crate::model::lemma_blocks::{is_proof_closer, is_theorem_sentence, parse_declaration};
use crate::model::lexer::normalize;
use crate::model::sentence::code_sentences;

pub const MOCK_SCHEMA: &str = "lemmata.mock-script/1";
pub const DEFAULT_REJECTION: &str = "Error: The mock prover has no recorded reply for this sentence.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockStep {
    pub from: u32,
    pub sentence: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub goals_after: Vec<String>,
    #[serde(default)]
    pub message: String,
    /// Simulates the prover process dying on this sentence.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub crash: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub schema: String,
    #[serde(default)]
    pub sentence_delay_ms: u64,
    #[serde(default = "default_rejection")]
    pub default_rejection: String,
    pub steps: Vec<MockStep>,
}

fn default_rejection() -> String {
    DEFAULT_REJECTION.to_string()
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SessionError::BackendUnavailable(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let script: MockScript = serde_json::from_str(text)
            .map_err(|e| SessionError::BackendUnavailable(format!("malformed mock script: {e}")))?;
        if script.schema != MOCK_SCHEMA {
            return Err(SessionError::BackendUnavailable(format!(
                "mock script schema {:?}, expected {MOCK_SCHEMA:?}",
                script.schema
            )));
        }
        Ok(script)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

type StepIndex = HashMap<(u32, String), MockStep>;

fn index(script: &MockScript) -> StepIndex {
    script.steps.iter().map(|s| ((s.from, normalize(&s.sentence)), s.clone())).collect()
}

pub struct MockFactory {
    script: Arc<MockScript>,
    index: Arc<StepIndex>,
}

impl MockFactory {
    pub fn new(script: MockScript) -> Self {
        let index = Arc::new(index(&script));
        MockFactory { script: Arc::new(script), index }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl ProverFactory for MockFactory {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn spawn(&self) -> Result<Box<dyn ProverBackend>, SessionError> {
        Ok(Box::new(MockBackend {
            script: Arc::clone(&self.script),
            index: Arc::clone(&self.index),
            states: vec![0],
            dead: false,
        }))
    }
}

pub struct MockBackend {
    script: Arc<MockScript>,
    index: Arc<StepIndex>,
    /// State after each accepted sentence, starting with the root.
    states: Vec<u32>,
    dead: bool,
}

impl ProverBackend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn exec(&mut self, sentence: &str, timeout: Duration) -> Result<BackendReply, SessionError> {
        if self.dead {
            return Err(SessionError::SessionDead("mock prover already crashed".into()));
        }
        let delay = Duration::from_millis(self.script.sentence_delay_ms);
        if delay > timeout {
            thread::sleep(timeout);
            return Ok(BackendReply::Rejected {
                message: format!("Timeout: sentence exceeded {} ms.", timeout.as_millis()),
            });
        }
        thread::sleep(delay);
        let here = *self.states.last().expect("root state");
        let Some(step) = self.index.get(&(here, normalize(sentence))) else {
            return Ok(BackendReply::Rejected { message: self.script.default_rejection.clone() });
        };
        if step.crash {
            self.dead = true;
            return Err(SessionError::SessionDead(step.message.clone()));
        }
        if step.accepted {
            let to = step.to.ok_or_else(|| {
                SessionError::Protocol(format!("accepted mock step from {here} has no target"))
            })?;
            self.states.push(to);
            Ok(BackendReply::Accepted { goals: step.goals_after.clone(), message: step.message.clone() })
        } else {
            Ok(BackendReply::Rejected { message: step.message.clone() })
        }
    }

    fn rollback(&mut self, depth: usize, _history: &[String]) -> Result<(), SessionError> {
        if depth + 1 > self.states.len() {
            return Err(SessionError::Protocol(format!("rollback beyond mock history to {depth}")));
        }
        self.states.truncate(depth + 1);
        Ok(())
    }
}

/// Incrementally builds a mock script; identical transitions are shared.
#[derive(Debug, Clone, Default)]
pub struct MockScriptBuilder {
    steps: Vec<MockStep>,
    lookup: HashMap<(u32, String), usize>,
    next_state: u32,
    delay_ms: u64,
}

impl MockScriptBuilder {
    pub fn new() -> Self {
        MockScriptBuilder { next_state: 1, ..Default::default() }
    }

    pub fn sentence_delay_ms(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    /// Records an accepted sentence and returns the target state.
    pub fn accept(&mut self, from: u32, sentence: &str, goals: &[&str]) -> u32 {
        self.accept_with(from, sentence, goals.iter().map(|g| g.to_string()).collect(), "")
    }

    pub fn accept_with(&mut self, from: u32, sentence: &str, goals: Vec<String>, message: &str) -> u32 {
        let key = (from, normalize(sentence));
        if let Some(&i) = self.lookup.get(&key) {
            let step = &mut self.steps[i];
            if step.accepted {
                step.goals_after = goals;
                step.message = message.to_string();
                return step.to.expect("accepted step has a target");
            }
        }
        let to = self.next_state;
        self.next_state += 1;
        self.insert(
            key,
            MockStep {
                from,
                sentence: sentence.trim().to_string(),
                accepted: true,
                to: Some(to),
                goals_after: goals,
                message: message.to_string(),
                crash: false,
            },
        );
        to
    }

    pub fn reject(&mut self, from: u32, sentence: &str, message: &str) {
        let key = (from, normalize(sentence));
        self.insert(
            key,
            MockStep {
                from,
                sentence: sentence.trim().to_string(),
                accepted: false,
                to: None,
                goals_after: Vec::new(),
                message: message.to_string(),
                crash: false,
            },
        );
    }

    pub fn crash(&mut self, from: u32, sentence: &str, message: &str) {
        let key = (from, normalize(sentence));
        self.insert(
            key,
            MockStep {
                from,
                sentence: sentence.trim().to_string(),
                accepted: false,
                to: None,
                goals_after: Vec::new(),
                message: message.to_string(),
                crash: true,
            },
        );
    }

    fn insert(&mut self, key: (u32, String), step: MockStep) {
        match self.lookup.get(&key) {
            Some(&i) => self.steps[i] = step,
            None => {
                self.lookup.insert(key, self.steps.len());
                self.steps.push(step);
            }
        }
    }

    /// Accepts every sentence of `text` from `from`, deriving goals from the
    /// file structure: a declaration opens its proposition as the goal, the
    /// last tactic before a closer (and the closer) leave no goals, other
    /// sentences keep the current goals. Returns the final state.
    pub fn accept_file(&mut self, from: u32, text: &str) -> u32 {
        let sentences = code_sentences(text).expect("fixture text lexes");
        let mut state = from;
        let mut goals: Vec<String> = Vec::new();
        for (k, s) in sentences.iter().enumerate() {
            let next_closes = sentences.get(k + 1).is_some_and(is_proof_closer);
            if is_theorem_sentence(s) {
                goals = parse_declaration(&s.code()).map(|d| vec![d.1]).unwrap_or_default();
            } else if is_proof_closer(s) || (next_closes && !goals.is_empty() && s.head() != "Proof") {
                goals.clear();
            }
            state = self.accept_with(state, &s.text, goals.clone(), "");
        }
        state
    }

    /// Follows recorded accepted steps for `text` from `from`, if all exist.
    pub fn walk(&self, from: u32, text: &str) -> Option<u32> {
        let mut state = from;
        for s in code_sentences(text).ok()? {
            let i = *self.lookup.get(&(state, normalize(&s.text)))?;
            state = self.steps[i].to?;
        }
        Some(state)
    }

    pub fn finish(self) -> MockScript {
        MockScript {
            schema: MOCK_SCHEMA.into(),
            sentence_delay_ms: self.delay_ms,
            default_rejection: DEFAULT_REJECTION.into(),
            steps: self.steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prover::Session;

    #[test]
    fn accept_file_derives_goals() {
        let mut b = MockScriptBuilder::new();
        let end = b.accept_file(0, "Lemma a : 1 = 1.\nProof.\n  reflexivity.\nQed.\n");
        let factory = MockFactory::new(b.finish());
        let mut s = Session::start(&factory, "").unwrap();
        assert_eq!(s.exec("Lemma a : 1 = 1.").unwrap().goals_after, ["1 = 1"]);
        assert_eq!(s.exec("Proof.").unwrap().goals_after, ["1 = 1"]);
        assert!(s.exec("reflexivity.").unwrap().goals_after.is_empty());
        assert!(s.exec("Qed.").unwrap().is_accepted());
        assert_eq!(end, 4);
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let mut b = MockScriptBuilder::new();
        b.accept(0, "auto.", &[]);
        b.reject(0, "fail.", "Error: failed");
        let script = b.finish();
        let back = MockScript::from_json(&script.to_json()).unwrap();
        assert_eq!(back, script);
        assert!(MockScript::from_json(&script.to_json().replace(MOCK_SCHEMA, "x/1")).is_err());
    }

    #[test]
    fn crash_is_distinguishable_from_rejection() {
        let mut b = MockScriptBuilder::new();
        b.crash(0, "Segfault.", "prover exited with signal 11");
        let factory = MockFactory::new(b.finish());
        let mut s = Session::start(&factory, "").unwrap();
        assert!(matches!(s.exec("Segfault."), Err(SessionError::SessionDead(_))));
    }

    #[test]
    fn slow_prover_times_out_as_rejection() {
        let mut b = MockScriptBuilder::new().sentence_delay_ms(200);
        b.accept(0, "auto.", &[]);
        let factory = MockFactory::new(b.finish());
        let mut s = Session::start_with_timeout(&factory, "", Duration::from_millis(20)).unwrap();
        let r = s.exec("auto.").unwrap();
        assert!(!r.is_accepted());
        assert!(r.message.starts_with("Timeout"));
    }
}
