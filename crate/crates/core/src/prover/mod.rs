//! Backend-agnostic interactive prover sessions.
//!
//! A session executes one sentence at a time. Accepted sentences push a new
//! checkpoint on the session history; rejected sentences leave the state
//! untouched. Rollback restores any checkpoint still on the history.

pub mod certify;
pub mod coqtop;
pub mod mock;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::sentence::code_sentences;
use crate::model::LexError;

pub use certify::{certify_file, certify_with_trusted_prefix, CertificationReport};

pub const DEFAULT_SENTENCE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Real,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecOutcome {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub outcome: ExecOutcome,
    pub goals_after: Vec<String>,
    pub message: String,
}

impl ExecResult {
    pub fn accepted(goals_after: Vec<String>, message: impl Into<String>) -> Self {
        ExecResult { outcome: ExecOutcome::Accepted, goals_after, message: message.into() }
    }

    pub fn rejected(goals_after: Vec<String>, message: impl Into<String>) -> Self {
        ExecResult { outcome: ExecOutcome::Rejected, goals_after, message: message.into() }
    }

    pub fn is_accepted(&self) -> bool {
        self.outcome == ExecOutcome::Accepted
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("prover backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prover session died: {0}")]
    SessionDead(String),
    #[error("preamble sentence {index} rejected: {}", .result.message)]
    PreambleRejected { index: usize, result: ExecResult },
    #[error("unknown state token {0}")]
    UnknownToken(StateToken),
    #[error("prover protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Parse(#[from] LexError),
}

/// What a backend reports for one sentence. Backends never see rejected
/// sentences again; the session keeps the authoritative history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendReply {
    Accepted { goals: Vec<String>, message: String },
    Rejected { message: String },
}

pub trait ProverBackend: Send {
    fn kind(&self) -> BackendKind;

    /// Executes `sentence` at the current state. A rejected sentence must have
    /// no effect on the backend state.
    fn exec(&mut self, sentence: &str, timeout: Duration) -> Result<BackendReply, SessionError>;

    /// Restores the state reached after the first `depth` accepted sentences
    /// of `history`.
    fn rollback(&mut self, depth: usize, history: &[String]) -> Result<(), SessionError>;
}

/// Spawns fresh backends; certification and lemma checking each get their own.
pub trait ProverFactory: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn spawn(&self) -> Result<Box<dyn ProverBackend>, SessionError>;
}

/// Opaque checkpoint identifier, scoped to the session that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateToken {
    session: u64,
    seq: u64,
}

impl StateToken {
    pub fn seq(&self) -> u64 {
        self.seq
    }
}

impl fmt::Display for StateToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}#{}", self.session, self.seq)
    }
}

static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

struct Checkpoint {
    token: StateToken,
    sentence: String,
    goals: Vec<String>,
}

pub struct Session {
    backend: Box<dyn ProverBackend>,
    id: u64,
    next_seq: u64,
    initial: StateToken,
    history: Vec<Checkpoint>,
    timeout: Duration,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("backend", &self.backend.kind())
            .field("state", &self.current_state())
            .field("depth", &self.history.len())
            .finish()
    }
}

impl Session {
    /// Starts a session and executes `preamble` sentence by sentence.
    pub fn start(factory: &dyn ProverFactory, preamble: &str) -> Result<Self, SessionError> {
        Self::start_with_timeout(factory, preamble, DEFAULT_SENTENCE_TIMEOUT)
    }

    pub fn start_with_timeout(
        factory: &dyn ProverFactory,
        preamble: &str,
        timeout: Duration,
    ) -> Result<Self, SessionError> {
        let id = NEXT_SESSION.fetch_add(1, Ordering::Relaxed);
        let mut session = Session {
            backend: factory.spawn()?,
            id,
            next_seq: 1,
            initial: StateToken { session: id, seq: 0 },
            history: Vec::new(),
            timeout,
        };
        for (index, s) in code_sentences(preamble)?.iter().enumerate() {
            let result = session.exec(&s.text)?;
            if !result.is_accepted() {
                return Err(SessionError::PreambleRejected { index, result });
            }
        }
        Ok(session)
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn current_state(&self) -> StateToken {
        self.history.last().map_or(self.initial, |c| c.token)
    }

    pub fn history(&self) -> Vec<StateToken> {
        std::iter::once(self.initial).chain(self.history.iter().map(|c| c.token)).collect()
    }

    /// Accepted sentences from the initial state to the current one.
    pub fn accepted_sentences(&self) -> Vec<String> {
        self.history.iter().map(|c| c.sentence.clone()).collect()
    }

    pub fn goals(&self) -> &[String] {
        self.history.last().map_or(&[], |c| c.goals.as_slice())
    }

    pub fn depth(&self) -> usize {
        self.history.len()
    }

    pub fn exec(&mut self, sentence: &str) -> Result<ExecResult, SessionError> {
        let trimmed = sentence.trim();
        if trimmed.is_empty() {
            return Ok(ExecResult::rejected(self.goals().to_vec(), "Error: empty sentence."));
        }
        match self.backend.exec(trimmed, self.timeout)? {
            BackendReply::Accepted { goals, message } => {
                let token = StateToken { session: self.id, seq: self.next_seq };
                self.next_seq += 1;
                self.history.push(Checkpoint {
                    token,
                    sentence: trimmed.to_string(),
                    goals: goals.clone(),
                });
                Ok(ExecResult::accepted(goals, message))
            }
            BackendReply::Rejected { message } => {
                Ok(ExecResult::rejected(self.goals().to_vec(), message))
            }
        }
    }

    pub fn rollback(&mut self, token: StateToken) -> Result<(), SessionError> {
        let depth = if token == self.initial {
            0
        } else {
            self.history
                .iter()
                .position(|c| c.token == token)
                .map(|p| p + 1)
                .ok_or(SessionError::UnknownToken(token))?
        };
        if depth == self.history.len() {
            return Ok(());
        }
        let sentences: Vec<String> = self.history.iter().map(|c| c.sentence.clone()).collect();
        self.backend.rollback(depth, &sentences)?;
        self.history.truncate(depth);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{MockFactory, MockScriptBuilder};
    use super::*;

    fn factory() -> MockFactory {
        let mut b = MockScriptBuilder::new();
        let s1 = b.accept(0, "Lemma t : True.", &["True"]);
        let s2 = b.accept(s1, "Proof.", &["True"]);
        b.reject(s2, "apply HL2.", "Error: nope");
        let s3 = b.accept(s2, "auto.", &[]);
        b.accept(s3, "Qed.", &[]);
        MockFactory::new(b.finish())
    }

    #[test]
    fn empty_preamble_starts_at_initial_state() {
        let s = Session::start(&factory(), "").unwrap();
        assert_eq!(s.depth(), 0);
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn broken_preamble_reports_index() {
        let err = Session::start(&factory(), "Lemma t : True. Proof. bogus. auto.").unwrap_err();
        match err {
            SessionError::PreambleRejected { index, .. } => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exec_accept_reject_and_rollback() {
        let mut s = Session::start(&factory(), "Lemma t : True. Proof.").unwrap();
        let before = s.current_state();
        let r = s.exec("apply HL2.").unwrap();
        assert!(!r.is_accepted());
        assert_eq!(r.message, "Error: nope");
        assert_eq!(s.current_state(), before);
        let r = s.exec(" auto. ").unwrap();
        assert!(r.is_accepted() && r.goals_after.is_empty());
        s.rollback(before).unwrap();
        assert_eq!(s.goals(), ["True"]);
        assert_eq!(s.exec("auto.").unwrap(), r);
    }

    #[test]
    fn rollback_to_current_is_noop_and_foreign_tokens_fail() {
        let mut a = Session::start(&factory(), "Lemma t : True.").unwrap();
        let b = Session::start(&factory(), "Lemma t : True.").unwrap();
        a.rollback(a.current_state()).unwrap();
        assert_eq!(a.depth(), 1);
        assert!(matches!(a.rollback(b.current_state()), Err(SessionError::UnknownToken(_))));
    }
}
