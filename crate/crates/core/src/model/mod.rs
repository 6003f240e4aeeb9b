//! Domain types shared by the pipeline, plus prover-text parsing at sentence,
//! lemma and token granularity.

pub mod io;
pub mod lemma_blocks;
pub mod lexer;
pub mod sentence;
pub mod terms;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lemma_blocks::extract_lemma_blocks;
pub use lexer::LexError;
pub use sentence::{split_sentences, Sentence};
pub use terms::count_terms;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("goal file has no unproved goal statement")]
    NoGoal,
    #[error("goal file has {} unproved goal statements ({}), expected exactly one", .0.len(), .0.join(", "))]
    MultipleGoals(Vec<String>),
    #[error("property location line must be >= 1")]
    InvalidLocation,
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyLocation {
    pub file: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationTask {
    pub task_id: String,
    pub property_name: String,
    pub property_location: PropertyLocation,
    pub annotated_source: String,
    pub goal_file: String,
}

impl VerificationTask {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.property_location.line == 0 {
            return Err(ModelError::InvalidLocation);
        }
        self.proof_targeted_vc().map(|_| ())
    }

    pub fn proof_targeted_vc(&self) -> Result<ProofTargetedVc, ModelError> {
        ProofTargetedVc::from_goal_file(&self.goal_file)
    }
}

/// The verbose goal emitted by the VC generator, with its preamble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofTargetedVc {
    pub name: String,
    /// The full declaration sentence, e.g. `Theorem goal : forall ...`.
    pub statement_text: String,
    pub preamble_text: String,
    pub term_count: u64,
}

impl ProofTargetedVc {
    /// Splits a goal file into preamble and its single unproved goal.
    ///
    /// Anything after the goal statement (a `Proof. Admitted.` stub, say) is
    /// dropped; the preamble is kept verbatim.
    pub fn from_goal_file(goal_file: &str) -> Result<Self, ModelError> {
        let sentences = split_sentences(goal_file)?;
        let mut open = Vec::new();
        let mut i = 0;
        while i < sentences.len() {
            if lemma_blocks::is_theorem_sentence(&sentences[i]) {
                let decl = i;
                i += 1;
                let mut proved = false;
                while i < sentences.len() && !lemma_blocks::is_theorem_sentence(&sentences[i]) {
                    let head = sentences[i].head();
                    if head == "Qed" || head == "Defined" {
                        proved = true;
                    }
                    i += 1;
                }
                if !proved {
                    open.push(decl);
                }
            } else {
                i += 1;
            }
        }
        let decl = match open.as_slice() {
            [] => return Err(ModelError::NoGoal),
            [one] => *one,
            many => {
                return Err(ModelError::MultipleGoals(
                    many.iter()
                        .filter_map(|&k| {
                            lemma_blocks::parse_declaration(&sentences[k].code()).map(|d| d.0)
                        })
                        .collect(),
                ))
            }
        };
        let s = &sentences[decl];
        let code = s.code();
        let (name, proposition) =
            lemma_blocks::parse_declaration(&code).ok_or(ModelError::NoGoal)?;
        let lead = s.text.len() - s.text.trim_start().len();
        Ok(ProofTargetedVc {
            name,
            statement_text: s.text.trim().to_string(),
            preamble_text: goal_file[..s.start + lead].to_string(),
            term_count: count_terms(&proposition),
        })
    }

    pub fn proposition(&self) -> String {
        lemma_blocks::parse_declaration(&lexer::normalize(&self.statement_text))
            .map(|d| d.1)
            .unwrap_or_default()
    }
}

/// An untrusted, self-contained restatement of the property with its proof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticsAwareVc {
    pub file_text: String,
    pub main_lemma_name: String,
    pub checked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Offline,
    OnlineRefined,
    OnlineNew,
    History,
}

impl Provenance {
    pub fn is_online(self) -> bool {
        matches!(self, Provenance::OnlineRefined | Provenance::OnlineNew)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaStatus {
    Unchecked,
    PendingSubproof,
    Checked,
    Conflict,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelperLemma {
    pub name: String,
    pub statement: String,
    pub proof: String,
    pub provenance: Provenance,
    pub status: LemmaStatus,
    #[serde(default)]
    pub depends_on: BTreeSet<String>,
}

impl HelperLemma {
    pub fn draft(name: impl Into<String>, statement: impl Into<String>, proof: impl Into<String>) -> Self {
        HelperLemma {
            name: name.into(),
            statement: statement.into(),
            proof: proof.into(),
            provenance: Provenance::Offline,
            status: LemmaStatus::Unchecked,
            depends_on: BTreeSet::new(),
        }
    }

    /// The lemma as a standalone prover block.
    pub fn render(&self) -> String {
        format!("Lemma {} :\n  {}.\n{}\n", self.name, self.statement, self.proof)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub lemma_name: String,
    pub guidance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofPlan {
    pub steps: Vec<PlanStep>,
}

impl ProofPlan {
    /// Keeps only steps whose lemma is in `names`.
    pub fn retain_lemmas<'a>(&mut self, names: impl IntoIterator<Item = &'a str>) {
        let keep: BTreeSet<&str> = names.into_iter().collect();
        self.steps.retain(|s| keep.contains(s.lemma_name.as_str()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticError {
    pub tactic: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofState {
    pub applied_tactics: Vec<String>,
    pub open_goals: Vec<String>,
    pub last_error: Option<TacticError>,
}

impl ProofState {
    pub fn is_complete(&self) -> bool {
        self.open_goals.is_empty() && self.last_error.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Proved,
    ExhaustedSteps,
    ExhaustedTime,
    Aborted,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Proved => "proved",
            Outcome::ExhaustedSteps => "exhausted-steps",
            Outcome::ExhaustedTime => "exhausted-time",
            Outcome::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TranscriptEvent {
    TacticAttempt { step: u32, tactic: String },
    ProverReply { accepted: bool, goals: Vec<String>, message: String },
    ToolCall { step: u32, name: String, arguments: serde_json::Value },
    ToolReply { kind: String, detail: String },
    LemmaAdded { name: String, provenance: Provenance },
    BudgetTick { consumed_steps: u32, elapsed_ms: u64 },
    Rollback { to_state: u64 },
    Note { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTranscript {
    pub task_id: String,
    pub events: Vec<TranscriptEvent>,
    pub outcome: Outcome,
    pub final_script: Option<String>,
}
