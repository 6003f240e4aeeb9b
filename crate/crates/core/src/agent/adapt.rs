//! Feedback-guided lemma adaptation.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::library::LemmaLibrary;
use crate::llm::prompts::{render_prompt, slots, TemplateId};
use crate::llm::{extract_code_block, ChatMessage, LlmClient, LlmError, Phase};
use crate::model::lemma_blocks::extract_lemma_blocks;
use crate::model::{HelperLemma, LemmaStatus, ProofState, TacticError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptationKind {
    ApplyExisting,
    Refined,
    NewLemma,
    None,
}

impl AdaptationKind {
    pub fn label(self) -> &'static str {
        match self {
            AdaptationKind::ApplyExisting => "apply-existing",
            AdaptationKind::Refined => "refined",
            AdaptationKind::NewLemma => "new-lemma",
            AdaptationKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptationRequest {
    pub proof_state: ProofState,
    pub library_view: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationResult {
    pub kind: AdaptationKind,
    /// Present for `Refined` and `NewLemma`, with status `PendingSubproof`.
    pub lemma: Option<HelperLemma>,
    /// The assertion sentence that introduces `lemma` in the live proof.
    pub insertion: Option<String>,
    /// The library lemma applied or refined.
    pub target: Option<String>,
}

impl AdaptationResult {
    fn none() -> Self {
        AdaptationResult { kind: AdaptationKind::None, lemma: None, insertion: None, target: None }
    }
}

pub fn format_error_feedback(error: &TacticError) -> String {
    let message = error.message.trim();
    let message = message.strip_prefix("Error:").unwrap_or(message).trim();
    format!("Tactic {} failed because {}", error.tactic.trim(), message)
}

pub fn adaptation_prompt(request: &AdaptationRequest) -> Result<Vec<ChatMessage>, LlmError> {
    let state = &request.proof_state;
    let applied = if state.applied_tactics.is_empty() {
        "(none)".to_string()
    } else {
        state.applied_tactics.join(" ")
    };
    let goal = state.open_goals.first().map_or("(no goals)".to_string(), |g| g.clone());
    let feedback = state.last_error.as_ref().map_or("(none)".to_string(), format_error_feedback);
    render_prompt(
        TemplateId::OnlineAdaptation,
        &slots([
            ("applied_tactics", applied.as_str()),
            ("open_goal", goal.as_str()),
            ("error_feedback", feedback.as_str()),
            ("lemma_listing", request.library_view.trim_end()),
        ]),
    )
}

pub fn assertion_sentence(lemma: &HelperLemma) -> String {
    let stmt = lemma.statement.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("assert ({} : {}).", lemma.name, stmt)
}

static APPLY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*`?APPLY\s+([A-Za-z_][A-Za-z0-9_']*)").unwrap());

/// Sorts a model reply into one of the three strategies.
pub fn classify_adaptation(reply: &str, library: &LemmaLibrary) -> AdaptationResult {
    if let Some(cap) = APPLY.captures(reply) {
        let name = &cap[1];
        if library.get(name).is_some() {
            return AdaptationResult {
                kind: AdaptationKind::ApplyExisting,
                lemma: None,
                insertion: None,
                target: Some(name.to_string()),
            };
        }
    }
    let Some(code) = extract_code_block(reply) else {
        return AdaptationResult::none();
    };
    let Some(mut lemma) = extract_lemma_blocks(&code).ok().and_then(|d| d.into_iter().next()) else {
        return AdaptationResult::none();
    };
    lemma.status = LemmaStatus::PendingSubproof;
    lemma.depends_on.clear();
    let base = lemma.name.trim_end_matches('\'').to_string();
    let (kind, target) = if library.get(&lemma.name).is_some() {
        let target = lemma.name.clone();
        lemma.name.push('\'');
        while library.get(&lemma.name).is_some() {
            lemma.name.push('\'');
        }
        (AdaptationKind::Refined, Some(target))
    } else if base != lemma.name && library.get(&base).is_some() {
        (AdaptationKind::Refined, Some(base))
    } else {
        (AdaptationKind::NewLemma, None)
    };
    let insertion = Some(assertion_sentence(&lemma));
    AdaptationResult { kind, lemma: Some(lemma), insertion, target }
}

pub fn adapt_lemma(
    llm: &LlmClient,
    request: &AdaptationRequest,
    library: &LemmaLibrary,
) -> Result<AdaptationResult, LlmError> {
    let messages = adaptation_prompt(request)?;
    let reply = llm.complete(Phase::Agent, &llm.request(messages, Vec::new()))?;
    Ok(classify_adaptation(&reply.text.unwrap_or_default(), library))
}
