//! Offline helper-lemma synthesis.
//!
//! Slice the annotated source, ask for a self-contained semantics-aware
//! restatement of the property (checked by the prover), ask for helper lemmas
//! bridging it to the generated goal, then keep only the lemmas that check.

pub mod prune;
pub mod slice;

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::prompts::{render_prompt, TemplateId};
use crate::llm::{extract_code_block, text_after_code, ChatMessage, LlmClient, LlmError, Phase, Role};
use crate::model::io::{check_schema, read};
use crate::model::lemma_blocks::extract_lemma_blocks;
use crate::model::{HelperLemma, LemmaStatus, ModelError, PlanStep, ProofPlan, SemanticsAwareVc, VerificationTask};
use crate::prover::{certify_file, ProverFactory, SessionError};

pub use prune::{prune_failed_lemmas, prune_with, PruneResult};
pub use slice::{slice_program, SliceResult};

pub const BUNDLE_SCHEMA: &str = "lemmata.bundle/1";
pub const PSA_ATTEMPTS: u32 = 3;
pub const DEFAULT_MAX_SOURCE_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error("semantic analysis failed after {attempts} attempt(s): {last_error}")]
    PsaExhausted { attempts: u32, last_error: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineBundle {
    pub schema: String,
    pub task_id: String,
    /// Absent when semantic analysis was skipped or failed.
    pub phi_a: Option<SemanticsAwareVc>,
    pub lemmas: Vec<HelperLemma>,
    pub plan: ProofPlan,
    pub psa_attempts: u32,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl OfflineBundle {
    pub fn empty(task_id: impl Into<String>) -> Self {
        OfflineBundle {
            schema: BUNDLE_SCHEMA.into(),
            task_id: task_id.into(),
            phi_a: None,
            lemmas: Vec::new(),
            plan: ProofPlan::default(),
            psa_attempts: 0,
            notes: Vec::new(),
        }
    }

    /// Lemmas the agent may see.
    pub fn checked_lemmas(&self) -> impl Iterator<Item = &HelperLemma> {
        self.lemmas.iter().filter(|l| l.status == LemmaStatus::Checked)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let bundle: OfflineBundle = serde_json::from_str(text)
            .map_err(|e| ModelError::Malformed { what: "bundle", detail: e.to_string() })?;
        check_schema(&bundle.schema, BUNDLE_SCHEMA, "bundle")?;
        Ok(bundle)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfflineOptions {
    pub use_psa: bool,
    pub max_source_bytes: usize,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        OfflineOptions { use_psa: true, max_source_bytes: DEFAULT_MAX_SOURCE_BYTES }
    }
}

fn file_name(path: &str) -> &str {
    Path::new(path).file_name().and_then(|n| n.to_str()).unwrap_or(path)
}

/// Asks for a self-contained file proving the property and certifies it,
/// feeding the first error back on failure. Returns the file and the number
/// of attempts used.
pub fn run_psa(
    llm: &LlmClient,
    factory: &dyn ProverFactory,
    task: &VerificationTask,
    slice: &SliceResult,
) -> Result<(SemanticsAwareVc, u32), OfflineError> {
    let line = task.property_location.line.to_string();
    let slots = crate::llm::prompts::slots([
        ("property_name", task.property_name.as_str()),
        ("function_name", slice.function_name.as_deref().unwrap_or("(file scope)")),
        ("line", line.as_str()),
        ("file_name", file_name(&task.property_location.file)),
        ("annotated_source", slice.sliced_source.trim_end()),
    ]);
    let mut messages = render_prompt(TemplateId::Psa, &slots)?;
    let mut last_error = String::new();
    for attempt in 1..=PSA_ATTEMPTS {
        let reply = llm.complete(Phase::Offline, &llm.request(messages.clone(), Vec::new()))?;
        let text = reply.text.unwrap_or_default();
        let candidate = extract_code_block(&text).unwrap_or_else(|| text.clone());
        let main = extract_lemma_blocks(&candidate).ok().and_then(|b| b.last().map(|l| l.name.clone()));
        let report = certify_file(factory, &candidate)?;
        let feedback = match (&main, report.accepted, &report.first_error) {
            (Some(name), true, _) => {
                let vc = SemanticsAwareVc { file_text: candidate, main_lemma_name: name.clone(), checked: true };
                return Ok((vc, attempt));
            }
            (None, true, _) => "The file declares no lemma.".to_string(),
            (_, false, Some((i, msg))) => format!("Coq rejected sentence {} of the file: {msg}", i + 1),
            (_, false, None) => format!(
                "The file is not fully proved: {} admitted obligation(s) and {} assumption(s).",
                report.admitted_count, report.axiom_count_added
            ),
        };
        log::info!("semantic analysis attempt {attempt} failed: {feedback}");
        last_error = feedback.clone();
        messages.push(ChatMessage::new(Role::Assistant, text));
        messages.push(ChatMessage::new(
            Role::User,
            format!("{feedback}\nFix the problem and reply with the complete corrected file."),
        ));
    }
    Err(OfflineError::PsaExhausted { attempts: PSA_ATTEMPTS, last_error })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisOutput {
    pub drafts: Vec<HelperLemma>,
    pub plan: ProofPlan,
    pub warnings: Vec<String>,
    /// Set when the reply could not be parsed.
    pub raw_reply: Option<String>,
}

static PLAN_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^\s*\d+[.)]\s*`?([A-Za-z_][A-Za-z0-9_']*)`?\s*:\s*(.*?)\s*$").unwrap()
});

/// Splits a synthesis reply into lemma drafts and a plan over them.
pub fn parse_synthesis_reply(text: &str) -> SynthesisOutput {
    let mut warnings = Vec::new();
    let code = extract_code_block(text).unwrap_or_else(|| text.to_string());
    let drafts = match extract_lemma_blocks(&code) {
        Ok(d) => d,
        Err(e) => {
            warnings.push(format!("unparseable lemma block: {e}"));
            return SynthesisOutput {
                drafts: Vec::new(),
                plan: ProofPlan::default(),
                warnings,
                raw_reply: Some(text.to_string()),
            };
        }
    };
    let mut plan = ProofPlan::default();
    for cap in PLAN_LINE.captures_iter(text_after_code(text)) {
        let name = &cap[1];
        if drafts.iter().any(|d| d.name == name) {
            plan.steps.push(PlanStep { lemma_name: name.to_string(), guidance: cap[2].to_string() });
        } else {
            warnings.push(format!("plan step cites undeclared lemma {name}; dropped"));
        }
    }
    let raw_reply = (drafts.is_empty() && !text.trim().is_empty()).then(|| text.to_string());
    SynthesisOutput { drafts, plan, warnings, raw_reply }
}

/// Asks for helper lemmas bridging `phi_a` (or, without it, the goal alone)
/// to the goal file.
pub fn synthesize_helper_lemmas(
    llm: &LlmClient,
    phi_a: Option<&SemanticsAwareVc>,
    goal_file: &str,
) -> Result<SynthesisOutput, OfflineError> {
    let phi_c = goal_file.trim_end();
    let messages = match phi_a {
        Some(a) => render_prompt(
            TemplateId::OfflineSynthesis,
            &crate::llm::prompts::slots([("phi_a", a.file_text.trim_end()), ("phi_c", phi_c)]),
        )?,
        None => render_prompt(TemplateId::OfflineSynthesisGoalOnly, &crate::llm::prompts::slots([("phi_c", phi_c)]))?,
    };
    let reply = llm.complete(Phase::Offline, &llm.request(messages, Vec::new()))?;
    let out = parse_synthesis_reply(&reply.text.unwrap_or_default());
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

pub fn assemble_bundle(
    task_id: &str,
    phi_a: Option<SemanticsAwareVc>,
    pruned: PruneResult,
    mut plan: ProofPlan,
    psa_attempts: u32,
    mut notes: Vec<String>,
) -> OfflineBundle {
    let survivors: Vec<String> =
        pruned.lemmas.iter().filter(|l| l.status == LemmaStatus::Checked).map(|l| l.name.clone()).collect();
    let before = plan.steps.len();
    plan.retain_lemmas(survivors.iter().map(String::as_str));
    if plan.steps.len() < before {
        notes.push(format!("{} plan step(s) dropped with their lemmas", before - plan.steps.len()));
    }
    notes.extend(pruned.diagnostics);
    OfflineBundle {
        schema: BUNDLE_SCHEMA.into(),
        task_id: task_id.to_string(),
        phi_a,
        lemmas: pruned.lemmas,
        plan,
        psa_attempts,
        notes,
    }
}

/// The whole offline phase for one task.
pub fn run_offline(
    llm: &LlmClient,
    factory: &dyn ProverFactory,
    task: &VerificationTask,
    options: OfflineOptions,
) -> Result<OfflineBundle, OfflineError> {
    let vc = task.proof_targeted_vc()?;
    let mut notes = Vec::new();
    let mut phi_a = None;
    let mut psa_attempts = 0;
    if options.use_psa {
        let mut slice = slice_program(&task.annotated_source, &task.property_location);
        if slice.whole_file {
            notes.push("property line is outside every function; sent the whole file".into());
        }
        slice.truncate_to(options.max_source_bytes);
        if slice.truncated {
            notes.push(format!("sliced source truncated to {} bytes", options.max_source_bytes));
        }
        match run_psa(llm, factory, task, &slice) {
            Ok((a, n)) => {
                phi_a = Some(a);
                psa_attempts = n;
            }
            Err(OfflineError::PsaExhausted { attempts, last_error }) => {
                psa_attempts = attempts;
                notes.push(format!(
                    "semantic analysis failed after {attempts} attempt(s) ({last_error}); continuing from the goal alone"
                ));
            }
            Err(e) => return Err(e),
        }
    }
    let synthesis = synthesize_helper_lemmas(llm, phi_a.as_ref(), &task.goal_file)?;
    notes.extend(synthesis.warnings);
    if let Some(raw) = synthesis.raw_reply {
        notes.push(format!("synthesis reply without lemmas:\n{raw}"));
    }
    let pruned = prune_failed_lemmas(factory, &vc.preamble_text, &synthesis.drafts)?;
    Ok(assemble_bundle(&task.task_id, phi_a, pruned, synthesis.plan, psa_attempts, notes))
}
