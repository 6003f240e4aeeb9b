//! Tactic-by-tactic proof agent with an adaptive lemma library.
//!
//! Each step the model sees the statement, the applied tactics, the current
//! goals, the last prover feedback, the library listing and the offline plan.
//! It answers with one tactic or, when the online adapter is enabled, a call
//! to the `adapt_lemma` tool. Refined and new lemmas enter the proof as
//! `assert` sentences whose obligations must be closed before the library
//! accepts them. A completed proof is reassembled into a standalone file and
//! re-checked from scratch; only then is the run reported as proved.

pub mod adapt;
pub mod library;
pub mod usage;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::llm::prompts::{adapt_tool_descriptor, render_prompt, slots, TemplateId, ADAPT_TOOL, TOOL_HINT};
use crate::llm::{extract_code_block, LlmClient, LlmError, Phase};
use crate::model::sentence::code_sentences;
use crate::model::{
    HelperLemma, LemmaStatus, ModelError, Outcome, ProofState, ProofTranscript, ProofTargetedVc, Provenance,
    TacticError, TranscriptEvent, VerificationTask,
};
use crate::offline::OfflineBundle;
use crate::prover::{
    certify_with_trusted_prefix, CertificationReport, ProverFactory, Session, SessionError, DEFAULT_SENTENCE_TIMEOUT,
};

pub use adapt::{adapt_lemma, classify_adaptation, AdaptationKind, AdaptationRequest, AdaptationResult};
pub use library::{Annotation, LemmaLibrary, SharedHistory};
pub use usage::detect_lemma_usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLimits {
    pub max_steps: u32,
    pub max_wall: Duration,
}

impl Default for BudgetLimits {
    fn default() -> Self {
        BudgetLimits { max_steps: 100, max_wall: Duration::from_secs(600) }
    }
}

#[derive(Debug, Clone)]
pub struct Budget {
    pub limits: BudgetLimits,
    pub consumed_steps: u32,
    started: Instant,
}

impl Budget {
    pub fn start(limits: BudgetLimits) -> Self {
        Budget { limits, consumed_steps: 0, started: Instant::now() }
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    pub fn exhausted(&self) -> Option<Outcome> {
        if self.consumed_steps >= self.limits.max_steps {
            Some(Outcome::ExhaustedSteps)
        } else if self.elapsed() >= self.limits.max_wall {
            Some(Outcome::ExhaustedTime)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub budget: BudgetLimits,
    pub online: bool,
    /// Steps allowed for closing one asserted lemma.
    pub subproof_steps: u32,
    pub listing_cap: usize,
    /// Consecutive rejections at one state before backing up a checkpoint.
    pub rollback_after: u32,
    pub sentence_timeout: Duration,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            budget: BudgetLimits::default(),
            online: true,
            subproof_steps: 15,
            listing_cap: library::DEFAULT_LISTING_CAP,
            rollback_after: 3,
            sentence_timeout: DEFAULT_SENTENCE_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsedLemma {
    pub name: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub task_id: String,
    pub used: Vec<UsedLemma>,
    pub offline_used: bool,
    pub online_used: bool,
}

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub transcript: ProofTranscript,
    pub library: LemmaLibrary,
    /// Library lemmas the certified artifact uses; empty unless proved.
    pub used: BTreeSet<String>,
    pub certification: Option<CertificationReport>,
    pub consumed_steps: u32,
    pub elapsed: Duration,
}

impl AgentRun {
    /// History lemmas count as offline knowledge.
    pub fn usage_summary(&self) -> UsageSummary {
        let used: Vec<UsedLemma> = self
            .used
            .iter()
            .filter_map(|n| self.library.get(n))
            .map(|l| UsedLemma { name: l.name.clone(), provenance: l.provenance })
            .collect();
        UsageSummary {
            task_id: self.transcript.task_id.clone(),
            offline_used: used.iter().any(|u| !u.provenance.is_online()),
            online_used: used.iter().any(|u| u.provenance.is_online()),
            used,
        }
    }
}

/// Preamble, the standalone library lemmas the proof uses (with their
/// dependencies, in library order), the goal statement and the proof.
/// Lemmas proved through `assert` already live inside the tactic script.
pub fn assemble_final_artifact(vc: &ProofTargetedVc, library: &LemmaLibrary, tactics: &[String]) -> String {
    let script = tactics.join("\n");
    let standalone: Vec<&HelperLemma> =
        library.entries().iter().filter(|l| !l.provenance.is_online()).collect();
    let mut needed = detect_lemma_usage(&script, standalone.iter().map(|l| l.name.as_str()));
    let mut stack: Vec<String> = needed.iter().cloned().collect();
    while let Some(n) = stack.pop() {
        if let Some(l) = library.get(&n) {
            for d in &l.depends_on {
                if library.get(d).is_some() && needed.insert(d.clone()) {
                    stack.push(d.clone());
                }
            }
        }
    }
    let mut file = vc.preamble_text.clone();
    for l in standalone.iter().filter(|l| needed.contains(&l.name)) {
        file.push_str(&l.render());
        file.push('\n');
    }
    file.push_str(&vc.statement_text);
    file.push_str("\nProof.\n");
    for t in tactics {
        file.push_str("  ");
        file.push_str(t.trim());
        file.push('\n');
    }
    file.push_str("Qed.\n");
    file
}

/// Tactic sentences of a model reply; `Proof.` and closers are dropped and a
/// missing final period is supplied.
pub fn parse_tactics(reply: &str) -> Vec<String> {
    let code = extract_code_block(reply).unwrap_or_else(|| reply.to_string());
    let Ok(sentences) = code_sentences(&code) else {
        return vec![code.trim().to_string()].into_iter().filter(|s| !s.is_empty()).collect();
    };
    sentences
        .into_iter()
        .filter(|s| !matches!(s.head().as_str(), "Proof" | "Qed" | "Defined"))
        .map(|s| {
            let t = s.text.trim().to_string();
            if s.terminated {
                t
            } else {
                format!("{t}.")
            }
        })
        .collect()
}

fn proof_tactics(proof: &str) -> Vec<String> {
    match code_sentences(proof) {
        Ok(s) if !s.iter().any(|s| crate::prover::certify::admissions_in(s) > 0) => s
            .into_iter()
            .filter(|s| s.terminated && !matches!(s.head().as_str(), "Proof" | "Qed" | "Defined" | "Admitted" | "Abort"))
            .map(|s| s.text.trim().to_string())
            .collect(),
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepResult {
    Accepted,
    Rejected,
    Done,
}

struct Pending {
    lemma: HelperLemma,
    provenance: Provenance,
    target: Option<String>,
    /// Goal count before the assertion; the obligation is closed once the
    /// count falls back to it.
    base_goals: usize,
    /// Session depth before the assertion.
    assert_depth: usize,
    steps: u32,
    tactics: Vec<String>,
}

struct Agent<'a> {
    llm: &'a LlmClient,
    factory: &'a dyn ProverFactory,
    cfg: AgentConfig,
    vc: ProofTargetedVc,
    session: Session,
    library: LemmaLibrary,
    plan: String,
    events: Vec<TranscriptEvent>,
    budget: Budget,
    base_depth: usize,
    feedback: Option<String>,
    last_error: Option<TacticError>,
    consecutive_rejections: u32,
    pending: Option<Pending>,
}

enum Halt {
    Outcome(Outcome),
    Abort(String),
}

impl From<SessionError> for Halt {
    fn from(e: SessionError) -> Self {
        Halt::Abort(format!("prover failure: {e}"))
    }
}

impl From<LlmError> for Halt {
    fn from(e: LlmError) -> Self {
        Halt::Abort(format!("model request failed: {e}"))
    }
}

impl<'a> Agent<'a> {
    fn note(&mut self, text: impl Into<String>) {
        self.events.push(TranscriptEvent::Note { text: text.into() });
    }

    fn tactics(&self) -> Vec<String> {
        self.session.accepted_sentences()[self.base_depth..].to_vec()
    }

    fn applied(&self) -> Vec<String> {
        std::iter::once("Proof.".to_string()).chain(self.tactics()).collect()
    }

    fn tick(&mut self) {
        self.events.push(TranscriptEvent::BudgetTick {
            consumed_steps: self.budget.consumed_steps,
            elapsed_ms: self.budget.elapsed().as_millis() as u64,
        });
    }

    fn library_names(&self) -> Vec<String> {
        self.library.names()
    }

    fn prompt(&self) -> Result<Vec<crate::llm::ChatMessage>, LlmError> {
        let goals = self.session.goals();
        let goals_text = if goals.is_empty() {
            "(none)".to_string()
        } else {
            goals.iter().enumerate().map(|(i, g)| format!("goal {}:\n{g}", i + 1)).collect::<Vec<_>>().join("\n\n")
        };
        let applied = self.applied().join(" ");
        let feedback = self.feedback.clone().unwrap_or_else(|| "(none)".into());
        let listing = self.library.listing();
        let hint = if self.cfg.online { TOOL_HINT } else { "" };
        render_prompt(
            TemplateId::AgentStep,
            &slots([
                ("statement", self.vc.statement_text.as_str()),
                ("applied_tactics", applied.as_str()),
                ("current_goals", goals_text.as_str()),
                ("feedback", feedback.as_str()),
                ("lemma_listing", listing.trim_end()),
                ("plan", self.plan.as_str()),
                ("tool_hint", hint),
            ]),
        )
    }

    /// Executes one charged tactic with all bookkeeping.
    fn run_tactic(&mut self, tactic: &str) -> Result<StepResult, Halt> {
        self.budget.consumed_steps += 1;
        let step = self.budget.consumed_steps;
        self.events.push(TranscriptEvent::TacticAttempt { step, tactic: tactic.to_string() });
        let result = self.session.exec(tactic)?;
        self.events.push(TranscriptEvent::ProverReply {
            accepted: result.is_accepted(),
            goals: result.goals_after.clone(),
            message: result.message.clone(),
        });
        let names = detect_lemma_usage(tactic, self.library_names().iter().map(String::as_str));
        let position = self.session.depth().saturating_sub(self.base_depth);
        for n in &names {
            self.library.record_application(n, result.is_accepted(), position);
        }
        let outcome = if result.is_accepted() {
            self.consecutive_rejections = 0;
            self.feedback = None;
            self.last_error = None;
            if let Some(p) = &mut self.pending {
                p.steps += 1;
                p.tactics.push(tactic.trim().to_string());
            }
            self.settle_pending()?;
            if self.session.goals().is_empty() && self.pending.is_none() {
                StepResult::Done
            } else {
                StepResult::Accepted
            }
        } else {
            let error = TacticError { tactic: tactic.trim().to_string(), message: result.message.clone() };
            self.feedback = Some(adapt::format_error_feedback(&error));
            self.last_error = Some(error);
            self.consecutive_rejections += 1;
            if let Some(p) = &mut self.pending {
                p.steps += 1;
            }
            self.settle_pending()?;
            if self.consecutive_rejections >= self.cfg.rollback_after {
                self.back_up()?;
            }
            StepResult::Rejected
        };
        self.tick();
        Ok(outcome)
    }

    fn rollback_to_depth(&mut self, depth: usize) -> Result<(), Halt> {
        let token = self.session.history()[depth];
        self.session.rollback(token)?;
        self.events.push(TranscriptEvent::Rollback { to_state: token.seq() });
        Ok(())
    }

    fn back_up(&mut self) -> Result<(), Halt> {
        self.consecutive_rejections = 0;
        let depth = self.session.depth();
        if depth <= self.base_depth {
            return Ok(());
        }
        if let Some(p) = &self.pending {
            if depth - 1 <= p.assert_depth {
                self.abandon_pending("repeated rejections right after the assertion")?;
                return Ok(());
            }
        }
        self.rollback_to_depth(depth - 1)?;
        if let Some(p) = &mut self.pending {
            p.tactics.pop();
        }
        Ok(())
    }

    /// Accepts a closed assertion or gives up one that ran out of steps.
    fn settle_pending(&mut self) -> Result<(), Halt> {
        let Some(p) = &self.pending else { return Ok(()) };
        if self.session.depth() > p.assert_depth + 1 && self.session.goals().len() <= p.base_goals {
            let p = self.pending.take().expect("pending");
            let mut lemma = p.lemma;
            lemma.proof = format!(
                "Proof.\n{}Qed.",
                p.tactics.iter().map(|t| format!("  {t}\n")).collect::<String>()
            );
            lemma.status = LemmaStatus::Checked;
            let provenance = p.provenance;
            if let Some(name) = self.library.add(lemma, provenance) {
                self.events.push(TranscriptEvent::LemmaAdded { name: name.clone(), provenance });
                self.feedback = Some(format!("The assertion {name} is proved and is now a hypothesis."));
            }
        } else if p.steps >= self.cfg.subproof_steps {
            self.abandon_pending("the assertion ran out of subproof steps")?;
        }
        Ok(())
    }

    fn abandon_pending(&mut self, reason: &str) -> Result<(), Halt> {
        let Some(p) = self.pending.take() else { return Ok(()) };
        self.rollback_to_depth(p.assert_depth)?;
        if let Some(t) = &p.target {
            self.library.mark_conflict(t);
        }
        let text = format!("Dropped the assertion {}: {reason}.", p.lemma.name);
        self.note(text.clone());
        self.feedback = Some(text);
        self.consecutive_rejections = 0;
        Ok(())
    }

    fn adaptation(&mut self, arguments: &serde_json::Value) -> Result<StepResult, Halt> {
        self.budget.consumed_steps += 1;
        let step = self.budget.consumed_steps;
        self.events.push(TranscriptEvent::ToolCall {
            step,
            name: ADAPT_TOOL.into(),
            arguments: arguments.clone(),
        });
        let request = AdaptationRequest {
            proof_state: ProofState {
                applied_tactics: self.applied(),
                open_goals: self.session.goals().to_vec(),
                last_error: self.last_error.clone(),
            },
            library_view: self.library.listing(),
        };
        let result = adapt_lemma(self.llm, &request, &self.library)?;
        let detail = match (&result.kind, &result.target, &result.lemma) {
            (AdaptationKind::ApplyExisting, Some(t), _) => format!("apply the existing lemma {t}"),
            (_, _, Some(l)) => format!("{} : {}", l.name, l.statement),
            _ => "no usable lemma".to_string(),
        };
        self.events.push(TranscriptEvent::ToolReply { kind: result.kind.label().into(), detail: detail.clone() });
        self.tick();
        self.feedback = Some(format!("{ADAPT_TOOL} ({}): {detail}", result.kind.label()));
        match result.kind {
            AdaptationKind::Refined | AdaptationKind::NewLemma if self.pending.is_some() => {
                self.feedback = Some(format!("{ADAPT_TOOL}: close the current assertion before adding another."));
                Ok(StepResult::Rejected)
            }
            AdaptationKind::Refined | AdaptationKind::NewLemma => self.insert_refinement(result),
            _ => Ok(StepResult::Rejected),
        }
    }

    /// Asserts the adapted lemma, then tries the proof that came with it.
    fn insert_refinement(&mut self, result: AdaptationResult) -> Result<StepResult, Halt> {
        let (Some(lemma), Some(insertion)) = (result.lemma, result.insertion) else {
            return Ok(StepResult::Rejected);
        };
        if self.budget.exhausted().is_some() {
            return Ok(StepResult::Rejected);
        }
        let base_goals = self.session.goals().len();
        let assert_depth = self.session.depth();
        let provenance =
            if result.kind == AdaptationKind::Refined { Provenance::OnlineRefined } else { Provenance::OnlineNew };
        let supplied = proof_tactics(&lemma.proof);
        self.pending = Some(Pending {
            lemma,
            provenance,
            target: result.target.clone(),
            base_goals,
            assert_depth,
            steps: 0,
            tactics: Vec::new(),
        });
        let outcome = self.run_tactic(&insertion)?;
        if outcome == StepResult::Rejected || self.session.depth() == assert_depth {
            // The statement itself was refused.
            if self.pending.take().is_some() {
                if let Some(t) = &result.target {
                    self.library.mark_conflict(t);
                }
            }
            return Ok(StepResult::Rejected);
        }
        if let Some(p) = &mut self.pending {
            // The assertion sentence is not part of the lemma's proof.
            p.tactics.clear();
            p.steps = 0;
        }
        let after_assert = assert_depth + 1;
        for t in supplied {
            if self.pending.is_none() || self.budget.exhausted().is_some() {
                break;
            }
            match self.run_tactic(&t)? {
                StepResult::Done => return Ok(StepResult::Done),
                StepResult::Accepted => {}
                StepResult::Rejected => {
                    if self.pending.is_some() && self.session.depth() > after_assert {
                        self.rollback_to_depth(after_assert)?;
                        if let Some(p) = &mut self.pending {
                            p.tactics.clear();
                        }
                    }
                    break;
                }
            }
        }
        Ok(StepResult::Accepted)
    }

    fn step(&mut self) -> Result<StepResult, Halt> {
        let tools = if self.cfg.online { vec![adapt_tool_descriptor()] } else { Vec::new() };
        let request = self.llm.request(self.prompt()?, tools);
        let reply = self.llm.complete(Phase::Agent, &request)?;
        if let Some(call) = reply.tool_call {
            if self.cfg.online && call.name == ADAPT_TOOL {
                return self.adaptation(&call.arguments);
            }
            self.budget.consumed_steps += 1;
            self.events.push(TranscriptEvent::ToolCall {
                step: self.budget.consumed_steps,
                name: call.name.clone(),
                arguments: call.arguments,
            });
            self.events.push(TranscriptEvent::ToolReply { kind: "none".into(), detail: "tool not available".into() });
            self.feedback = Some(format!("The tool {} is not available; reply with a tactic.", call.name));
            self.tick();
            return Ok(StepResult::Rejected);
        }
        let tactics = parse_tactics(reply.text.as_deref().unwrap_or(""));
        if tactics.is_empty() {
            self.budget.consumed_steps += 1;
            self.note("reply contained no tactic");
            self.feedback = Some("Your reply contained no tactic; reply with exactly one tactic.".into());
            self.tick();
            return Ok(StepResult::Rejected);
        }
        let mut last = StepResult::Rejected;
        for t in tactics {
            if self.budget.exhausted().is_some() {
                break;
            }
            last = self.run_tactic(&t)?;
            if last != StepResult::Accepted {
                break;
            }
        }
        Ok(last)
    }

    fn run(&mut self) -> Result<(), Halt> {
        loop {
            if let Some(o) = self.budget.exhausted() {
                return Err(Halt::Outcome(o));
            }
            if self.step()? == StepResult::Done {
                return Ok(());
            }
        }
    }
}

/// Loads library lemmas into the session one block at a time; a block the
/// prover refuses is rolled back and dropped.
fn load_library(session: &mut Session, library: &mut LemmaLibrary, events: &mut Vec<TranscriptEvent>) -> Result<(), SessionError> {
    for lemma in library.entries().to_vec() {
        let before = session.current_state();
        let mut refused = None;
        for s in code_sentences(&lemma.render())? {
            let r = session.exec(&s.text)?;
            if !r.is_accepted() {
                refused = Some(r.message);
                break;
            }
        }
        match refused {
            None => events.push(TranscriptEvent::LemmaAdded { name: lemma.name.clone(), provenance: lemma.provenance }),
            Some(msg) => {
                session.rollback(before)?;
                library.remove(&lemma.name);
                events.push(TranscriptEvent::Note { text: format!("lemma {} does not check here: {msg}", lemma.name) });
            }
        }
    }
    Ok(())
}

/// Proves the task's goal. `bundle` is `None` when offline synthesis is
/// disabled; `history` shares proved lemmas across tasks when given.
pub fn run_agent(
    llm: &LlmClient,
    factory: &dyn ProverFactory,
    task: &VerificationTask,
    bundle: Option<&OfflineBundle>,
    cfg: AgentConfig,
    history: Option<&SharedHistory>,
) -> Result<AgentRun, ModelError> {
    let vc = task.proof_targeted_vc()?;
    let budget = Budget::start(cfg.budget);
    let mut events = Vec::new();
    let mut library = LemmaLibrary::with_cap(cfg.listing_cap);
    if let Some(b) = bundle {
        for n in &b.notes {
            events.push(TranscriptEvent::Note { text: n.clone() });
        }
        for l in b.checked_lemmas() {
            library.add(l.clone(), Provenance::Offline);
        }
    }
    if let Some(h) = history {
        for l in h.lock().expect("history lock").iter() {
            if library.get(&l.name).is_none() {
                library.add(l.clone(), Provenance::History);
            }
        }
    }
    let plan = bundle
        .map(|b| {
            b.plan
                .steps
                .iter()
                .filter(|s| library.get(&s.lemma_name).is_some())
                .enumerate()
                .map(|(i, s)| format!("{}. {}: {}", i + 1, s.lemma_name, s.guidance))
                .collect::<Vec<_>>()
                .join("\n")
        })
        .unwrap_or_default();

    let aborted = |events: Vec<TranscriptEvent>, library: LemmaLibrary, budget: &Budget, why: String| {
        let mut events = events;
        events.push(TranscriptEvent::Note { text: why });
        AgentRun {
            transcript: ProofTranscript {
                task_id: task.task_id.clone(),
                events,
                outcome: Outcome::Aborted,
                final_script: None,
            },
            library,
            used: BTreeSet::new(),
            certification: None,
            consumed_steps: budget.consumed_steps,
            elapsed: budget.elapsed(),
        }
    };

    let mut session = match Session::start_with_timeout(factory, &vc.preamble_text, cfg.sentence_timeout) {
        Ok(s) => s,
        Err(e) => return Ok(aborted(events, library, &budget, format!("cannot start the prover: {e}"))),
    };
    let setup = (|| -> Result<Option<String>, SessionError> {
        load_library(&mut session, &mut library, &mut events)?;
        let r = session.exec(&vc.statement_text)?;
        if !r.is_accepted() {
            return Ok(Some(format!("goal statement rejected: {}", r.message)));
        }
        let r = session.exec("Proof.")?;
        if !r.is_accepted() {
            return Ok(Some(format!("`Proof.` rejected: {}", r.message)));
        }
        Ok(None)
    })();
    match setup {
        Ok(None) => {}
        Ok(Some(why)) => return Ok(aborted(events, library, &budget, why)),
        Err(e) => return Ok(aborted(events, library, &budget, format!("prover failure: {e}"))),
    }

    let base_depth = session.depth();
    let mut agent = Agent {
        llm,
        factory,
        cfg,
        vc,
        session,
        library,
        plan,
        events,
        budget,
        base_depth,
        feedback: None,
        last_error: None,
        consecutive_rejections: 0,
        pending: None,
    };
    let halt = if agent.session.goals().is_empty() { Ok(()) } else { agent.run() };

    let (outcome, final_script, certification, used) = match halt {
        Ok(()) => {
            let tactics = agent.tactics();
            let artifact = assemble_final_artifact(&agent.vc, &agent.library, &tactics);
            match certify_with_trusted_prefix(agent.factory, &agent.vc.preamble_text, &artifact) {
                Ok(report) if report.accepted => {
                    let used = detect_lemma_usage(&artifact, agent.library_names().iter().map(String::as_str));
                    (Outcome::Proved, Some(artifact), Some(report), used)
                }
                Ok(report) => {
                    agent.note(format!("final artifact failed certification: {report:?}"));
                    (Outcome::Aborted, None, Some(report), BTreeSet::new())
                }
                Err(e) => {
                    agent.note(format!("final certification failed: {e}"));
                    (Outcome::Aborted, None, None, BTreeSet::new())
                }
            }
        }
        Err(Halt::Outcome(o)) => (o, None, None, BTreeSet::new()),
        Err(Halt::Abort(why)) => {
            log::error!("{}: {why}", task.task_id);
            agent.note(why);
            (Outcome::Aborted, None, None, BTreeSet::new())
        }
    };

    if outcome == Outcome::Proved {
        if let Some(h) = history {
            let mut shared = h.lock().expect("history lock");
            for l in agent.library.entries() {
                if l.status == LemmaStatus::Checked && !shared.iter().any(|s| s.name == l.name) {
                    let mut copy = l.clone();
                    copy.provenance = Provenance::History;
                    shared.push(copy);
                }
            }
        }
    }

    Ok(AgentRun {
        transcript: ProofTranscript { task_id: task.task_id.clone(), events: agent.events, outcome, final_script },
        library: agent.library,
        used,
        certification,
        consumed_steps: agent.budget.consumed_steps,
        elapsed: agent.budget.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{queued_backend, ChatResponse};
    use crate::model::PropertyLocation;
    use crate::prover::mock::{MockFactory, MockScriptBuilder};
    use std::sync::Arc;

    fn task(goal: &str) -> VerificationTask {
        VerificationTask {
            task_id: "t".into(),
            property_name: "p".into(),
            property_location: PropertyLocation { file: "t.c".into(), line: 1 },
            annotated_source: "int f(void) { return 0; }\n".into(),
            goal_file: goal.into(),
        }
    }

    fn client(responses: Vec<ChatResponse>) -> LlmClient {
        LlmClient::new(Arc::new(queued_backend(responses)), "m")
    }

    #[test]
    fn trivial_goal_proved_in_one_step() {
        let goal = "Theorem t : True.\n";
        let mut b = MockScriptBuilder::new();
        b.accept_file(0, "Theorem t : True.\nProof.\n  exact I.\nQed.\n");
        let factory = MockFactory::new(b.finish());
        let llm = client(vec![ChatResponse::text("exact I.")]);
        let run = run_agent(&llm, &factory, &task(goal), None, AgentConfig::default(), None).unwrap();
        assert_eq!(run.transcript.outcome, Outcome::Proved);
        assert_eq!(run.consumed_steps, 1);
        assert_eq!(run.transcript.final_script.unwrap(), "Theorem t : True.\nProof.\n  exact I.\nQed.\n");
    }

    #[test]
    fn endless_failures_stop_at_step_limit() {
        let goal = "Theorem t : True.\n";
        let mut b = MockScriptBuilder::new();
        b.accept_file(0, "Theorem t : True.\nProof.\n  exact I.\nQed.\n");
        let factory = MockFactory::new(b.finish());
        let llm = LlmClient::new(
            Arc::new(crate::llm::ScriptedBackend::new(|_: &crate::llm::ChatRequest| Ok(ChatResponse::text("fail.")))),
            "m",
        );
        let run = run_agent(&llm, &factory, &task(goal), None, AgentConfig::default(), None).unwrap();
        assert_eq!(run.transcript.outcome, Outcome::ExhaustedSteps);
        assert_eq!(run.consumed_steps, 100);
    }

    #[test]
    fn tactic_parsing() {
        assert_eq!(parse_tactics("intros x. lia"), ["intros x.", "lia."]);
        assert_eq!(parse_tactics("```coq\nProof.\n  auto.\nQed.\n```"), ["auto."]);
        assert!(parse_tactics("").is_empty());
    }

    #[test]
    fn artifact_includes_used_lemmas_and_dependencies() {
        let vc = ProofTargetedVc::from_goal_file("Require Import ZArith.\nTheorem g : True.\n").unwrap();
        let mut lib = LemmaLibrary::new();
        for (name, deps) in [("A", vec![]), ("B", vec!["A"]), ("C", vec![])] {
            let mut l = HelperLemma::draft(name, "True", "Proof. exact I. Qed.");
            l.status = LemmaStatus::Checked;
            l.depends_on = deps.into_iter().map(String::from).collect();
            lib.add(l, Provenance::Offline);
        }
        let file = assemble_final_artifact(&vc, &lib, &["apply B.".to_string()]);
        assert!(file.starts_with("Require Import ZArith.\nLemma A :"));
        assert!(file.contains("Lemma B :"));
        assert!(!file.contains("Lemma C :"));
        assert!(file.ends_with("Theorem g : True.\nProof.\n  apply B.\nQed.\n"));
    }
}
