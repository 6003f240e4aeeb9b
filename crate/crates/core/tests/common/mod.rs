//! Shared fixture machinery: a recording prover that answers from a
//! declarative world description, a scripted model keyed on prompt kind, and
//! the hex2bin golden scenario.
#![allow(dead_code)]

pub mod catalog;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use lemmata::agent::{run_agent, AgentConfig, AgentRun};
use lemmata::llm::cassette::{Cassette, RecordingBackend};
use lemmata::llm::{ChatBackend, ChatRequest, ChatResponse, LlmClient, LlmError, Role};
use lemmata::model::lemma_blocks::{is_proof_closer, is_theorem_sentence, parse_declaration};
use lemmata::model::lexer::normalize;
use lemmata::model::sentence::code_sentences;
use lemmata::model::{PropertyLocation, VerificationTask};
use lemmata::offline::{run_offline, OfflineBundle, OfflineOptions};
use lemmata::prover::mock::{MockFactory, MockScript, MockScriptBuilder};
use lemmata::prover::{BackendKind, BackendReply, ProverBackend, ProverFactory, SessionError};

pub const MODEL_ID: &str = "replay";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn hex2bin_dir() -> PathBuf {
    fixtures().join("golden").join("hex2bin")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Goals(Vec<String>),
    Reject(String),
}

impl Reply {
    pub fn goals(goals: &[&str]) -> Reply {
        Reply::Goals(goals.iter().map(|g| g.to_string()).collect())
    }
}

/// How the prover behaves. Inside the proof of `statement`, tactics are
/// looked up by the tactics accepted before them; elsewhere every sentence is
/// accepted with goals derived from the file structure unless listed in
/// `reject_elsewhere`.
#[derive(Debug, Clone, Default)]
pub struct World {
    statement: String,
    proof: HashMap<(Vec<String>, String), Reply>,
    reject_elsewhere: HashMap<String, String>,
    pub delay_ms: u64,
}

pub const NO_REPLY: &str = "Error: No such goal.";

impl World {
    pub fn new(statement: &str) -> Self {
        World { statement: normalize(statement), ..Default::default() }
    }

    pub fn on(&mut self, prefix: &[&str], tactic: &str, reply: Reply) -> &mut Self {
        let prefix = prefix.iter().map(|t| normalize(t)).collect();
        self.proof.insert((prefix, normalize(tactic)), reply);
        self
    }

    /// Records a linear proof; rejected tactics do not extend the prefix.
    pub fn linear(&mut self, steps: &[(&str, Reply)]) -> &mut Self {
        let mut prefix: Vec<String> = Vec::new();
        for (tactic, reply) in steps {
            let p: Vec<&str> = prefix.iter().map(String::as_str).collect();
            self.on(&p, tactic, reply.clone());
            if matches!(reply, Reply::Goals(_)) {
                prefix.push(tactic.to_string());
            }
        }
        self
    }

    pub fn reject_elsewhere(&mut self, sentence: &str, message: &str) -> &mut Self {
        self.reject_elsewhere.insert(normalize(sentence), message.to_string());
        self
    }

    fn decide(&self, history: &[String], goals: &[String], sentence: &str) -> Reply {
        let n = normalize(sentence);
        if let Some(p) = history.iter().position(|h| *h == self.statement) {
            if history.get(p + 1).map(String::as_str) == Some("Proof.") {
                let prefix = history[p + 2..].to_vec();
                if goals.is_empty() && is_closer(&n) {
                    return Reply::Goals(Vec::new());
                }
                return self.proof.get(&(prefix, n)).cloned().unwrap_or_else(|| Reply::Reject(NO_REPLY.into()));
            }
            if history.len() == p + 1 && n == "Proof." {
                return Reply::Goals(goals.to_vec());
            }
        }
        if let Some(msg) = self.reject_elsewhere.get(&n) {
            return Reply::Reject(msg.clone());
        }
        let Some(s) = code_sentences(sentence).ok().and_then(|s| s.into_iter().next()) else {
            return Reply::Reject("Syntax error.".into());
        };
        if is_theorem_sentence(&s) {
            Reply::Goals(parse_declaration(&s.code()).map(|d| vec![d.1]).unwrap_or_default())
        } else if is_proof_closer(&s) {
            Reply::Goals(Vec::new())
        } else {
            Reply::Goals(goals.to_vec())
        }
    }
}

fn is_closer(n: &str) -> bool {
    matches!(n, "Qed." | "Defined.")
}

/// A prover driven by a [`World`] that writes everything it is asked into
/// a mock script.
pub struct RecordingProver {
    world: Arc<World>,
    builder: Arc<Mutex<MockScriptBuilder>>,
}

impl RecordingProver {
    pub fn new(world: World) -> Self {
        let builder = MockScriptBuilder::new().sentence_delay_ms(world.delay_ms);
        RecordingProver { world: Arc::new(world), builder: Arc::new(Mutex::new(builder)) }
    }

    pub fn script(&self) -> MockScript {
        self.builder.lock().unwrap().clone().finish()
    }
}

impl ProverFactory for RecordingProver {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn spawn(&self) -> Result<Box<dyn ProverBackend>, SessionError> {
        Ok(Box::new(RecordingBackendProver {
            world: self.world.clone(),
            builder: self.builder.clone(),
            states: vec![0],
            history: Vec::new(),
            goals: vec![Vec::new()],
        }))
    }
}

struct RecordingBackendProver {
    world: Arc<World>,
    builder: Arc<Mutex<MockScriptBuilder>>,
    states: Vec<u32>,
    history: Vec<String>,
    goals: Vec<Vec<String>>,
}

impl ProverBackend for RecordingBackendProver {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn exec(&mut self, sentence: &str, _timeout: Duration) -> Result<BackendReply, SessionError> {
        let here = *self.states.last().unwrap();
        let goals = self.goals.last().unwrap().clone();
        let mut b = self.builder.lock().unwrap();
        match self.world.decide(&self.history, &goals, sentence) {
            Reply::Goals(g) => {
                let to = b.accept_with(here, sentence, g.clone(), "");
                self.states.push(to);
                self.history.push(normalize(sentence));
                self.goals.push(g.clone());
                Ok(BackendReply::Accepted { goals: g, message: String::new() })
            }
            Reply::Reject(message) => {
                b.reject(here, sentence, &message);
                Ok(BackendReply::Rejected { message })
            }
        }
    }

    fn rollback(&mut self, depth: usize, _history: &[String]) -> Result<(), SessionError> {
        self.states.truncate(depth + 1);
        self.history.truncate(depth);
        self.goals.truncate(depth + 1);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Psa,
    Synthesis,
    Adaptation,
    AgentStep,
}

pub fn prompt_kind(request: &ChatRequest) -> Option<PromptKind> {
    let user = request.messages.iter().find(|m| m.role == Role::User)?;
    let t = user.content.as_str();
    if t.starts_with("Your task is to analyze") {
        Some(PromptKind::Psa)
    } else if t.starts_with("Here is a lemma that") || t.starts_with("Analyze the following goal") {
        Some(PromptKind::Synthesis)
    } else if t.starts_with("Here is the current proof state") {
        Some(PromptKind::Adaptation)
    } else if t.starts_with("You are proving the goal") {
        Some(PromptKind::AgentStep)
    } else {
        None
    }
}

/// Model replies by prompt kind, served in order; the last reply of a kind
/// repeats once its queue runs dry.
#[derive(Debug, Clone, Default)]
pub struct Replies {
    pub psa: Vec<ChatResponse>,
    pub synthesis: Vec<ChatResponse>,
    pub adaptation: Vec<ChatResponse>,
    pub agent: Vec<ChatResponse>,
}

pub struct ScriptedModel {
    replies: Mutex<(Replies, HashMap<u8, usize>)>,
}

impl ScriptedModel {
    pub fn new(replies: Replies) -> Self {
        ScriptedModel { replies: Mutex::new((replies, HashMap::new())) }
    }
}

impl ChatBackend for ScriptedModel {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let kind = prompt_kind(request).ok_or_else(|| LlmError::Precondition("unrecognised prompt".into()))?;
        let mut guard = self.replies.lock().unwrap();
        let (replies, counters) = &mut *guard;
        let (key, queue) = match kind {
            PromptKind::Psa => (0, &replies.psa),
            PromptKind::Synthesis => (1, &replies.synthesis),
            PromptKind::Adaptation => (2, &replies.adaptation),
            PromptKind::AgentStep => (3, &replies.agent),
        };
        let i = counters.entry(key).or_insert(0);
        let reply = queue
            .get(*i)
            .or(queue.last())
            .cloned()
            .ok_or_else(|| LlmError::Precondition(format!("no scripted reply for {kind:?}")))?;
        *i += 1;
        Ok(reply)
    }
}

pub fn text(s: &str) -> ChatResponse {
    ChatResponse::text(s).with_usage(s.len() as u64 / 4 + 50, s.len() as u64 / 4 + 1)
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub task: VerificationTask,
    pub world: World,
    pub replies: Replies,
    /// Recorded property type for the manifest; classified when absent.
    pub property_type: Option<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    pub no_offline: bool,
    pub no_online: bool,
    pub no_psa: bool,
}

impl Flags {
    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig { online: !self.no_online, ..AgentConfig::default() }
    }
}

pub struct Recording {
    pub cassette: Cassette,
    pub script: MockScript,
    pub bundle: Option<OfflineBundle>,
    pub run: AgentRun,
    pub requests: Vec<ChatRequest>,
}

/// Runs the full pipeline against the scenario and keeps what it produced.
pub fn record(scenario: &Scenario, flags: Flags, cfg: AgentConfig) -> Recording {
    let prover = RecordingProver::new(scenario.world.clone());
    let recorder = Arc::new(RecordingBackend::new(Arc::new(ScriptedModel::new(scenario.replies.clone())), None));
    let llm = LlmClient::new(recorder.clone(), MODEL_ID);
    let bundle = (!flags.no_offline).then(|| {
        run_offline(&llm, &prover, &scenario.task, OfflineOptions { use_psa: !flags.no_psa, ..Default::default() })
            .expect("offline phase")
    });
    let cfg = AgentConfig { online: !flags.no_online, ..cfg };
    let run = run_agent(&llm, &prover, &scenario.task, bundle.as_ref(), cfg, None).expect("agent run");
    Recording { cassette: recorder.cassette(), script: prover.script(), bundle, run, requests: llm.request_log() }
}

pub fn replay_client(cassette: &Cassette) -> LlmClient {
    let backend = lemmata::llm::cassette::ReplayBackend::new(cassette.clone());
    LlmClient::new(Arc::new(backend), MODEL_ID)
}

pub fn mock(script: &MockScript) -> MockFactory {
    MockFactory::new(script.clone())
}

/// Writes a suite task directory for the scenario, with the recorded
/// cassette and prover script.
pub fn write_task_dir(dir: &Path, scenario: &Scenario, recording: &Recording) {
    write_task_files(dir, scenario);
    fs::write(dir.join("cassette.json"), recording.cassette.to_json()).unwrap();
    fs::write(dir.join("mock-script.json"), recording.script.to_json()).unwrap();
}

/// Writes the source, goal and manifest of a suite task.
pub fn write_task_files(dir: &Path, scenario: &Scenario) {
    fs::create_dir_all(dir).unwrap();
    let t = &scenario.task;
    let source = Path::new(&t.property_location.file).file_name().unwrap().to_str().unwrap().to_string();
    fs::write(dir.join(&source), &t.annotated_source).unwrap();
    fs::write(dir.join("goal.v"), &t.goal_file).unwrap();
    let mut manifest = serde_json::json!({
        "schema": "lemmata.task/1",
        "task_id": t.task_id,
        "property_name": t.property_name,
        "property_location": t.property_location,
        "source": source,
        "goal": "goal.v",
    });
    if let Some(p) = scenario.property_type {
        manifest["property_type"] = p.into();
    }
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
}

// ---------------------------------------------------------------------------
// hex2bin

pub const HEX2BIN_TACTICS: [&str; 6] = [
    "intros a_src a_osrc a_dst i_count i_ocount i_hi i_lo H1 H2 H3 H4 H5 H6 H7 H8 Hsrc.",
    "apply (HL2_addr_le_same_base a_osrc a_src).",
    "exact Hsrc.",
    "apply (HL2_addr_le_same_base a_src (shift a_src 1)).",
    "apply HL1_addr_le_shift_same_base; lia.",
    "apply HL1_addr_le_shift_same_base; lia.",
];

pub const HEX2BIN_LEMMAS: [&str; 2] = ["HL1_addr_le_shift_same_base", "HL2_addr_le_same_base"];

const HEX2BIN_CONTEXT: &str = "\
a_src, a_osrc, a_dst : addr
i_count, i_ocount, i_hi, i_lo : Z
H1 : is_uint64 i_count
H2 : is_uint64 i_ocount
H3 : is_sint32 i_hi
H4 : is_sint32 i_lo
H5 : i_count <> 0
H6 : i_count <= i_ocount
H7 : 0 <= i_hi
H8 : 0 <= i_lo
Hsrc : addr_le a_osrc a_src
============================
";

pub fn in_context(conclusion: &str) -> String {
    format!("{HEX2BIN_CONTEXT}{conclusion}")
}

pub fn read_fixture(name: &str) -> String {
    fs::read_to_string(hex2bin_dir().join(name)).unwrap()
}

pub fn hex2bin_task() -> VerificationTask {
    VerificationTask {
        task_id: "hex2bin".into(),
        property_name: "hex2bin_loop_invariant_2".into(),
        property_location: PropertyLocation { file: "hex2bin.c".into(), line: 14 },
        annotated_source: read_fixture("hex2bin.c"),
        goal_file: read_fixture("hex2bin_goal.v"),
    }
}

pub fn hex2bin_synthesis_reply() -> String {
    format!(
        "Here are the helper lemmas:\n```coq\n{}```\n\nPlan:\n\
         1. HL2_addr_le_same_base: split osrc <= src + 2 at src, then at src + 1, by transitivity.\n\
         2. HL1_addr_le_shift_same_base: close each single step src <= src + 1, with lia for 0 <= 1.\n",
        read_fixture("helper_lemmas.v")
    )
}

pub fn hex2bin_scenario() -> Scenario {
    let task = hex2bin_task();
    let vc = task.proof_targeted_vc().unwrap();
    let mut world = World::new(&vc.statement_text);
    let g0 = in_context("addr_le a_osrc (shift (shift a_src 1) 1)");
    let g_src = in_context("addr_le a_osrc a_src");
    let g1 = in_context("addr_le a_src (shift (shift a_src 1) 1)");
    let g_step1 = in_context("addr_le a_src (shift a_src 1)");
    let g_step2 = in_context("addr_le (shift a_src 1) (shift (shift a_src 1) 1)");
    let t = HEX2BIN_TACTICS;
    world.linear(&[
        (t[0], Reply::Goals(vec![g0])),
        (t[1], Reply::Goals(vec![g_src, g1.clone()])),
        (t[2], Reply::Goals(vec![g1])),
        (t[3], Reply::Goals(vec![g_step1, g_step2.clone()])),
        (t[4], Reply::Goals(vec![g_step2])),
        (t[5], Reply::Goals(Vec::new())),
    ]);
    let replies = Replies {
        psa: vec![text(&format!("Here is the Coq file:\n```coq\n{}```\n", read_fixture("phi_a.v")))],
        synthesis: vec![text(&hex2bin_synthesis_reply())],
        adaptation: vec![text("APPLY HL2_addr_le_same_base")],
        agent: vec![
            text(&format!("```coq\n{}\n```", t[0])),
            text(t[1]),
            text(t[2]),
            text(&format!("Split the remaining step at src + 1.\n```coq\n{}\n```", t[3])),
            text(t[4]),
            text(t[5]),
        ],
    };
    Scenario { task, world, replies, property_type: None }
}

pub fn record_hex2bin() -> Recording {
    record(&hex2bin_scenario(), Flags::default(), AgentConfig::default())
}

// ---------------------------------------------------------------------------
// small synthetic tasks

pub const TINY_SOURCE: &str = "int f(int x)\n{\n  //@ assert x == x;\n  return x;\n}\n";

pub fn tiny_task(id: &str, goal_statement: &str, annotation: &str) -> VerificationTask {
    let source = format!("int f(int x)\n{{\n  {annotation}\n  return x;\n}}\n");
    VerificationTask {
        task_id: id.into(),
        property_name: format!("{id}_property"),
        property_location: PropertyLocation { file: format!("{id}.c"), line: 3 },
        annotated_source: source,
        goal_file: format!("Require Import ZArith.\nRequire Import Lia.\nOpen Scope Z_scope.\n\n{goal_statement}\nProof.\nAdmitted.\n"),
    }
}

pub fn lemma_reply(lemmas: &[(&str, &str)]) -> ChatResponse {
    let mut code = String::new();
    let mut plan = String::from("Plan:\n");
    for (i, (name, stmt)) in lemmas.iter().enumerate() {
        code.push_str(&format!("Lemma {name} : {stmt}.\nProof.\n  intros; lia.\nQed.\n\n"));
        plan.push_str(&format!("{}. {name}: apply it to the goal.\n", i + 1));
    }
    text(&format!("```coq\n{code}```\n{plan}"))
}

pub fn psa_reply(name: &str) -> ChatResponse {
    text(&format!(
        "```coq\nRequire Import ZArith.\nOpen Scope Z_scope.\n\nLemma {name} : forall x : Z, x = x.\nProof.\n  reflexivity.\nQed.\n```"
    ))
}
