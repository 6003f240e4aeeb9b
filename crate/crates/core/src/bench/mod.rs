//! Benchmark harness: suite loading, a worker pool running the pipeline per
//! task, and the aggregated report.
//!
//! A suite is a directory with one subdirectory per task. Each holds a
//! `manifest.json` (see [`TaskManifest`]) and the files it names, and may add
//! `cassette.json` (model replies for this task), `mock-script.json` (a mock
//! prover for this task) and `bundle.json` (a precomputed offline bundle).

pub mod analytics;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_agent, AgentConfig, BudgetLimits, SharedHistory};
use crate::llm::cassette::ReplayBackend;
use crate::llm::LlmClient;
use crate::model::io::TaskManifest;
use crate::model::{Outcome, Provenance, ProofTranscript, TranscriptEvent, VerificationTask};
use crate::offline::{run_offline, OfflineBundle, OfflineOptions, DEFAULT_MAX_SOURCE_BYTES};
use crate::prover::mock::{MockFactory, MockScript};
use crate::prover::ProverFactory;

pub use analytics::{
    aggregate, annotation_at, bucket_complexity, categorize_lemma, classify_property, try_classify_property,
    BucketEdges, LemmaRecord, PropertyType, Quadrant, Quadrants, RunReport, TaskResult, UtilityCategory,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CASSETTE_FILE: &str = "cassette.json";
pub const MOCK_SCRIPT_FILE: &str = "mock-script.json";
pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read suite {path}: {source}")]
    Suite { path: String, source: std::io::Error },
    #[error("cannot write report to {path}: {source}")]
    Report { path: String, source: std::io::Error },
    #[error("bad benchmark config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub parallelism: usize,
    pub budget_steps: u32,
    pub budget_secs: f64,
    pub subproof_steps: u32,
    pub listing_cap: usize,
    pub sentence_timeout_secs: f64,
    pub no_online: bool,
    pub no_offline: bool,
    pub no_psa: bool,
    /// Lets later tasks see lemmas proved by earlier ones. Task order, and
    /// so the outcome, is only deterministic with `parallelism` 1.
    pub share_history: bool,
    pub complexity_edges: BucketEdges,
    pub max_source_bytes: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let agent = AgentConfig::default();
        BenchConfig {
            parallelism: 1,
            budget_steps: agent.budget.max_steps,
            budget_secs: agent.budget.max_wall.as_secs_f64(),
            subproof_steps: agent.subproof_steps,
            listing_cap: agent.listing_cap,
            sentence_timeout_secs: agent.sentence_timeout.as_secs_f64(),
            no_online: false,
            no_offline: false,
            no_psa: false,
            share_history: false,
            complexity_edges: BucketEdges::default(),
            max_source_bytes: DEFAULT_MAX_SOURCE_BYTES,
        }
    }
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let cfg: BenchConfig = serde_json::from_str(&text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.budget_secs > 0.0 && self.sentence_timeout_secs > 0.0) {
            return Err(BenchError::Config("time limits must be positive".into()));
        }
        Ok(())
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            budget: BudgetLimits {
                max_steps: self.budget_steps,
                max_wall: Duration::from_secs_f64(self.budget_secs),
            },
            online: !self.no_online,
            subproof_steps: self.subproof_steps,
            listing_cap: self.listing_cap,
            sentence_timeout: Duration::from_secs_f64(self.sentence_timeout_secs),
            ..AgentConfig::default()
        }
    }

    pub fn offline_options(&self) -> OfflineOptions {
        OfflineOptions { use_psa: !self.no_psa, max_source_bytes: self.max_source_bytes }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteTask {
    pub dir: PathBuf,
    pub manifest: TaskManifest,
    pub task: VerificationTask,
    pub property_type: PropertyType,
    pub term_count: u64,
    pub cassette: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
}

impl SuiteTask {
    pub fn load(dir: &Path) -> Result<Self, String> {
        let (manifest, task) = TaskManifest::load(&dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
        let property_type = match &manifest.property_type {
            Some(s) => PropertyType::parse(s).ok_or_else(|| format!("unknown property type {s:?}"))?,
            None => classify_property(annotation_at(&task.annotated_source, task.property_location.line)),
        };
        let term_count = task.proof_targeted_vc().map_err(|e| e.to_string())?.term_count;
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
        Ok(SuiteTask {
            dir: dir.to_path_buf(),
            property_type,
            term_count,
            cassette: optional(CASSETTE_FILE),
            mock_script: optional(MOCK_SCRIPT_FILE),
            bundle: optional(BUNDLE_FILE),
            manifest,
            task,
        })
    }

    pub fn id(&self) -> &str {
        &self.task.task_id
    }
}

/// A task directory that could not be loaded; it is reported as aborted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadFailure {
    pub task_id: String,
    pub error: String,
}

pub type SuiteEntry = Result<SuiteTask, LoadFailure>;

/// Task subdirectories in name order.
pub fn load_suite(dir: &Path) -> Result<Vec<SuiteEntry>, BenchError> {
    let err = |source| BenchError::Suite { path: dir.display().to_string(), source };
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs
        .iter()
        .map(|d| {
            SuiteTask::load(d).map_err(|error| LoadFailure {
                task_id: d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                error,
            })
        })
        .collect())
}

/// Supplies the model client and prover for each task.
pub trait TaskEnvironment: Sync {
    fn llm(&self, task: &SuiteTask) -> Result<LlmClient, String>;
    fn prover(&self, task: &SuiteTask) -> Result<Arc<dyn ProverFactory>, String>;
}

/// Per-task `cassette.json` and `mock-script.json` win over the defaults.
#[derive(Clone, Default)]
pub struct SuiteEnvironment {
    pub llm: Option<LlmClient>,
    pub prover: Option<Arc<dyn ProverFactory>>,
    pub model_id: String,
}

impl TaskEnvironment for SuiteEnvironment {
    fn llm(&self, task: &SuiteTask) -> Result<LlmClient, String> {
        match (&task.cassette, &self.llm) {
            (Some(path), _) => {
                let backend = ReplayBackend::load(path).map_err(|e| e.to_string())?;
                let model = if self.model_id.is_empty() { "replay" } else { &self.model_id };
                Ok(LlmClient::new(Arc::new(backend), model))
            }
            (None, Some(llm)) => Ok(llm.fork()),
            (None, None) => Err("no cassette and no model backend configured".into()),
        }
    }

    fn prover(&self, task: &SuiteTask) -> Result<Arc<dyn ProverFactory>, String> {
        match (&task.mock_script, &self.prover) {
            (Some(path), _) => Ok(Arc::new(MockFactory::new(MockScript::load(path).map_err(|e| e.to_string())?))),
            (None, Some(p)) => Ok(p.clone()),
            (None, None) => Err("no mock script and no prover configured".into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub offline_ms: u64,
    pub agent_ms: u64,
    pub wall_ms: u64,
}

/// Wall-clock data kept out of the deterministic report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub parallelism: usize,
    pub tasks: BTreeMap<String, TaskTiming>,
}

#[derive(Debug, Clone)]
pub struct TaskArtifacts {
    pub transcript: ProofTranscript,
    pub bundle: Option<OfflineBundle>,
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: RunReport,
    pub metadata: RunMetadata,
    pub artifacts: BTreeMap<String, TaskArtifacts>,
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn failed(task_id: &str, property_type: PropertyType, term_count: u64, error: String) -> TaskResult {
    TaskResult {
        task_id: task_id.to_string(),
        property_type,
        source_suite: None,
        term_count,
        complexity_bucket: String::new(),
        outcome: Outcome::Aborted,
        consumed_steps: 0,
        offline_drafts: 0,
        offline_checked: 0,
        discovered: Vec::new(),
        used: Vec::new(),
        quadrant: None,
        error: Some(error),
        usage: BTreeMap::new(),
        strategy: None,
    }
}

type Finished = (TaskResult, TaskTiming, Option<TaskArtifacts>);

fn run_task(t: &SuiteTask, cfg: &BenchConfig, env: &dyn TaskEnvironment, history: Option<&SharedHistory>) -> Finished {
    let started = Instant::now();
    let mut timing = TaskTiming::default();
    let mut result = failed(t.id(), t.property_type, t.term_count, String::new());
    result.error = None;
    result.source_suite = t.manifest.source_suite.clone();
    let setup = env.llm(t).and_then(|llm| env.prover(t).map(|p| (llm, p)));
    let (llm, factory) = match setup {
        Ok(x) => x,
        Err(e) => {
            result.outcome = Outcome::Aborted;
            result.error = Some(e);
            timing.wall_ms = started.elapsed().as_millis() as u64;
            return (result, timing, None);
        }
    };

    let mut errors = Vec::new();
    let bundle = if cfg.no_offline {
        None
    } else if let Some(path) = &t.bundle {
        OfflineBundle::load(path).map_err(|e| errors.push(format!("bundle: {e}"))).ok()
    } else {
        let offline_started = Instant::now();
        let b = run_offline(&llm, factory.as_ref(), &t.task, cfg.offline_options())
            .map_err(|e| errors.push(format!("offline phase: {e}")))
            .ok();
        timing.offline_ms = offline_started.elapsed().as_millis() as u64;
        b
    };
    if let Some(b) = &bundle {
        result.offline_drafts = b.lemmas.len();
        result.offline_checked = b.checked_lemmas().count();
        result.discovered.extend(b.checked_lemmas().map(|l| LemmaRecord::new(&l.name, Provenance::Offline)));
    }

    let agent_started = Instant::now();
    let run = run_agent(&llm, factory.as_ref(), &t.task, bundle.as_ref(), cfg.agent_config(), history);
    timing.agent_ms = agent_started.elapsed().as_millis() as u64;
    let artifacts = match run {
        Ok(run) => {
            result.outcome = run.transcript.outcome;
            result.consumed_steps = run.consumed_steps;
            result.discovered.extend(
                run.library
                    .entries()
                    .iter()
                    .filter(|l| l.provenance.is_online())
                    .map(|l| LemmaRecord::new(&l.name, l.provenance)),
            );
            result.used =
                run.usage_summary().used.iter().map(|u| LemmaRecord::new(&u.name, u.provenance)).collect();
            if result.outcome == Outcome::Aborted {
                if let Some(TranscriptEvent::Note { text }) =
                    run.transcript.events.iter().rev().find(|e| matches!(e, TranscriptEvent::Note { .. }))
                {
                    errors.push(text.clone());
                }
            }
            Some(TaskArtifacts { transcript: run.transcript, bundle })
        }
        Err(e) => {
            result.outcome = Outcome::Aborted;
            errors.push(e.to_string());
            None
        }
    };
    result.usage = llm.usage();
    if !errors.is_empty() {
        result.error = Some(errors.join("; "));
    }
    timing.wall_ms = started.elapsed().as_millis() as u64;
    (result, timing, artifacts)
}

/// Runs every task on a pool of `cfg.parallelism` workers. A task that fails
/// to load, set up or run, or that panics, is recorded as aborted.
pub fn run_benchmark(tasks: &[SuiteEntry], cfg: &BenchConfig, env: &dyn TaskEnvironment) -> BenchRun {
    let started_unix_ms = unix_ms();
    let history: Option<SharedHistory> = cfg.share_history.then(SharedHistory::default);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Finished>>> = Mutex::new(vec![None; tasks.len()]);
    let workers = cfg.parallelism.clamp(1, tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = tasks.get(i) else { break };
                let finished = match entry {
                    Err(f) => (failed(&f.task_id, PropertyType::Contract, 0, f.error.clone()), TaskTiming::default(), None),
                    Ok(t) => catch_unwind(AssertUnwindSafe(|| run_task(t, cfg, env, history.as_ref())))
                        .unwrap_or_else(|panic| {
                            let why = panic
                                .downcast_ref::<String>()
                                .cloned()
                                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                                .unwrap_or_else(|| "unknown panic".into());
                            log::error!("task {} panicked: {why}", t.id());
                            (
                                failed(t.id(), t.property_type, t.term_count, format!("panic: {why}")),
                                TaskTiming::default(),
                                None,
                            )
                        }),
                };
                log::info!("{}: {}", finished.0.task_id, finished.0.outcome.label());
                slots.lock().expect("result lock")[i] = Some(finished);
            });
        }
    });

    let mut results = Vec::with_capacity(tasks.len());
    let mut metadata = RunMetadata { started_unix_ms, parallelism: workers, ..Default::default() };
    let mut artifacts = BTreeMap::new();
    for (result, timing, art) in slots.into_inner().expect("result lock").into_iter().flatten() {
        metadata.tasks.insert(result.task_id.clone(), timing);
        if let Some(a) = art {
            artifacts.insert(result.task_id.clone(), a);
        }
        results.push(result);
    }
    metadata.finished_unix_ms = unix_ms();
    BenchRun { report: aggregate(results, &cfg.complexity_edges), metadata, artifacts }
}

fn safe_file_name(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Writes `report.json`, `report.txt`, `metadata.json` and per-task
/// transcripts, bundles and certified artifacts under `tasks/`.
pub fn write_report(dir: &Path, run: &BenchRun) -> Result<(), BenchError> {
    let write = |path: PathBuf, text: &str| {
        fs::write(&path, text).map_err(|source| BenchError::Report { path: path.display().to_string(), source })
    };
    let tasks_dir = dir.join("tasks");
    fs::create_dir_all(&tasks_dir)
        .map_err(|source| BenchError::Report { path: tasks_dir.display().to_string(), source })?;
    write(dir.join("report.json"), &run.report.to_json())?;
    write(dir.join("report.txt"), &run.report.render_text())?;
    write(dir.join("metadata.json"), &(serde_json::to_string_pretty(&run.metadata).expect("serializable") + "\n"))?;
    for (id, a) in &run.artifacts {
        let stem = safe_file_name(id);
        write(tasks_dir.join(format!("{stem}.transcript.jsonl")), &a.transcript.to_jsonl())?;
        if let Some(b) = &a.bundle {
            write(tasks_dir.join(format!("{stem}.bundle.json")), &b.to_json())?;
        }
        if let Some(v) = &a.transcript.final_script {
            write(tasks_dir.join(format!("{stem}.v")), v)?;
        }
    }
    Ok(())
}
