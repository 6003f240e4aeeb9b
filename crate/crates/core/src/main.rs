use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lemmata::agent::{run_agent, AgentConfig, BudgetLimits};
use lemmata::bench::{load_suite, run_benchmark, write_report, BenchConfig, SuiteEnvironment};
use lemmata::llm::cassette::{RecordingBackend, ReplayBackend};
use lemmata::llm::live::{LiveBackend, LlmConfig};
use lemmata::llm::{ChatBackend, LlmClient};
use lemmata::model::io::TaskManifest;
use lemmata::model::{Outcome, ProofTargetedVc};
use lemmata::offline::{run_offline, OfflineBundle, OfflineOptions};
use lemmata::prover::coqtop::CoqtopFactory;
use lemmata::prover::mock::{MockFactory, MockScript};
use lemmata::prover::{certify_with_trusted_prefix, ProverFactory};

#[derive(Parser)]
#[command(name = "lemmata", version, about = "Prove verification conditions with synthesized helper lemmas")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProverChoice {
    Real,
    Mock,
}

#[derive(Args)]
struct Global {
    /// Prover backend.
    #[arg(long, value_enum, default_value = "real", global = true)]
    prover: ProverChoice,
    /// Mock prover script (with --prover mock).
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    /// coqtop executable; defaults to $LEMMATA_COQTOP or `coqtop`.
    #[arg(long, global = true)]
    coqtop: Option<PathBuf>,
    /// Replay model replies from this cassette instead of calling a model.
    #[arg(long, global = true, conflicts_with = "llm_config")]
    cassette: Option<PathBuf>,
    /// Live model endpoint configuration (JSON).
    #[arg(long, global = true)]
    llm_config: Option<PathBuf>,
    /// Record live exchanges to this cassette.
    #[arg(long, global = true, requires = "llm_config")]
    record: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline phase and write a lemma bundle.
    SynthesizeOffline {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip semantic analysis; synthesize from the goal alone.
        #[arg(long)]
        no_psa: bool,
    },
    /// Prove one task.
    Prove(ProveArgs),
    /// Run a suite of tasks and write reports.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Check a proof file; with --goal, its preamble is trusted.
    Certify {
        file: PathBuf,
        #[arg(long)]
        goal: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ProveArgs {
    #[arg(long)]
    task: PathBuf,
    /// Offline bundle; the offline phase runs first when omitted.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    no_online: bool,
    #[arg(long)]
    no_offline: bool,
    #[arg(long)]
    no_psa: bool,
    #[arg(long, default_value_t = 100)]
    budget_steps: u32,
    #[arg(long, default_value_t = 600)]
    budget_secs: u64,
    /// Output directory for the artifact, transcript and usage summary.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Global {
    fn backend(&self) -> Result<Option<Arc<dyn ChatBackend>>> {
        if let Some(path) = &self.cassette {
            return Ok(Some(Arc::new(ReplayBackend::load(path)?)));
        }
        let Some(path) = &self.llm_config else { return Ok(None) };
        let live: Arc<dyn ChatBackend> = Arc::new(LiveBackend::new(LlmConfig::load(path)?)?);
        Ok(Some(match &self.record {
            Some(out) => Arc::new(RecordingBackend::new(live, Some(out.clone()))),
            None => live,
        }))
    }

    fn model_id(&self) -> Result<String> {
        match &self.llm_config {
            Some(path) => Ok(LlmConfig::load(path)?.model_id),
            None => Ok("replay".into()),
        }
    }

    fn llm(&self) -> Result<Option<LlmClient>> {
        let Some(backend) = self.backend()? else { return Ok(None) };
        let mut client = LlmClient::new(backend, self.model_id()?);
        if let Some(path) = &self.llm_config {
            client.temperature = LlmConfig::load(path)?.temperature;
        }
        Ok(Some(client))
    }

    fn require_llm(&self) -> Result<LlmClient> {
        self.llm()?.context("a model is needed: pass --cassette or --llm-config")
    }

    fn prover(&self) -> Result<Option<Arc<dyn ProverFactory>>> {
        match self.prover {
            ProverChoice::Mock => match &self.mock_script {
                Some(path) => Ok(Some(Arc::new(MockFactory::new(MockScript::load(path)?)))),
                None => Ok(None),
            },
            ProverChoice::Real => {
                let f = match &self.coqtop {
                    Some(p) => CoqtopFactory::new(p),
                    None => CoqtopFactory::from_env(),
                };
                Ok(Some(Arc::new(f)))
            }
        }
    }

    fn require_prover(&self) -> Result<Arc<dyn ProverFactory>> {
        self.prover()?.context("--prover mock needs --mock-script")
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prove(global: &Global, args: &ProveArgs) -> Result<ExitCode> {
    let (_, task) = TaskManifest::load(&args.task)?;
    let llm = global.require_llm()?;
    let factory = global.require_prover()?;
    let bundle = match (&args.bundle, args.no_offline) {
        (_, true) => None,
        (Some(path), false) => Some(OfflineBundle::load(path)?),
        (None, false) => {
            let options = OfflineOptions { use_psa: !args.no_psa, ..OfflineOptions::default() };
            Some(run_offline(&llm, factory.as_ref(), &task, options)?)
        }
    };
    let cfg = AgentConfig {
        budget: BudgetLimits { max_steps: args.budget_steps, max_wall: Duration::from_secs(args.budget_secs) },
        online: !args.no_online,
        ..AgentConfig::default()
    };
    let run = run_agent(&llm, factory.as_ref(), &task, bundle.as_ref(), cfg, None)?;
    let id = &task.task_id;
    write(&args.out.join(format!("{id}.transcript.jsonl")), &run.transcript.to_jsonl())?;
    let usage = serde_json::json!({
        "lemmas": run.usage_summary(),
        "tokens": llm.usage(),
        "consumed_steps": run.consumed_steps,
    });
    write(&args.out.join(format!("{id}.usage.json")), &(serde_json::to_string_pretty(&usage)? + "\n"))?;
    if let Some(script) = &run.transcript.final_script {
        write(&args.out.join(format!("{id}.v")), script)?;
    }
    println!("{id}: {}", run.transcript.outcome.label());
    Ok(if run.transcript.outcome == Outcome::Proved { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let global = &cli.global;
    match &cli.command {
        Command::SynthesizeOffline { task, out, no_psa } => {
            let (_, task) = TaskManifest::load(task)?;
            let llm = global.require_llm()?;
            let factory = global.require_prover()?;
            let options = OfflineOptions { use_psa: !no_psa, ..OfflineOptions::default() };
            let bundle = run_offline(&llm, factory.as_ref(), &task, options)?;
            write(out, &bundle.to_json())?;
            println!("{}: {} of {} lemma(s) checked", task.task_id, bundle.checked_lemmas().count(), bundle.lemmas.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Prove(args) => prove(global, args),
        Command::Bench { suite, config, report } => {
            let cfg = match config {
                Some(path) => BenchConfig::load(path)?,
                None => BenchConfig::default(),
            };
            let env = SuiteEnvironment { llm: global.llm()?, prover: global.prover()?, model_id: global.model_id()? };
            let tasks = load_suite(suite)?;
            let run = run_benchmark(&tasks, &cfg, &env);
            write_report(report, &run)?;
            print!("{}", run.report.render_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { file, goal } => {
            let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
            let prefix = match goal {
                Some(g) => {
                    let goal_text = fs::read_to_string(g).with_context(|| format!("reading {}", g.display()))?;
                    ProofTargetedVc::from_goal_file(&goal_text)?.preamble_text
                }
                None => String::new(),
            };
            let factory = global.require_prover()?;
            let report = certify_with_trusted_prefix(factory.as_ref(), &prefix, &text)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.accepted {
                bail!("certification failed");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
