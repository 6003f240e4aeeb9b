//! Adapter for an external `coqtop -emacs` subprocess.
//!
//! Dialog rules:
//!
//! * Every sentence is sent as a single line (comments stripped, whitespace
//!   collapsed) followed by `\n`.
//! * A reply is complete when `</prompt>` appears on stdout. The prompt has
//!   the shape `<prompt>NAME < STATE |PROOFS| DEPTH < </prompt>`; `STATE` is
//!   the prover's state number used for `BackTo`.
//! * A reply is a rejection when it contains a line starting with `Error:`
//!   or `Toplevel input`; the message is the reply text from that line on.
//! * Goals are read from the `N goal(s)` listing: the first goal is the block
//!   up to the first `goal K is:` marker (hypotheses included), the others
//!   are the blocks after each marker. `No more goals` means none; a reply
//!   without a listing keeps the previous goals while a proof is open.
//! * Rollback sends `BackTo STATE.`. A sentence that exceeds its timeout
//!   kills the process; a fresh one replays the accepted history and the
//!   sentence is reported as rejected.
//! * stderr is merged into the reply stream.

use std::io::{BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;

use super::{BackendKind, BackendReply, ProverBackend, ProverFactory, SessionError, DEFAULT_SENTENCE_TIMEOUT};
use crate::model::lexer::normalize;

const PROMPT_END: &str = "</prompt>";

#[derive(Debug, Clone)]
pub struct CoqtopFactory {
    pub program: PathBuf,
    pub args: Vec<String>,
    /// Bound on the initial prompt and on replays after a restart.
    pub startup_timeout: Duration,
}

impl CoqtopFactory {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        CoqtopFactory {
            program: program.into(),
            args: vec!["-emacs".into(), "-quiet".into()],
            startup_timeout: DEFAULT_SENTENCE_TIMEOUT,
        }
    }

    /// `$LEMMATA_COQTOP` or `coqtop` from `PATH`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os("LEMMATA_COQTOP").map(PathBuf::from).unwrap_or_else(|| "coqtop".into()))
    }

    /// Whether the configured program can be started at all.
    pub fn available(&self) -> bool {
        Command::new(&self.program)
            .arg("-v")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success())
    }
}

impl ProverFactory for CoqtopFactory {
    fn kind(&self) -> BackendKind {
        BackendKind::Real
    }

    fn spawn(&self) -> Result<Box<dyn ProverBackend>, SessionError> {
        Ok(Box::new(CoqtopBackend::spawn(self.clone())?))
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<Option<String>>,
    buffer: String,
}

impl Process {
    fn start(cfg: &CoqtopFactory) -> Result<Self, SessionError> {
        let mut child = Command::new(&cfg.program)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SessionError::BackendUnavailable(format!("{}: {e}", cfg.program.display())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let (tx, rx) = mpsc::channel();
        for stream in [
            Box::new(child.stdout.take().expect("piped stdout")) as Box<dyn Read + Send>,
            Box::new(child.stderr.take().expect("piped stderr")),
        ] {
            let tx = tx.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream);
                let mut buf = [0u8; 4096];
                loop {
                    match reader.read(&mut buf) {
                        Ok(0) | Err(_) => {
                            let _ = tx.send(None);
                            break;
                        }
                        Ok(n) => {
                            if tx.send(Some(String::from_utf8_lossy(&buf[..n]).into_owned())).is_err() {
                                break;
                            }
                        }
                    }
                }
            });
        }
        Ok(Process { child, stdin, rx, buffer: String::new() })
    }

    /// Reads until the next prompt; `Ok(None)` on timeout.
    fn read_reply(&mut self, timeout: Duration) -> Result<Option<String>, SessionError> {
        let deadline = Instant::now() + timeout;
        let mut closed_streams = 0;
        loop {
            if let Some(end) = self.buffer.find(PROMPT_END) {
                let reply = self.buffer[..end + PROMPT_END.len()].to_string();
                self.buffer.drain(..end + PROMPT_END.len());
                return Ok(Some(reply));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(Some(chunk)) => self.buffer.push_str(&chunk),
                Ok(None) => {
                    closed_streams += 1;
                    if closed_streams == 2 {
                        return Err(SessionError::SessionDead(format!(
                            "prover exited; last output: {}",
                            self.buffer.trim()
                        )));
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SessionError::SessionDead("prover output closed".into()))
                }
            }
        }
    }

    fn send(&mut self, line: &str) -> Result<(), SessionError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| SessionError::SessionDead(format!("write to prover failed: {e}")))
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Parsed `<prompt>` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub state: u64,
    pub proofs: Vec<String>,
}

pub struct CoqtopBackend {
    cfg: CoqtopFactory,
    process: Process,
    /// Prover state number after each accepted sentence, root first.
    states: Vec<u64>,
    goals: Vec<Vec<String>>,
    accepted: Vec<String>,
}

fn prompt_regex() -> Regex {
    Regex::new(r"<prompt>\S+ < (\d+) \|([^|]*)\| \d+ < </prompt>").expect("valid regex")
}

pub fn parse_prompt(text: &str) -> Option<Prompt> {
    let caps = prompt_regex().captures_iter(text).last()?;
    Some(Prompt {
        state: caps[1].parse().ok()?,
        proofs: caps[2].split('|').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
    })
}

fn strip_markup(text: &str) -> String {
    let tags = Regex::new(r"</?(infomsg|warning|prompt)>").expect("valid regex");
    let without_prompt = match text.find("<prompt>") {
        Some(i) => &text[..i],
        None => text,
    };
    tags.replace_all(without_prompt, "").to_string()
}

/// Error text of a reply, if it is a rejection.
pub fn extract_error(reply: &str) -> Option<String> {
    let body = strip_markup(reply);
    let start = body
        .lines()
        .scan(0usize, |offset, line| {
            let here = *offset;
            *offset += line.len() + 1;
            Some((here, line))
        })
        .find(|(_, l)| l.starts_with("Error:") || l.starts_with("Toplevel input"))
        .map(|(i, _)| i)?;
    Some(body[start..].trim().to_string())
}

/// Stand-in goal reported while the focused subproof is done but others remain.
pub const UNFOCUSED_GOALS: &str = "(unfocused goals remain; focus the next one with a bullet or `}`)";

/// Goal listing of a reply; `None` when the reply shows no listing.
pub fn extract_goals(reply: &str) -> Option<Vec<String>> {
    let body = strip_markup(reply);
    if body.contains("No more goals") || body.contains("No more subgoals") {
        return Some(Vec::new());
    }
    if body.contains("unfocused goals") || body.contains("unfocused subgoals") {
        return Some(vec![UNFOCUSED_GOALS.to_string()]);
    }
    let header = Regex::new(r"(?m)^\s*\d+ (?:sub)?goals?\b.*$").expect("valid regex");
    let m = header.find(&body)?;
    let rest = &body[m.end()..];
    let marker = Regex::new(r"(?m)^\s*(?:sub)?goal \d+(?: \(ID \d+\))? is:\s*$").expect("valid regex");
    Some(
        marker
            .split(rest)
            .map(dedent)
            .filter(|g| !g.is_empty())
            .collect(),
    )
}

fn dedent(block: &str) -> String {
    let lines: Vec<&str> = block.lines().filter(|l| !l.trim().is_empty()).collect();
    let indent = lines.iter().map(|l| l.len() - l.trim_start().len()).min().unwrap_or(0);
    lines.iter().map(|l| l[indent..].trim_end()).collect::<Vec<_>>().join("\n")
}

impl CoqtopBackend {
    fn spawn(cfg: CoqtopFactory) -> Result<Self, SessionError> {
        let mut process = Process::start(&cfg)?;
        let first = process
            .read_reply(cfg.startup_timeout)?
            .ok_or_else(|| SessionError::BackendUnavailable("no prompt from prover".into()))?;
        let prompt = parse_prompt(&first)
            .ok_or_else(|| SessionError::Protocol(format!("unrecognized prompt: {first}")))?;
        Ok(CoqtopBackend { cfg, process, states: vec![prompt.state], goals: vec![Vec::new()], accepted: Vec::new() })
    }

    fn restart_and_replay(&mut self) -> Result<(), SessionError> {
        let fresh = CoqtopBackend::spawn(self.cfg.clone())?;
        let history = std::mem::take(&mut self.accepted);
        *self = fresh;
        for s in history {
            match self.exec_line(&s, self.cfg.startup_timeout)? {
                Some(BackendReply::Accepted { .. }) => {}
                Some(BackendReply::Rejected { message }) => {
                    return Err(SessionError::Protocol(format!("replay of {s:?} failed: {message}")))
                }
                None => return Err(SessionError::SessionDead(format!("replay of {s:?} timed out"))),
            }
        }
        Ok(())
    }

    /// Sends one normalized line; `None` when the reply timed out.
    fn exec_line(&mut self, line: &str, timeout: Duration) -> Result<Option<BackendReply>, SessionError> {
        self.process.send(line)?;
        let Some(reply) = self.process.read_reply(timeout)? else {
            return Ok(None);
        };
        let prompt = parse_prompt(&reply)
            .ok_or_else(|| SessionError::Protocol(format!("reply without prompt: {reply}")))?;
        if let Some(message) = extract_error(&reply) {
            return Ok(Some(BackendReply::Rejected { message }));
        }
        let goals = match extract_goals(&reply) {
            Some(g) => g,
            None if prompt.proofs.is_empty() => Vec::new(),
            None => self.goals.last().cloned().unwrap_or_default(),
        };
        let message = strip_markup(&reply).trim().to_string();
        self.states.push(prompt.state);
        self.goals.push(goals.clone());
        self.accepted.push(line.to_string());
        Ok(Some(BackendReply::Accepted { goals, message }))
    }
}

impl ProverBackend for CoqtopBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Real
    }

    fn exec(&mut self, sentence: &str, timeout: Duration) -> Result<BackendReply, SessionError> {
        match self.exec_line(&normalize(sentence), timeout)? {
            Some(reply) => Ok(reply),
            None => {
                self.restart_and_replay()?;
                Ok(BackendReply::Rejected {
                    message: format!("Timeout: sentence exceeded {} ms.", timeout.as_millis()),
                })
            }
        }
    }

    fn rollback(&mut self, depth: usize, _history: &[String]) -> Result<(), SessionError> {
        let target = *self
            .states
            .get(depth)
            .ok_or_else(|| SessionError::Protocol(format!("rollback beyond prover history to {depth}")))?;
        self.process.send(&format!("BackTo {target}."))?;
        let reply = self
            .process
            .read_reply(self.cfg.startup_timeout)?
            .ok_or_else(|| SessionError::Protocol("BackTo timed out".into()))?;
        if let Some(message) = extract_error(&reply) {
            return Err(SessionError::Protocol(format!("BackTo {target} failed: {message}")));
        }
        self.states.truncate(depth + 1);
        self.goals.truncate(depth + 1);
        self.accepted.truncate(depth);
        Ok(())
    }
}
