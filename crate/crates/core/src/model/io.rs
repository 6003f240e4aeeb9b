//! On-disk formats: the JSON task manifest and the line-delimited transcript.
//!
//! Every document carries a `schema` tag of the form `lemmata.<kind>/<version>`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelError, Outcome, ProofTranscript, PropertyLocation, TranscriptEvent, VerificationTask};

pub const TASK_SCHEMA: &str = "lemmata.task/1";
pub const TRANSCRIPT_SCHEMA: &str = "lemmata.transcript/1";

/// Task manifest as stored on disk; `source` and `goal` are paths relative to
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub schema: String,
    pub task_id: String,
    pub property_name: String,
    pub property_location: PropertyLocation,
    pub source: String,
    pub goal: String,
    /// One of `loop`, `rte`, `assertion`, `contract`; classified from the
    /// annotation at the property line when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_suite: Option<String>,
}

pub(crate) fn read(path: &Path) -> Result<String, ModelError> {
    fs::read_to_string(path)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

pub(crate) fn check_schema(found: &str, expected: &str, what: &'static str) -> Result<(), ModelError> {
    if found == expected {
        Ok(())
    } else {
        Err(ModelError::Malformed { what, detail: format!("schema {found:?}, expected {expected:?}") })
    }
}

impl TaskManifest {
    pub fn load(path: &Path) -> Result<(Self, VerificationTask), ModelError> {
        let manifest: TaskManifest = serde_json::from_str(&read(path)?)
            .map_err(|e| ModelError::Malformed { what: "task manifest", detail: e.to_string() })?;
        check_schema(&manifest.schema, TASK_SCHEMA, "task manifest")?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let task = VerificationTask {
            task_id: manifest.task_id.clone(),
            property_name: manifest.property_name.clone(),
            property_location: manifest.property_location.clone(),
            annotated_source: read(&dir.join(&manifest.source))?,
            goal_file: read(&dir.join(&manifest.goal))?,
        };
        task.validate()?;
        Ok((manifest, task))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    task_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename = "outcome")]
struct Footer {
    outcome: Outcome,
    final_script: Option<String>,
}

impl ProofTranscript {
    /// Header line, one line per event, then an `outcome` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Header { schema: TRANSCRIPT_SCHEMA.into(), task_id: self.task_id.clone() };
        out.push_str(&serde_json::to_string(&header).expect("serializable"));
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        let footer = Footer { outcome: self.outcome, final_script: self.final_script.clone() };
        out.push_str(&serde_json::to_string(&footer).expect("serializable"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ModelError> {
        let bad = |detail: String| ModelError::Malformed { what: "transcript", detail };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = serde_json::from_str(lines.next().ok_or_else(|| bad("empty".into()))?)
            .map_err(|e| bad(e.to_string()))?;
        check_schema(&header.schema, TRANSCRIPT_SCHEMA, "transcript")?;
        let rest: Vec<&str> = lines.collect();
        let (last, events) = rest.split_last().ok_or_else(|| bad("missing outcome line".into()))?;
        let footer: Footer = serde_json::from_str(last).map_err(|e| bad(e.to_string()))?;
        let events = events
            .iter()
            .map(|l| serde_json::from_str::<TranscriptEvent>(l).map_err(|e| bad(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(ProofTranscript {
            task_id: header.task_id,
            events,
            outcome: footer.outcome,
            final_script: footer.final_script,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;

    #[test]
    fn transcript_jsonl_round_trip() {
        let t = ProofTranscript {
            task_id: "hex2bin".into(),
            events: vec![
                TranscriptEvent::TacticAttempt { step: 1, tactic: "intros.".into() },
                TranscriptEvent::ProverReply { accepted: true, goals: vec!["True".into()], message: String::new() },
                TranscriptEvent::LemmaAdded { name: "HL".into(), provenance: Provenance::OnlineNew },
            ],
            outcome: Outcome::Proved,
            final_script: Some("Lemma x : True. Proof. exact I. Qed.".into()),
        };
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().next().unwrap().contains(TRANSCRIPT_SCHEMA));
        assert!(text.contains(r#""event":"tactic-attempt""#));
        assert_eq!(ProofTranscript::from_jsonl(&text).unwrap(), t);
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = "{\"schema\":\"other/9\",\"task_id\":\"x\"}\n{\"event\":\"outcome\",\"outcome\":\"aborted\",\"final_script\":null}\n";
        assert!(ProofTranscript::from_jsonl(text).is_err());
    }
}
