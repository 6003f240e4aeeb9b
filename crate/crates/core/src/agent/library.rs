//! The agent's lemma corpus.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::model::{HelperLemma, LemmaStatus, Provenance};

pub const DEFAULT_LISTING_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Annotation {
    Imported,
    Conflict,
}

impl Annotation {
    pub fn marker(self) -> &'static str {
        match self {
            Annotation::Imported => "(* imported *)",
            Annotation::Conflict => "(* conflict *)",
        }
    }
}

/// Lemmas proved in earlier tasks of the same run, shared when enabled.
pub type SharedHistory = Arc<Mutex<Vec<HelperLemma>>>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaLibrary {
    entries: Vec<HelperLemma>,
    annotations: HashMap<String, Annotation>,
    /// Lemma name and the position of the tactic applying it.
    pub usage_log: Vec<(String, usize)>,
    pub listing_cap: usize,
}

impl LemmaLibrary {
    pub fn new() -> Self {
        LemmaLibrary { listing_cap: DEFAULT_LISTING_CAP, ..Default::default() }
    }

    pub fn with_cap(cap: usize) -> Self {
        LemmaLibrary { listing_cap: cap, ..Default::default() }
    }

    /// Adds a checked (or pending) lemma under `provenance` and returns the
    /// name it is stored under; a taken name gets a numeric suffix. Lemmas in
    /// any other status are refused.
    pub fn add(&mut self, mut lemma: HelperLemma, provenance: Provenance) -> Option<String> {
        if !matches!(lemma.status, LemmaStatus::Checked | LemmaStatus::PendingSubproof) {
            return None;
        }
        if self.get(&lemma.name).is_some() {
            let base = lemma.name.clone();
            let mut k = 2;
            while self.get(&format!("{base}_{k}")).is_some() {
                k += 1;
            }
            lemma.name = format!("{base}_{k}");
        }
        lemma.provenance = provenance;
        let name = lemma.name.clone();
        self.annotations.insert(name.clone(), Annotation::Imported);
        self.entries.push(lemma);
        Some(name)
    }

    pub fn get(&self, name: &str) -> Option<&HelperLemma> {
        self.entries.iter().find(|l| l.name == name)
    }

    pub fn remove(&mut self, name: &str) -> Option<HelperLemma> {
        let i = self.entries.iter().position(|l| l.name == name)?;
        self.annotations.remove(name);
        Some(self.entries.remove(i))
    }

    pub fn entries(&self) -> &[HelperLemma] {
        &self.entries
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|l| l.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn annotation(&self, name: &str) -> Option<Annotation> {
        self.annotations.get(name).copied()
    }

    /// Records the outcome of the latest attempt to apply `name`.
    pub fn record_application(&mut self, name: &str, accepted: bool, position: usize) {
        if let Some(a) = self.annotations.get_mut(name) {
            *a = if accepted { Annotation::Imported } else { Annotation::Conflict };
            if accepted {
                self.usage_log.push((name.to_string(), position));
            }
        }
    }

    pub fn mark_conflict(&mut self, name: &str) {
        if let Some(a) = self.annotations.get_mut(name) {
            *a = Annotation::Conflict;
        }
    }

    /// One line per lemma in insertion order, each with its marker, capped at
    /// `listing_cap` entries.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for l in self.entries.iter().take(self.listing_cap) {
            let stmt = l.statement.split_whitespace().collect::<Vec<_>>().join(" ");
            let marker = self.annotations.get(&l.name).copied().unwrap_or(Annotation::Imported).marker();
            out.push_str(&format!("  Lemma {}: {}. Proof...Qed. {}\n", l.name, stmt, marker));
        }
        if self.entries.len() > self.listing_cap {
            out.push_str(&format!("  (* {} more lemma(s) not shown *)\n", self.entries.len() - self.listing_cap));
        }
        out
    }
}
