//! Whole-file certification in a fresh session.
//!
//! A file is accepted only if every sentence is accepted, no proof is left
//! open or aborted, no goal remains, and the executed sentences contain no
//! admitted obligation and no assumption introduced without proof.

use serde::{Deserialize, Serialize};

use super::{ProverFactory, Session, SessionError};
use crate::model::lemma_blocks::{is_proof_closer, is_theorem_sentence};
use crate::model::lexer::{self, normalize, TokenKind};
use crate::model::sentence::{code_sentences, Sentence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub accepted: bool,
    pub admitted_count: u32,
    pub axiom_count_added: u32,
    /// Index of the first failing sentence (among non-blank sentences) and
    /// the prover's message or a structural diagnostic.
    pub first_error: Option<(usize, String)>,
}

/// Vernacular commands that add an assumption without proof.
const ASSUMPTION_COMMANDS: &[&str] = &[
    "Axiom", "Axioms", "Parameter", "Parameters", "Hypothesis", "Hypotheses", "Variable",
    "Variables", "Conjecture",
];

/// Tactics and commands that close a goal without proving it.
const ADMISSION_TOKENS: &[&str] = &["Admitted", "admit", "give_up"];

/// The command word after attributes and locality modifiers.
fn command_word(s: &Sentence) -> String {
    let code = s.code();
    let mut rest = code.as_str();
    loop {
        rest = rest.trim_start();
        if rest.starts_with("#[") {
            match rest.find(']') {
                Some(end) => rest = &rest[end + 1..],
                None => return String::new(),
            }
            continue;
        }
        let word: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        if matches!(word.as_str(), "Local" | "Global" | "Polymorphic" | "Monomorphic" | "Program") {
            rest = &rest[word.len()..];
            continue;
        }
        return word;
    }
}

pub fn is_assumption(s: &Sentence) -> bool {
    ASSUMPTION_COMMANDS.contains(&command_word(s).as_str())
        || (command_word(s) == "Admit" && s.code().contains("Obligations"))
}

pub fn admissions_in(s: &Sentence) -> u32 {
    let code = s.code();
    match lexer::tokenize(&code) {
        Ok(tokens) => tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Ident && ADMISSION_TOKENS.contains(&t.text))
            .count() as u32,
        Err(_) => 0,
    }
}

pub fn certify_file(factory: &dyn ProverFactory, file_text: &str) -> Result<CertificationReport, SessionError> {
    certify_with_trusted_prefix(factory, "", file_text)
}

/// Like [`certify_file`], but assumptions declared by `trusted_prefix` (the
/// generated goal preamble) are not counted. The file must start with the
/// prefix's sentences verbatim, otherwise the first divergence is reported.
/// Admissions are counted everywhere.
pub fn certify_with_trusted_prefix(
    factory: &dyn ProverFactory,
    trusted_prefix: &str,
    file_text: &str,
) -> Result<CertificationReport, SessionError> {
    let prefix: Vec<String> = match code_sentences(trusted_prefix) {
        Ok(s) => s.iter().map(|s| normalize(&s.text)).collect(),
        Err(e) => return Err(SessionError::Parse(e)),
    };
    let sentences = match code_sentences(file_text) {
        Ok(s) => s,
        Err(e) => {
            return Ok(CertificationReport {
                accepted: false,
                admitted_count: 0,
                axiom_count_added: 0,
                first_error: Some((0, format!("Syntax error: {e}"))),
            })
        }
    };
    let mut session = Session::start(factory, "")?;
    let mut admitted = 0u32;
    let mut axioms = 0u32;
    let mut first_error: Option<(usize, String)> = None;
    let mut open_proof: Option<usize> = None;

    for (i, s) in sentences.iter().enumerate() {
        let trusted = i < prefix.len();
        if trusted && normalize(&s.text) != prefix[i] {
            first_error.get_or_insert((i, "File diverges from the trusted preamble.".into()));
            break;
        }
        if !s.terminated {
            first_error.get_or_insert((i, "Syntax error: unterminated sentence.".into()));
            break;
        }
        let result = session.exec(&s.text)?;
        if !result.is_accepted() {
            first_error.get_or_insert((i, result.message));
            break;
        }
        admitted += admissions_in(s);
        if is_assumption(s) && !trusted {
            axioms += 1;
        }
        if is_theorem_sentence(s) {
            open_proof = Some(i);
        } else if is_proof_closer(s) {
            if s.head() == "Abort" {
                first_error.get_or_insert((i, "Proof aborted.".into()));
            }
            open_proof = None;
        }
    }

    if first_error.is_none() && sentences.len() < prefix.len() {
        first_error = Some((sentences.len(), "File is shorter than the trusted preamble.".into()));
    }
    if first_error.is_none() {
        if let Some(i) = open_proof {
            first_error = Some((i, "Proof not closed at end of file.".into()));
        } else if !session.goals().is_empty() {
            first_error = Some((sentences.len(), "Goals remain at end of file.".into()));
        }
    }

    Ok(CertificationReport {
        accepted: first_error.is_none() && admitted == 0 && axioms == 0,
        admitted_count: admitted,
        axiom_count_added: axioms,
        first_error,
    })
}
