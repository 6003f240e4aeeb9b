//! Decomposes a prover file into helper-lemma drafts.

use std::collections::BTreeSet;

use super::lexer::{self, LexError, TokenKind};
use super::sentence::{split_sentences, Sentence};
use super::{HelperLemma, LemmaStatus, Provenance};

pub const THEOREM_KEYWORDS: &[&str] =
    &["Lemma", "Theorem", "Corollary", "Proposition", "Fact", "Remark", "Example"];

pub const PROOF_CLOSERS: &[&str] = &["Qed", "Defined", "Admitted", "Abort"];

pub fn is_theorem_sentence(s: &Sentence) -> bool {
    THEOREM_KEYWORDS.contains(&s.head().as_str())
}

pub fn is_proof_closer(s: &Sentence) -> bool {
    PROOF_CLOSERS.contains(&s.head().as_str())
}

/// Name and proposition of a theorem-like declaration sentence.
///
/// Binders written before the colon are folded into a leading `forall`, so
/// the returned proposition can be re-asserted on its own.
pub fn parse_declaration(code: &str) -> Option<(String, String)> {
    let tokens = lexer::tokenize(code).ok()?;
    let mut iter = tokens.iter();
    let kw = iter.next()?;
    if !THEOREM_KEYWORDS.contains(&kw.text) {
        return None;
    }
    let name = iter.next().filter(|t| t.kind == TokenKind::Ident)?;
    let mut depth = 0i32;
    let mut colon = None;
    for t in iter {
        match t.text {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            ":" if depth == 0 => {
                colon = Some(t.span.clone());
                break;
            }
            _ => {}
        }
    }
    let colon = colon?;
    let binders = code[name.span.end..colon.start].trim();
    let mut prop = code[colon.end..].trim();
    prop = prop.strip_suffix('.').unwrap_or(prop).trim_end();
    let statement =
        if binders.is_empty() { prop.to_string() } else { format!("forall {binders}, {prop}") };
    Some((name.text.to_string(), statement))
}

/// Extracts one draft per top-level lemma declaration in `file_text`.
///
/// A declaration without a closing `Qed`/`Defined`/`Admitted`/`Abort` before
/// the next declaration (or end of file) yields a draft with status
/// `Conflict`. `depends_on` lists earlier drafts named in the statement or
/// proof.
pub fn extract_lemma_blocks(file_text: &str) -> Result<Vec<HelperLemma>, LexError> {
    let sentences = split_sentences(file_text)?;
    let mut drafts: Vec<HelperLemma> = Vec::new();
    let mut i = 0;
    while i < sentences.len() {
        let s = &sentences[i];
        i += 1;
        if !is_theorem_sentence(s) {
            continue;
        }
        let Some((name, statement)) = parse_declaration(&s.code()) else {
            continue;
        };
        let mut proof = String::new();
        let mut closed = false;
        while i < sentences.len() && !is_theorem_sentence(&sentences[i]) {
            proof.push_str(&sentences[i].text);
            let closer = is_proof_closer(&sentences[i]);
            i += 1;
            if closer {
                closed = true;
                break;
            }
        }
        let mut lemma = HelperLemma::draft(name, statement, proof.trim().to_string());
        lemma.provenance = Provenance::Offline;
        if !closed {
            lemma.status = LemmaStatus::Conflict;
        }
        drafts.push(lemma);
    }
    link_dependencies(&mut drafts);
    Ok(drafts)
}

/// Fills `depends_on` from name occurrences of earlier drafts.
pub fn link_dependencies(drafts: &mut [HelperLemma]) {
    for k in 0..drafts.len() {
        let mentioned: BTreeSet<String> = lexer::identifiers(&drafts[k].statement)
            .into_iter()
            .chain(lexer::identifiers(&drafts[k].proof))
            .map(str::to_string)
            .collect();
        let deps = drafts[..k]
            .iter()
            .filter(|d| mentioned.contains(&d.name))
            .map(|d| d.name.clone())
            .collect();
        drafts[k].depends_on = deps;
    }
}
