//! Which library lemmas a proof script actually uses.

use std::collections::BTreeSet;

use crate::model::lexer::{tokenize, TokenKind};

/// Tactics whose arguments count as lemma uses.
pub const APPLICATION_TACTICS: &[&str] = &[
    "apply", "eapply", "rapply", "rewrite", "erewrite", "setoid_rewrite", "exact", "eexact", "refine",
    "specialize", "pose", "epose", "assert", "enough", "generalize", "destruct", "induction", "using",
];

/// Tokens ending a tactic's argument list.
const ARGUMENT_END: &[&str] = &[";", ".", "|", "||", "]", "{", "}"];

/// Names from `names` that occur as arguments of an application tactic in
/// `script`. Comments and strings are ignored.
pub fn detect_lemma_usage<'a>(script: &str, names: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    let wanted: BTreeSet<&str> = names.into_iter().collect();
    let mut used = BTreeSet::new();
    let tokens = match tokenize(script) {
        Ok(t) => t,
        Err(e) => {
            // Keep whatever lexes before the error.
            let cut = e.offset();
            return detect_lemma_usage(&script[..cut], wanted);
        }
    };
    let mut in_args = false;
    for (i, t) in tokens.iter().enumerate() {
        // `NAME :` and `NAME :=` introduce a name rather than use one.
        let binds = tokens.get(i + 1).is_some_and(|n| n.text == ":" || n.text == ":=");
        match t.kind {
            TokenKind::Ident if APPLICATION_TACTICS.contains(&t.text) => in_args = true,
            TokenKind::Ident if in_args && !binds && wanted.contains(t.text) => {
                used.insert(t.text.to_string());
            }
            TokenKind::Symbol if ARGUMENT_END.contains(&t.text) => in_args = false,
            _ => {}
        }
    }
    used
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: [&str; 3] = ["HL1", "HL2", "HL3"];

    #[test]
    fn empty_script() {
        assert!(detect_lemma_usage("", NAMES).is_empty());
    }

    #[test]
    fn applications_detected() {
        let script = "Proof.\n  intros.\n  apply HL2; [exact H | lia].\n  rewrite <- (HL1 x y).\nQed.";
        assert_eq!(detect_lemma_usage(script, NAMES), ["HL1", "HL2"].map(String::from).into());
    }

    #[test]
    fn comments_and_plain_mentions_ignored() {
        let script = "(* apply HL1. *) idtac \"apply HL2\". assert (HL3 : True). clear HL3.";
        assert!(detect_lemma_usage(script, NAMES).is_empty());
        assert_eq!(detect_lemma_usage("pose proof (HL3 a) as H.", NAMES), ["HL3".to_string()].into());
    }

    #[test]
    fn lex_error_keeps_prefix() {
        assert_eq!(detect_lemma_usage("apply HL1. (* open", NAMES), ["HL1".to_string()].into());
    }
}
