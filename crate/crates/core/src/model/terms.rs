//! Complexity measure for theorem statements.
//!
//! Counting rule: every identifier (keywords excluded) and every literal is
//! one term; every binder keyword (`forall`, `exists`, `fun`, `let`, `fix`,
//! `cofix`) adds one; every operator application adds one, where operators
//! are the symbols in [`OPERATORS`]. Brackets, commas, `:` and `:=` do not
//! count. Comments are ignored. Text after an unterminated comment or string
//! is ignored, which keeps the function total.

use super::lexer::{self, TokenKind, BINDER_KEYWORDS, KEYWORDS};

pub const OPERATORS: &[&str] = &[
    "->", "<->", "/\\", "\\/", "~", "=", "<>", "<", "<=", ">", ">=", "+", "-", "*", "/", "^",
    "::", "++", "&&", "||", "<?", "<=?", "=?", "==", "!=",
];

pub fn count_terms(statement: &str) -> u64 {
    let tokens = match lexer::tokenize(statement) {
        Ok(tokens) => tokens,
        Err(e) => return count_terms(&statement[..e.offset()]),
    };
    tokens
        .iter()
        .filter(|t| match t.kind {
            TokenKind::Ident => !KEYWORDS.contains(&t.text) || BINDER_KEYWORDS.contains(&t.text),
            TokenKind::Number | TokenKind::Str => true,
            TokenKind::Symbol => OPERATORS.contains(&t.text),
        })
        .count() as u64
}
