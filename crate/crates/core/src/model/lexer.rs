//! Token-level scanner for prover-language text.
//!
//! Only the granularity the pipeline needs: identifiers, literals, symbol runs,
//! with nested `(* ... *)` comments and `"..."` strings (where `""` escapes a
//! quote) skipped or reported.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated comment starting at byte {offset}")]
    UnterminatedComment { offset: usize },
    #[error("unterminated string starting at byte {offset}")]
    UnterminatedString { offset: usize },
}

impl LexError {
    pub fn offset(&self) -> usize {
        match self {
            LexError::UnterminatedComment { offset } | LexError::UnterminatedString { offset } => {
                *offset
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    /// A single bracket, comma or a maximal run of operator characters.
    Symbol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub span: Range<usize>,
}

/// Reserved words that are never counted as identifiers.
pub const KEYWORDS: &[&str] = &[
    "forall", "exists", "fun", "let", "in", "if", "then", "else", "match", "with", "end", "as",
    "return", "fix", "cofix",
];

pub const BINDER_KEYWORDS: &[&str] = &["forall", "exists", "fun", "let", "fix", "cofix"];

pub(crate) fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c == '\'' || c.is_alphanumeric()
}

fn is_single_symbol(c: char) -> bool {
    matches!(c, '(' | ')' | '[' | ']' | '{' | '}' | ',')
}

fn is_symbol_char(c: char) -> bool {
    matches!(
        c,
        '!' | '#' | '$' | '%' | '&' | '*' | '+' | '-' | '/' | ':' | ';' | '<' | '=' | '>' | '?'
            | '@' | '\\' | '^' | '|' | '~' | '.'
    )
}

/// Skips a comment whose `(*` opener starts at `start`; returns the byte index
/// just past the matching `*)`.
pub(crate) fn skip_comment(src: &str, start: usize) -> Result<usize, LexError> {
    let bytes = src.as_bytes();
    let mut depth = 0usize;
    let mut i = start;
    while i < bytes.len() {
        if bytes[i] == b'(' && bytes.get(i + 1) == Some(&b'*') {
            depth += 1;
            i += 2;
        } else if bytes[i] == b'*' && bytes.get(i + 1) == Some(&b')') {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return Ok(i);
            }
        } else if bytes[i] == b'"' && depth > 0 {
            // Strings inside comments must also be balanced.
            i = skip_string(src, i)?;
        } else {
            i += 1;
        }
    }
    Err(LexError::UnterminatedComment { offset: start })
}

/// Skips a string literal starting at `start` (the opening quote).
pub(crate) fn skip_string(src: &str, start: usize) -> Result<usize, LexError> {
    let bytes = src.as_bytes();
    let mut i = start + 1;
    while i < bytes.len() {
        if bytes[i] == b'"' {
            if bytes.get(i + 1) == Some(&b'"') {
                i += 2;
                continue;
            }
            return Ok(i + 1);
        }
        i += 1;
    }
    Err(LexError::UnterminatedString { offset: start })
}

pub(crate) fn starts_comment(src: &str, i: usize) -> bool {
    src.as_bytes().get(i) == Some(&b'(') && src.as_bytes().get(i + 1) == Some(&b'*')
}

/// Tokenizes `src`, dropping whitespace and comments.
pub fn tokenize(src: &str) -> Result<Vec<Token<'_>>, LexError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if starts_comment(src, i) {
            let end = skip_comment(src, i)?;
            while chars.peek().is_some_and(|&(j, _)| j < end) {
                chars.next();
            }
            continue;
        }
        let (kind, end) = if c == '"' {
            (TokenKind::Str, skip_string(src, i)?)
        } else if is_ident_start(c) {
            let mut end = i + c.len_utf8();
            chars.next();
            while let Some(&(j, d)) = chars.peek() {
                if is_ident_continue(d) {
                    end = j + d.len_utf8();
                    chars.next();
                } else if d == '.' {
                    // Qualified names such as `Z.add` stay one token.
                    let next = src[j + 1..].chars().next();
                    if next.is_some_and(is_ident_start) {
                        end = j + 1;
                        chars.next();
                    } else {
                        break;
                    }
                } else {
                    break;
                }
            }
            out.push(Token { kind: TokenKind::Ident, text: &src[i..end], span: i..end });
            continue;
        } else if c.is_ascii_digit() {
            let mut end = i + 1;
            chars.next();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_ascii_digit() || d == '_' {
                    end = j + 1;
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Token { kind: TokenKind::Number, text: &src[i..end], span: i..end });
            continue;
        } else if is_single_symbol(c) {
            (TokenKind::Symbol, i + 1)
        } else if is_symbol_char(c) {
            let mut end = i + 1;
            let bytes = src.as_bytes();
            while end < bytes.len() {
                let d = bytes[end] as char;
                // Never swallow the opener of a comment.
                if !is_symbol_char(d) || starts_comment(src, end) {
                    break;
                }
                end += 1;
            }
            (TokenKind::Symbol, end)
        } else {
            (TokenKind::Symbol, i + c.len_utf8())
        };
        out.push(Token { kind, text: &src[i..end], span: i..end });
        while chars.peek().is_some_and(|&(j, _)| j < end) {
            chars.next();
        }
    }
    Ok(out)
}

/// Identifier tokens of `src`, comments and strings excluded. Lexing errors
/// yield the identifiers seen before the error.
pub fn identifiers(src: &str) -> Vec<&str> {
    match tokenize(src) {
        Ok(tokens) => tokens
            .into_iter()
            .filter(|t| t.kind == TokenKind::Ident && !KEYWORDS.contains(&t.text))
            .map(|t| t.text)
            .collect(),
        Err(e) => identifiers(&src[..e.offset()]),
    }
}

/// Removes comments, collapsing every whitespace run to a single space.
pub fn normalize(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    let mut pending_space = false;
    while i < src.len() {
        if starts_comment(src, i) {
            match skip_comment(src, i) {
                Ok(end) => {
                    i = end;
                    pending_space = true;
                    continue;
                }
                Err(_) => break,
            }
        }
        let c = src[i..].chars().next().unwrap();
        if c == '"' {
            let end = skip_string(src, i).unwrap_or(src.len());
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push_str(&src[i..end]);
            i = end;
            continue;
        }
        if c.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
        i += c.len_utf8();
    }
    out
}
