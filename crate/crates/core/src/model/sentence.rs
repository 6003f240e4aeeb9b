//! Sentence splitting for prover files.
//!
//! A sentence ends at a `.` that is followed by whitespace or end of input and
//! lies outside comments and strings. Focusing braces and bullets (`-`, `+`,
//! `*` runs) are sentences of their own when they open a sentence, mirroring
//! the prover's surface grammar. Leading whitespace and comments belong to the
//! sentence they precede, so concatenating the sentences reproduces the input.

use serde::{Deserialize, Serialize};

use super::lexer::{self, LexError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// Original text, including leading trivia.
    pub text: String,
    /// Byte offset of `text` in the input.
    pub start: usize,
    /// False only for trailing code that never reached a terminator.
    pub terminated: bool,
}

impl Sentence {
    /// The sentence with comments removed and whitespace collapsed.
    pub fn code(&self) -> String {
        lexer::normalize(&self.text)
    }

    pub fn is_blank(&self) -> bool {
        self.code().is_empty()
    }

    /// First word of the sentence's code (`Lemma`, `Proof`, `intros`, ...).
    pub fn head(&self) -> String {
        let code = self.code();
        code.split(|c: char| c.is_whitespace() || c == '.' || c == '(' || c == ';')
            .next()
            .unwrap_or("")
            .to_string()
    }
}

/// Splits `src` into sentences.
pub fn split_sentences(src: &str) -> Result<Vec<Sentence>, LexError> {
    let bytes = src.as_bytes();
    let mut out: Vec<Sentence> = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    // Whether the current sentence has seen any code yet.
    let mut seen_code = false;

    let push = |out: &mut Vec<Sentence>, from: usize, to: usize, terminated: bool| {
        out.push(Sentence { text: src[from..to].to_string(), start: from, terminated });
    };

    while i < bytes.len() {
        if lexer::starts_comment(src, i) {
            i = lexer::skip_comment(src, i)?;
            continue;
        }
        let c = src[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '"' {
            i = lexer::skip_string(src, i)?;
            seen_code = true;
            continue;
        }
        if !seen_code {
            // Braces and bullets only count at the start of a sentence.
            if (c == '{' && bytes.get(i + 1) != Some(&b'|')) || c == '}' {
                push(&mut out, start, i + 1, true);
                i += 1;
                start = i;
                continue;
            }
            if matches!(c, '-' | '+' | '*') {
                let mut end = i;
                while end < bytes.len() && bytes[end] == c as u8 {
                    end += 1;
                }
                let followed_by_space =
                    end == bytes.len() || (bytes[end] as char).is_whitespace();
                if followed_by_space {
                    push(&mut out, start, end, true);
                    i = end;
                    start = i;
                    continue;
                }
            }
        }
        seen_code = true;
        if c == '.' {
            let next_is_space = i + 1 == bytes.len() || (bytes[i + 1] as char).is_whitespace();
            let prev_is_dot = i > 0 && bytes[i - 1] == b'.';
            if next_is_space && !prev_is_dot {
                push(&mut out, start, i + 1, true);
                i += 1;
                start = i;
                seen_code = false;
                continue;
            }
        }
        i += c.len_utf8();
    }

    if start < bytes.len() {
        if seen_code {
            push(&mut out, start, bytes.len(), false);
        } else if let Some(last) = out.last_mut() {
            last.text.push_str(&src[start..]);
        } else {
            push(&mut out, start, bytes.len(), false);
        }
    }
    Ok(out)
}

/// Sentences with code in them; trailing trivia stays attached to its sentence.
pub fn code_sentences(src: &str) -> Result<Vec<Sentence>, LexError> {
    Ok(split_sentences(src)?.into_iter().filter(|s| !s.is_blank()).collect())
}

pub fn join(sentences: &[Sentence]) -> String {
    sentences.iter().map(|s| s.text.as_str()).collect()
}
