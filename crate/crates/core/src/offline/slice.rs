//! Syntactic slicing of annotated C sources.
//!
//! The file is cut into top-level items (functions, declarations, global
//! annotation blocks, preprocessor lines). A slice keeps the function around
//! the anchor line with its contract, every preprocessor line and type
//! definition, and the declarations of names the function mentions. Functions
//! it mentions keep only their contract and signature. Elided lines are
//! blanked, and each elided run starts with a marker, so line numbers match
//! the original file.

use std::collections::{BTreeSet, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::PropertyLocation;

pub const ELISION_MARKER: &str = "/* ... */";
pub const TRUNCATION_MARKER: &str = "/* [source truncated] */";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceResult {
    pub sliced_source: String,
    /// One-based line numbers kept from the original file.
    pub retained_lines: BTreeSet<usize>,
    pub anchor: PropertyLocation,
    pub function_name: Option<String>,
    /// Set when the anchor is outside every function and the whole file is kept.
    pub whole_file: bool,
    pub truncated: bool,
}

impl SliceResult {
    /// Cuts the slice to at most `max_bytes` bytes on a line boundary.
    pub fn truncate_to(&mut self, max_bytes: usize) {
        if self.sliced_source.len() <= max_bytes {
            return;
        }
        let budget = max_bytes.saturating_sub(TRUNCATION_MARKER.len() + 1);
        let mut cut = 0;
        for (i, _) in self.sliced_source.match_indices('\n') {
            if i + 1 > budget {
                break;
            }
            cut = i + 1;
        }
        let kept_lines = self.sliced_source[..cut].lines().count();
        self.sliced_source.truncate(cut);
        self.sliced_source.push_str(TRUNCATION_MARKER);
        self.sliced_source.push('\n');
        self.retained_lines.retain(|l| *l <= kept_lines);
        self.truncated = true;
    }
}

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum",
    "extern", "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return",
    "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void",
    "volatile", "while", "_Bool", "bool",
];

static IDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").unwrap());
static ACSL_DECL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(?:predicate|lemma|axiom|axiomatic|inductive|type)\s+([A-Za-z_]\w*)|\b(?:logic|ghost)\s+[\w\s\*]*?\b([A-Za-z_]\w*)\s*[(=;\[{]",
    )
    .unwrap()
});

struct Comment {
    start: usize,
    end: usize,
    acsl: bool,
}

struct Scan {
    /// Source with comments and literal contents blanked; newlines kept.
    code: Vec<u8>,
    /// Source with only non-annotation comments and literals blanked.
    annotated: Vec<u8>,
    comments: Vec<Comment>,
}

fn blank(buf: &mut [u8], from: usize, to: usize) {
    for b in &mut buf[from..to] {
        if *b != b'\n' {
            *b = b' ';
        }
    }
}

fn scan(src: &str) -> Scan {
    let bytes = src.as_bytes();
    let mut code = bytes.to_vec();
    let mut annotated = bytes.to_vec();
    let mut comments = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = src[i + 2..].find("*/").map_or(bytes.len(), |p| i + 2 + p + 2);
                let acsl = bytes.get(i + 2) == Some(&b'@');
                blank(&mut code, i, end);
                if !acsl {
                    blank(&mut annotated, i, end);
                }
                comments.push(Comment { start: i, end, acsl });
                i = end;
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let end = src[i..].find('\n').map_or(bytes.len(), |p| i + p);
                let acsl = bytes.get(i + 2) == Some(&b'@');
                blank(&mut code, i, end);
                if !acsl {
                    blank(&mut annotated, i, end);
                }
                comments.push(Comment { start: i, end, acsl });
                i = end;
            }
            q @ (b'"' | b'\'') => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != q && bytes[j] != b'\n' {
                    j += if bytes[j] == b'\\' { 2 } else { 1 };
                }
                let end = (j + 1).min(bytes.len());
                blank(&mut code, i + 1, end.saturating_sub(1).max(i + 1));
                blank(&mut annotated, i + 1, end.saturating_sub(1).max(i + 1));
                i = end;
            }
            _ => i += 1,
        }
    }
    Scan { code, annotated, comments }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ItemKind {
    Preprocessor,
    Function { name: String, body_open: usize },
    Declaration { names: Vec<String>, type_def: bool },
    Annotation { names: Vec<String> },
}

#[derive(Debug, Clone)]
struct Item {
    start: usize,
    end: usize,
    kind: ItemKind,
    /// Index of the annotation item directly above a function.
    contract: Option<usize>,
}

fn idents(text: &str) -> impl Iterator<Item = &str> {
    IDENT.find_iter(text).map(|m| m.as_str()).filter(|w| !C_KEYWORDS.contains(w))
}

fn classify(code: &str, start: usize, end: usize, brace: Option<usize>) -> ItemKind {
    let text = &code[start..end];
    let head_end = brace.map_or(text.len(), |b| b - start);
    let head = text[..head_end].trim_end();
    if let (Some(_), true) = (brace, head.ends_with(')')) {
        let name = head.find('(').and_then(|p| idents(&head[..p]).last()).unwrap_or("").to_string();
        return ItemKind::Function { name, body_open: brace.unwrap() };
    }
    let first_word = IDENT.find(text).map(|m| m.as_str()).unwrap_or("");
    let type_def = first_word == "typedef"
        || (matches!(first_word, "struct" | "union" | "enum") && brace.is_some());
    // Names at brace depth 0, before any initializer or parameter list.
    let mut outer = String::new();
    let mut depth = 0;
    for c in text.chars() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            '=' | '(' if depth == 0 => break,
            _ if depth == 0 => outer.push(c),
            _ => {}
        }
    }
    let mut names: Vec<String> = idents(&outer).map(str::to_string).collect();
    if first_word == "typedef" {
        names = names.split_off(names.len().saturating_sub(1));
    }
    ItemKind::Declaration { names, type_def }
}

fn items(src: &str, sc: &Scan) -> Vec<Item> {
    let code = std::str::from_utf8(&sc.code).expect("blanking keeps utf8");
    let bytes = code.as_bytes();
    let mut out: Vec<Item> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i] == b'#' {
            let mut j = i;
            loop {
                let nl = code[j..].find('\n').map_or(bytes.len(), |p| j + p);
                if nl > 0 && bytes[nl - 1] == b'\\' && nl < bytes.len() {
                    j = nl + 1;
                } else {
                    i = nl;
                    break;
                }
            }
            out.push(Item { start, end: i, kind: ItemKind::Preprocessor, contract: None });
            continue;
        }
        let mut depth = 0i32;
        let mut first_brace = None;
        let mut end = bytes.len();
        let mut j = i;
        while j < bytes.len() {
            match bytes[j] {
                b'{' => {
                    if depth == 0 && first_brace.is_none() {
                        first_brace = Some(j);
                    }
                    depth += 1;
                }
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let head = code[start..first_brace.unwrap_or(j)].trim_end();
                        if head.ends_with(')') {
                            end = j + 1;
                            break;
                        }
                    }
                }
                b';' if depth == 0 => {
                    end = j + 1;
                    break;
                }
                _ => {}
            }
            j += 1;
        }
        out.push(Item { start, end, kind: classify(code, start, end, first_brace), contract: None });
        i = end;
    }

    // Top-level annotation comments become items of their own.
    let inside = |pos: usize, items: &[Item]| items.iter().any(|it| it.start <= pos && pos < it.end);
    let mut annots: Vec<Item> = sc
        .comments
        .iter()
        .filter(|c| c.acsl && !inside(c.start, &out))
        .map(|c| {
            let text = &src[c.start..c.end];
            let names = ACSL_DECL
                .captures_iter(text)
                .filter_map(|cap| cap.get(1).or(cap.get(2)).map(|m| m.as_str().to_string()))
                .collect();
            Item { start: c.start, end: c.end, kind: ItemKind::Annotation { names }, contract: None }
        })
        .collect();
    out.append(&mut annots);
    out.sort_by_key(|it| it.start);

    for k in 1..out.len() {
        if matches!(out[k].kind, ItemKind::Function { .. } | ItemKind::Declaration { type_def: false, .. })
            && matches!(out[k - 1].kind, ItemKind::Annotation { .. })
        {
            let gap = &src[out[k - 1].end..out[k].start];
            if gap.trim().is_empty() && gap.matches('\n').count() <= 1 {
                out[k].contract = Some(k - 1);
            }
        }
    }
    out
}

struct Lines {
    starts: Vec<usize>,
}

impl Lines {
    fn new(src: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        Lines { starts }
    }

    /// One-based line of byte offset `pos`.
    fn of(&self, pos: usize) -> usize {
        self.starts.partition_point(|&s| s <= pos)
    }

    /// Lines touched by the byte range `[start, end)`.
    fn span(&self, start: usize, end: usize) -> std::ops::RangeInclusive<usize> {
        self.of(start)..=self.of(end.saturating_sub(1).max(start))
    }
}

fn line_count(src: &str) -> usize {
    src.lines().count()
}

pub fn slice_program(annotated_source: &str, location: &PropertyLocation) -> SliceResult {
    let src = annotated_source;
    let total = line_count(src);
    let sc = scan(src);
    let all = items(src, &sc);
    let lines = Lines::new(src);
    let annotated = String::from_utf8_lossy(&sc.annotated).into_owned();

    let enclosing = all.iter().position(|it| {
        let ItemKind::Function { .. } = it.kind else { return false };
        let from = it.contract.map_or(it.start, |c| all[c].start);
        lines.span(from, it.end).contains(&location.line)
    });
    let Some(fi) = enclosing else {
        log::warn!("line {} of {} is outside every function; keeping the whole file", location.line, location.file);
        return SliceResult {
            sliced_source: src.to_string(),
            retained_lines: (1..=total).collect(),
            anchor: location.clone(),
            function_name: None,
            whole_file: true,
            truncated: false,
        };
    };
    let func = &all[fi];
    let ItemKind::Function { name: fname, .. } = &func.kind else { unreachable!() };

    let mut keep: BTreeSet<usize> = BTreeSet::new();
    let keep_item = |it: &Item, keep: &mut BTreeSet<usize>| keep.extend(lines.span(it.start, it.end));
    keep_item(func, &mut keep);
    let mut referenced: HashSet<&str> = idents(&annotated[func.start..func.end]).collect();
    if let Some(c) = func.contract {
        keep_item(&all[c], &mut keep);
        referenced.extend(idents(&annotated[all[c].start..all[c].end]));
    }

    for (k, it) in all.iter().enumerate() {
        if k == fi || Some(k) == func.contract {
            continue;
        }
        match &it.kind {
            ItemKind::Preprocessor => keep_item(it, &mut keep),
            ItemKind::Declaration { names, type_def } => {
                if *type_def || names.iter().any(|n| referenced.contains(n.as_str())) {
                    keep_item(it, &mut keep);
                    if let Some(c) = it.contract {
                        keep_item(&all[c], &mut keep);
                    }
                }
            }
            ItemKind::Annotation { names } => {
                let is_contract = all.iter().any(|f| f.contract == Some(k));
                if !is_contract && names.iter().any(|n| referenced.contains(n.as_str())) {
                    keep_item(it, &mut keep);
                }
            }
            ItemKind::Function { name, body_open } => {
                if referenced.contains(name.as_str()) {
                    if let Some(c) = it.contract {
                        keep_item(&all[c], &mut keep);
                    }
                    keep.extend(lines.of(it.start)..=lines.of(*body_open));
                    keep.insert(lines.of(it.end - 1));
                }
            }
        }
    }
    keep.retain(|l| *l >= 1 && *l <= total);

    let mut out = String::with_capacity(src.len());
    let mut prev_kept = true;
    for (n, line) in src.lines().enumerate() {
        let ln = n + 1;
        if keep.contains(&ln) {
            out.push_str(line);
            prev_kept = true;
        } else {
            if prev_kept {
                out.push_str(ELISION_MARKER);
            }
            prev_kept = false;
        }
        out.push('\n');
    }
    if !src.ends_with('\n') && !src.is_empty() {
        out.pop();
    }

    SliceResult {
        sliced_source: out,
        retained_lines: keep,
        anchor: location.clone(),
        function_name: Some(fname.clone()),
        whole_file: false,
        truncated: false,
    }
}
