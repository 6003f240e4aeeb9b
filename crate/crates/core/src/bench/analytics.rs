//! Classification rules and report aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::llm::{Phase, Usage};
use crate::model::{Outcome, Provenance};

pub const REPORT_SCHEMA: &str = "lemmata.report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyType {
    Loop,
    Rte,
    Assertion,
    Contract,
}

impl PropertyType {
    pub const ALL: [PropertyType; 4] =
        [PropertyType::Loop, PropertyType::Rte, PropertyType::Assertion, PropertyType::Contract];

    pub fn label(self) -> &'static str {
        match self {
            PropertyType::Loop => "loop",
            PropertyType::Rte => "rte",
            PropertyType::Assertion => "assertion",
            PropertyType::Contract => "contract",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PropertyType::ALL.into_iter().find(|p| p.label() == s.trim().to_ascii_lowercase())
    }
}

const LOOP_KEYS: &[&str] = &["loop invariant", "loop variant", "loop assigns", "loop allocates", "loop_invariant"];
const RTE_KEYS: &[&str] =
    &["rte", "overflow", "\\valid", "valid_read", "mem_access", "division_by_zero", "signed_downcast", "\\initialized"];
const ASSERT_KEYS: &[&str] = &["assert", "check"];
const CONTRACT_KEYS: &[&str] =
    &["requires", "ensures", "disjoint", "complete", "behavior", "assigns", "terminates", "decreases", "exits"];

fn has_word(text: &str, key: &str) -> bool {
    let bytes = text.as_bytes();
    text.match_indices(key).any(|(i, _)| {
        let before = i.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i + key.len()).copied();
        let word = |b: Option<u8>| b.is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_');
        (key.starts_with('\\') || !word(before)) && !word(after)
    })
}

/// Property category of an annotation, or `None` when no rule fires.
pub fn try_classify_property(annotation: &str) -> Option<PropertyType> {
    let text = annotation.to_ascii_lowercase();
    let any = |keys: &[&str]| keys.iter().any(|k| has_word(&text, k));
    if any(LOOP_KEYS) {
        Some(PropertyType::Loop)
    } else if any(RTE_KEYS) {
        Some(PropertyType::Rte)
    } else if any(ASSERT_KEYS) {
        Some(PropertyType::Assertion)
    } else if any(CONTRACT_KEYS) {
        Some(PropertyType::Contract)
    } else {
        None
    }
}

/// Like [`try_classify_property`], defaulting to `Contract` with a warning.
pub fn classify_property(annotation: &str) -> PropertyType {
    try_classify_property(annotation).unwrap_or_else(|| {
        log::warn!("cannot classify annotation {:?}; counting it as a contract", annotation.trim());
        PropertyType::Contract
    })
}

/// The annotation text at a 1-based source line.
pub fn annotation_at(source: &str, line: usize) -> &str {
    source.lines().nth(line.saturating_sub(1)).unwrap_or("")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityCategory {
    Memory,
    Simplification,
    Typing,
    Arithmetic,
    DataStructure,
    String,
    Others,
}

impl UtilityCategory {
    pub const ALL: [UtilityCategory; 7] = [
        UtilityCategory::Memory,
        UtilityCategory::Simplification,
        UtilityCategory::Typing,
        UtilityCategory::Arithmetic,
        UtilityCategory::DataStructure,
        UtilityCategory::String,
        UtilityCategory::Others,
    ];

    pub fn label(self) -> &'static str {
        match self {
            UtilityCategory::Memory => "Memory",
            UtilityCategory::Simplification => "Simplification",
            UtilityCategory::Typing => "Typing",
            UtilityCategory::Arithmetic => "Arithmetic",
            UtilityCategory::DataStructure => "Data Structure",
            UtilityCategory::String => "String",
            UtilityCategory::Others => "Others",
        }
    }
}

/// Keyword table in match order. `shift` is deliberately absent.
pub const KEYWORD_TABLE: &[(UtilityCategory, &[&str])] = &[
    (UtilityCategory::Memory, &["addr", "base", "ptr", "mem"]),
    (UtilityCategory::Simplification, &["simpl", "rewrite", "split"]),
    (UtilityCategory::Typing, &["uint32", "float", "int_max", "uint16", "int32", "isint"]),
    (UtilityCategory::Arithmetic, &["mul", "div", "mod", "lxor", "add", "sub"]),
    (UtilityCategory::DataStructure, &["array", "list", "heap", "map"]),
    (UtilityCategory::String, &["str", "char", "tolower"]),
];

/// First table row with a keyword equal to a run of consecutive
/// underscore-separated name fragments, compared case-insensitively.
pub fn categorize_lemma(name: &str) -> UtilityCategory {
    let lower = name.trim_end_matches('\'').to_ascii_lowercase();
    let fragments: Vec<&str> = lower.split('_').filter(|f| !f.is_empty()).collect();
    for (category, keys) in KEYWORD_TABLE {
        for key in *keys {
            let parts: Vec<&str> = key.split('_').collect();
            if fragments.windows(parts.len()).any(|w| w == parts.as_slice()) {
                return *category;
            }
        }
    }
    UtilityCategory::Others
}

/// Upper bounds (inclusive) of every bucket but the last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BucketEdges(pub Vec<u64>);

impl Default for BucketEdges {
    fn default() -> Self {
        BucketEdges(vec![25, 50, 100, 200])
    }
}

impl BucketEdges {
    /// Sorted and deduplicated.
    pub fn normalized(&self) -> BucketEdges {
        let mut e = self.0.clone();
        e.sort_unstable();
        e.dedup();
        BucketEdges(e)
    }

    pub fn labels(&self) -> Vec<String> {
        let edges = &self.normalized().0;
        let mut labels = Vec::with_capacity(edges.len() + 1);
        let mut lo = 0;
        for &hi in edges {
            labels.push(format!("{lo}-{hi}"));
            lo = hi + 1;
        }
        labels.push(format!("{lo}+"));
        labels
    }

    pub fn index(&self, term_count: u64) -> usize {
        let edges = &self.normalized().0;
        edges.iter().position(|&hi| term_count <= hi).unwrap_or(edges.len())
    }
}

pub fn bucket_complexity(term_count: u64, edges: &BucketEdges) -> String {
    edges.labels().swap_remove(edges.index(term_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    Both,
    OfflineOnly,
    OnlineOnly,
    None,
}

impl Quadrant {
    pub fn of(offline_used: bool, online_used: bool) -> Quadrant {
        match (offline_used, online_used) {
            (true, true) => Quadrant::Both,
            (true, false) => Quadrant::OfflineOnly,
            (false, true) => Quadrant::OnlineOnly,
            (false, false) => Quadrant::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaRecord {
    pub name: String,
    pub provenance: Provenance,
    pub category: UtilityCategory,
}

impl LemmaRecord {
    pub fn new(name: &str, provenance: Provenance) -> Self {
        LemmaRecord { name: name.to_string(), provenance, category: categorize_lemma(name) }
    }
}

/// Deterministic per-task result; wall-clock data lives in the metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub property_type: PropertyType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_suite: Option<String>,
    pub term_count: u64,
    pub complexity_bucket: String,
    pub outcome: Outcome,
    pub consumed_steps: u32,
    pub offline_drafts: usize,
    pub offline_checked: usize,
    /// Lemmas this task contributed to its library.
    pub discovered: Vec<LemmaRecord>,
    pub used: Vec<LemmaRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrant: Option<Quadrant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: BTreeMap<Phase, Usage>,
    /// Manual proof-strategy label; never computed.
    #[serde(default)]
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub label: String,
    pub total: usize,
    pub proved: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadrants {
    pub both: usize,
    pub offline_only: usize,
    pub online_only: usize,
    pub none: usize,
}

impl Quadrants {
    pub fn sum(&self) -> usize {
        self.both + self.offline_only + self.online_only + self.none
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyRow {
    pub category: UtilityCategory,
    pub discovered: usize,
    pub used: usize,
    pub discovered_pct: f64,
    pub used_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaStats {
    pub offline_drafts: usize,
    pub offline_checked: usize,
    pub online_added: usize,
    pub used_offline: usize,
    pub used_online: usize,
    /// Lemmas used per proved task, keyed by count.
    pub used_per_proof: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub tasks: Vec<TaskResult>,
    pub totals: BTreeMap<Outcome, usize>,
    pub complexity: Vec<HistogramRow>,
    pub property_types: Vec<HistogramRow>,
    pub quadrants: Quadrants,
    pub taxonomy: Vec<TaxonomyRow>,
    pub lemma_stats: LemmaStats,
    pub usage: BTreeMap<Phase, Usage>,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        (part as f64 * 10000.0 / whole as f64).round() / 100.0
    }
}

/// Reduces per-task results, ordered by task id, into a report.
pub fn aggregate(mut tasks: Vec<TaskResult>, edges: &BucketEdges) -> RunReport {
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut totals = BTreeMap::new();
    let mut complexity: Vec<HistogramRow> =
        edges.labels().into_iter().map(|label| HistogramRow { label, ..Default::default() }).collect();
    let mut property_types: Vec<HistogramRow> = PropertyType::ALL
        .iter()
        .map(|p| HistogramRow { label: p.label().into(), ..Default::default() })
        .collect();
    let mut quadrants = Quadrants::default();
    let mut discovered: BTreeMap<UtilityCategory, usize> = BTreeMap::new();
    let mut used: BTreeMap<UtilityCategory, usize> = BTreeMap::new();
    let mut stats = LemmaStats::default();
    let mut usage: BTreeMap<Phase, Usage> = BTreeMap::new();

    for t in &mut tasks {
        t.complexity_bucket = bucket_complexity(t.term_count, edges);
        let proved = t.outcome == Outcome::Proved;
        *totals.entry(t.outcome).or_insert(0) += 1;
        let c = &mut complexity[edges.index(t.term_count)];
        let p = &mut property_types[PropertyType::ALL.iter().position(|p| *p == t.property_type).unwrap()];
        for row in [c, p] {
            row.total += 1;
            row.proved += usize::from(proved);
        }
        if proved {
            let offline = t.used.iter().any(|u| !u.provenance.is_online());
            let online = t.used.iter().any(|u| u.provenance.is_online());
            let q = Quadrant::of(offline, online);
            t.quadrant = Some(q);
            match q {
                Quadrant::Both => quadrants.both += 1,
                Quadrant::OfflineOnly => quadrants.offline_only += 1,
                Quadrant::OnlineOnly => quadrants.online_only += 1,
                Quadrant::None => quadrants.none += 1,
            }
            *stats.used_per_proof.entry(t.used.len()).or_insert(0) += 1;
            for u in &t.used {
                *used.entry(u.category).or_insert(0) += 1;
                if u.provenance.is_online() {
                    stats.used_online += 1;
                } else {
                    stats.used_offline += 1;
                }
            }
        } else {
            t.quadrant = None;
        }
        for d in &t.discovered {
            *discovered.entry(d.category).or_insert(0) += 1;
            if d.provenance.is_online() {
                stats.online_added += 1;
            }
        }
        stats.offline_drafts += t.offline_drafts;
        stats.offline_checked += t.offline_checked;
        for (phase, u) in &t.usage {
            *usage.entry(*phase).or_default() += *u;
        }
    }

    let total_discovered: usize = discovered.values().sum();
    let total_used: usize = used.values().sum();
    let taxonomy = UtilityCategory::ALL
        .iter()
        .map(|c| {
            let d = discovered.get(c).copied().unwrap_or(0);
            let u = used.get(c).copied().unwrap_or(0);
            TaxonomyRow {
                category: *c,
                discovered: d,
                used: u,
                discovered_pct: pct(d, total_discovered),
                used_pct: pct(u, total_used),
            }
        })
        .collect();

    RunReport {
        schema: REPORT_SCHEMA.into(),
        tasks,
        totals,
        complexity,
        property_types,
        quadrants,
        taxonomy,
        lemma_stats: stats,
        usage,
    }
}

impl RunReport {
    pub fn proved(&self) -> usize {
        self.totals.get(&Outcome::Proved).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Tasks: {}", self.tasks.len());
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<28} {:<10} {:>6} {:>6}  {}", "task", "type", "terms", "steps", "outcome");
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "{:<28} {:<10} {:>6} {:>6}  {}{}",
                t.task_id,
                t.property_type.label(),
                t.term_count,
                t.consumed_steps,
                t.outcome.label(),
                t.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Totals");
        for (o, n) in &self.totals {
            let _ = writeln!(out, "  {:<16} {n}", o.label());
        }
        for (title, rows) in [("Term complexity", &self.complexity), ("Property type", &self.property_types)] {
            let _ = writeln!(out);
            let _ = writeln!(out, "{title}");
            let _ = writeln!(out, "  {:<12} {:>6} {:>6}", "bucket", "total", "proved");
            for r in rows {
                let _ = writeln!(out, "  {:<12} {:>6} {:>6}", r.label, r.total, r.proved);
            }
        }
        let q = &self.quadrants;
        let _ = writeln!(out);
        let _ = writeln!(out, "Lemma usage in proved tasks");
        for (label, n) in
            [("both", q.both), ("offline only", q.offline_only), ("online only", q.online_only), ("none", q.none)]
        {
            let _ = writeln!(out, "  {label:<14} {n}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Utility taxonomy");
        let _ = writeln!(out, "  {:<16} {:>10} {:>8} {:>6} {:>8}", "category", "discovered", "%", "used", "%");
        for r in &self.taxonomy {
            let _ = writeln!(
                out,
                "  {:<16} {:>10} {:>8.2} {:>6} {:>8.2}",
                r.category.label(),
                r.discovered,
                r.discovered_pct,
                r.used,
                r.used_pct
            );
        }
        let s = &self.lemma_stats;
        let _ = writeln!(out);
        let _ = writeln!(out, "Lemmas");
        let _ = writeln!(out, "  offline drafted  {}", s.offline_drafts);
        let _ = writeln!(out, "  offline checked  {}", s.offline_checked);
        let _ = writeln!(out, "  online added     {}", s.online_added);
        let _ = writeln!(out, "  used (offline)   {}", s.used_offline);
        let _ = writeln!(out, "  used (online)    {}", s.used_online);
        let _ = writeln!(out);
        let _ = writeln!(out, "Tokens");
        for (phase, u) in &self.usage {
            let _ = writeln!(out, "  {:<8} prompt {} completion {}", format!("{phase:?}").to_lowercase(), u.prompt_tokens, u.completion_tokens);
        }
        out
    }
}
