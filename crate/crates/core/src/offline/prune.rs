//! Compile-check of lemma drafts with removal of everything depending on a
//! failure.

use std::collections::{BTreeSet, HashMap};

use crate::model::{HelperLemma, LemmaStatus};
use crate::prover::{certify_with_trusted_prefix, ProverFactory, SessionError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneResult {
    /// Every draft, in input order, now `Checked` or `Discarded`.
    pub lemmas: Vec<HelperLemma>,
    pub diagnostics: Vec<String>,
    /// Names handed to the checker, in the order they were checked.
    pub check_order: Vec<String>,
}

impl PruneResult {
    pub fn survivors(&self) -> Vec<HelperLemma> {
        self.lemmas.iter().filter(|l| l.status == LemmaStatus::Checked).cloned().collect()
    }

    pub fn discarded_names(&self) -> BTreeSet<String> {
        self.lemmas.iter().filter(|l| l.status == LemmaStatus::Discarded).map(|l| l.name.clone()).collect()
    }
}

/// Runs `check` on drafts in dependency order. `check` receives the draft and
/// its already-checked transitive dependencies in check order, and returns
/// `Ok(None)` on success or `Ok(Some(reason))` on failure.
///
/// A draft already marked `Conflict`, a later draft reusing a name, and every
/// member of a dependency cycle fail without being checked. A draft with a
/// failed dependency is discarded without being checked.
pub fn prune_with<F>(drafts: &[HelperLemma], mut check: F) -> Result<PruneResult, SessionError>
where
    F: FnMut(&HelperLemma, &[&HelperLemma]) -> Result<Option<String>, SessionError>,
{
    let n = drafts.len();
    let mut lemmas: Vec<HelperLemma> = drafts.to_vec();
    let mut diagnostics = Vec::new();
    let mut failed = vec![false; n];

    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, d) in drafts.iter().enumerate() {
        if by_name.contains_key(d.name.as_str()) {
            failed[i] = true;
            diagnostics.push(format!("{}: duplicate lemma name", d.name));
        } else {
            by_name.insert(&d.name, i);
        }
        if d.status == LemmaStatus::Conflict {
            failed[i] = true;
            diagnostics.push(format!("{}: proof is not closed", d.name));
        }
    }
    let deps: Vec<Vec<usize>> = drafts
        .iter()
        .map(|d| {
            d.depends_on
                .iter()
                .filter_map(|name| by_name.get(name.as_str()).copied())
                .collect::<BTreeSet<usize>>()
                .into_iter()
                .collect()
        })
        .collect();

    // Kahn's algorithm, lowest input index first for a stable order.
    let mut pending: Vec<usize> = deps.iter().map(Vec::len).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ds) in deps.iter().enumerate() {
        for &d in ds {
            dependents[d].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &dependents[i] {
            pending[j] -= 1;
            if pending[j] == 0 {
                ready.insert(j);
            }
        }
    }
    let mut ordered = vec![false; n];
    for &i in &order {
        ordered[i] = true;
    }
    for i in (0..n).filter(|&i| !ordered[i]) {
        failed[i] = true;
        diagnostics.push(format!("{}: dependency cycle", drafts[i].name));
    }

    let mut discarded = failed.clone();
    let mut check_order = Vec::new();
    let mut position = vec![usize::MAX; n];
    for &i in &order {
        if discarded[i] {
            continue;
        }
        if let Some(&bad) = deps[i].iter().find(|&&d| discarded[d]) {
            discarded[i] = true;
            diagnostics.push(format!("{}: depends on discarded {}", drafts[i].name, drafts[bad].name));
            continue;
        }
        let mut closure: BTreeSet<usize> = BTreeSet::new();
        let mut stack = deps[i].clone();
        while let Some(d) = stack.pop() {
            if closure.insert(d) {
                stack.extend(deps[d].iter().copied());
            }
        }
        let mut closure: Vec<usize> = closure.into_iter().collect();
        closure.sort_by_key(|&d| position[d]);
        let context: Vec<&HelperLemma> = closure.iter().map(|&d| &drafts[d]).collect();
        position[i] = check_order.len();
        check_order.push(drafts[i].name.clone());
        if let Some(reason) = check(&drafts[i], &context)? {
            discarded[i] = true;
            diagnostics.push(format!("{}: {reason}", drafts[i].name));
        }
    }
    // Members of a cycle never reach the loop above; anything downstream of
    // them is unordered as well, so the closure holds without a second pass.

    for (i, l) in lemmas.iter_mut().enumerate() {
        l.status = if discarded[i] { LemmaStatus::Discarded } else { LemmaStatus::Checked };
    }
    Ok(PruneResult { lemmas, diagnostics, check_order })
}

/// The file a draft is checked in: the goal preamble, its dependencies, then
/// the draft itself.
pub fn check_file(preamble: &str, context: &[&HelperLemma], draft: &HelperLemma) -> String {
    let mut file = preamble.trim_end().to_string();
    if !file.is_empty() {
        file.push_str("\n\n");
    }
    for l in context {
        file.push_str(&l.render());
        file.push('\n');
    }
    file.push_str(&draft.render());
    file
}

/// Certifies every draft against `preamble` with the given prover.
pub fn prune_failed_lemmas(
    factory: &dyn ProverFactory,
    preamble: &str,
    drafts: &[HelperLemma],
) -> Result<PruneResult, SessionError> {
    prune_with(drafts, |draft, context| {
        let report = certify_with_trusted_prefix(factory, preamble, &check_file(preamble, context, draft))?;
        Ok(if report.accepted {
            None
        } else if let Some((i, msg)) = report.first_error {
            Some(format!("sentence {i} rejected: {msg}"))
        } else {
            Some(format!(
                "{} admitted obligation(s), {} assumption(s)",
                report.admitted_count, report.axiom_count_added
            ))
        })
    })
}
