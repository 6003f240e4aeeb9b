//! Prompt templates.
//!
//! Placeholders are written `{{name}}` and must be filled with non-empty
//! text. `{{?name}}` marks an optional placeholder that may be empty.
//! Substitution is single-pass, so slot values are embedded verbatim.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, LlmError, Role, ToolDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateId {
    Psa,
    OfflineSynthesis,
    OfflineSynthesisGoalOnly,
    OnlineAdaptation,
    AgentStep,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Psa,
        TemplateId::OfflineSynthesis,
        TemplateId::OfflineSynthesisGoalOnly,
        TemplateId::OnlineAdaptation,
        TemplateId::AgentStep,
    ];

    pub fn text(self) -> &'static str {
        match self {
            TemplateId::Psa => PSA,
            TemplateId::OfflineSynthesis => OFFLINE,
            TemplateId::OfflineSynthesisGoalOnly => OFFLINE_GOAL_ONLY,
            TemplateId::OnlineAdaptation => ONLINE,
            TemplateId::AgentStep => AGENT_STEP,
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn slots(self) -> Vec<String> {
        let mut names = Vec::new();
        for p in placeholders(self.text()) {
            if !names.contains(&p.name) {
                names.push(p.name);
            }
        }
        names
    }
}

pub const SYSTEM: &str = "You are an expert in the Coq proof assistant and in deductive verification of C programs annotated with ACSL.";

const PSA: &str = "\
Your task is to analyze the annotated source code with ACSL annotations and write a complete Coq file that intuitively proves what the annotation states. Focus only on the highlighted property to prove. State it over source-level concepts, define every notion it needs, and include the statement, its proof and all supporting definitions so that the file compiles on its own. Available context:
- Property name: {{property_name}}
- Location: function {{function_name}} at line {{line}} of file {{file_name}}
- Annotated source code:
```c
{{annotated_source}}
```

Reply with the whole Coq file in a single ```coq code block.";

const GUIDELINES: &str = "\
Important guidelines:
1. For each helper lemma proposed, provide its proof.
2. Helper lemmas can be very specific to the goal (e.g., you may use specific constants).
3. Describe a step-by-step plan detailing where each helper lemma can be applied.";

const REPLY_FORMAT: &str = "\
Reply with all helper lemmas and their proofs in a single ```coq code block. A lemma may use the definitions of the goal file and the lemmas before it in the block. After the block, write the plan as

Plan:
1. LEMMA_NAME: where and how the lemma is applied";

const OFFLINE: &str = "\
Here is a lemma that has been proved from the annotated source code:
```coq
{{phi_a}}
```

Analyze an equivalent goal that has been directly discharged from Frama-C using the same code and annotations:
```coq
{{phi_c}}
```

Based on the previously proved lemma, propose strong enough helper lemmas to help prove the goal above. Note that you do not need to prove the goal itself. {{guidelines}}

{{reply_format}}";

const OFFLINE_GOAL_ONLY: &str = "\
Analyze the following goal that has been directly discharged from Frama-C:
```coq
{{phi_c}}
```

Propose strong enough helper lemmas to help prove the goal above. Note that you do not need to prove the goal itself. {{guidelines}}

{{reply_format}}";

const ONLINE: &str = "\
Here is the current proof state:
1. Applied tactics: {{applied_tactics}}
2. Open goal: {{open_goal}}
3. Error feedback: {{error_feedback}}

Here is a list of helper lemmas. If a critical lemma exists but is not applicable, propose a refined version with corrected types:
{{?lemma_listing}}

Answer in exactly one of these forms:
- `APPLY NAME` when a listed lemma applies to the open goal as it is.
- A refined lemma with its proof in a ```coq block, named after the original with a prime (for example `Lemma HL2': ...`).
- A new helper lemma most relevant to the open goal, with its proof, in a ```coq block.";

const AGENT_STEP: &str = "\
You are proving the goal below in Coq, one tactic per reply.
```coq
{{statement}}
```

Applied tactics: {{applied_tactics}}
Current goals:
{{current_goals}}
Last prover feedback: {{feedback}}

Helper lemmas in context:
{{?lemma_listing}}
Proof plan:
{{?plan}}

Reply with exactly one tactic sentence ending with a period.{{?tool_hint}}";

/// Appended to the agent prompt when the adaptation tool is offered.
pub const TOOL_HINT: &str = " If a helper lemma you need is not applicable or missing, call the adapt_lemma tool instead.";

pub const ADAPT_TOOL: &str = "adapt_lemma";

pub fn adapt_tool_descriptor() -> ToolDescriptor {
    ToolDescriptor {
        name: ADAPT_TOOL.into(),
        description: "Adapt the helper lemmas to the current proof state: pick an applicable lemma, \
                      refine a conflicting one, or propose a new one."
            .into(),
        parameters: serde_json::json!({
            "type": "object",
            "properties": {
                "lemma": { "type": "string", "description": "Name of the lemma that failed, if any." }
            }
        }),
    }
}

struct Placeholder {
    start: usize,
    end: usize,
    name: String,
    optional: bool,
}

fn placeholders(text: &str) -> Vec<Placeholder> {
    let mut out = Vec::new();
    let mut at = 0;
    while let Some(open) = text[at..].find("{{") {
        let start = at + open;
        let Some(close) = text[start..].find("}}") else { break };
        let inner = &text[start + 2..start + close];
        let (optional, name) = match inner.strip_prefix('?') {
            Some(n) => (true, n),
            None => (false, inner),
        };
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            out.push(Placeholder { start, end: start + close + 2, name: name.to_string(), optional });
        }
        at = start + close + 2;
    }
    out
}

fn fill(template: &str, slots: &BTreeMap<String, String>) -> Result<String, LlmError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for p in placeholders(template) {
        let value = match slots.get(&p.name) {
            Some(v) if p.optional || !v.trim().is_empty() => v.as_str(),
            None if p.optional => "",
            _ => return Err(LlmError::MissingSlot(p.name)),
        };
        out.push_str(&template[last..p.start]);
        out.push_str(value);
        last = p.end;
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// Renders a template into a system plus user message pair.
pub fn render_prompt(id: TemplateId, slot_values: &BTreeMap<String, String>) -> Result<Vec<ChatMessage>, LlmError> {
    let mut slots = slot_values.clone();
    if matches!(id, TemplateId::OfflineSynthesis | TemplateId::OfflineSynthesisGoalOnly) {
        slots.entry("guidelines".into()).or_insert_with(|| GUIDELINES.into());
        slots.entry("reply_format".into()).or_insert_with(|| REPLY_FORMAT.into());
    }
    let user = fill(id.text(), &slots)?;
    Ok(vec![ChatMessage::new(Role::System, SYSTEM), ChatMessage::new(Role::User, user)])
}

/// Convenience for building slot maps from string pairs.
pub fn slots<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn psa_slots() -> BTreeMap<String, String> {
        slots([
            ("property_name", "hex2bin_loop_invariant_2"),
            ("function_name", "hex2bin"),
            ("line", "14"),
            ("file_name", "hex2bin.c"),
            ("annotated_source", "int f(void) { return 0; }"),
        ])
    }

    #[test]
    fn psa_contains_context_fields() {
        let msgs = render_prompt(TemplateId::Psa, &psa_slots()).unwrap();
        let user = &msgs[1].content;
        assert!(user.contains("Property name: hex2bin_loop_invariant_2"));
        assert!(user.contains("Location: function hex2bin at line 14 of file hex2bin.c"));
        assert!(user.contains("int f(void) { return 0; }"));
    }

    #[test]
    fn missing_or_empty_slot_is_named() {
        let mut s = psa_slots();
        s.remove("line");
        match render_prompt(TemplateId::Psa, &s) {
            Err(LlmError::MissingSlot(name)) => assert_eq!(name, "line"),
            other => panic!("{other:?}"),
        }
        let s = slots([("phi_a", ""), ("phi_c", "Goal True.")]);
        assert!(matches!(render_prompt(TemplateId::OfflineSynthesis, &s), Err(LlmError::MissingSlot(n)) if n == "phi_a"));
    }

    #[test]
    fn goal_only_template_has_no_phi_a_slot() {
        assert!(!TemplateId::OfflineSynthesisGoalOnly.slots().contains(&"phi_a".to_string()));
        assert!(TemplateId::OfflineSynthesis.slots().contains(&"phi_a".to_string()));
    }

    #[test]
    fn optional_slots_may_be_absent() {
        let s = slots([
            ("applied_tactics", "Proof."),
            ("open_goal", "True"),
            ("error_feedback", "none"),
        ]);
        let user = &render_prompt(TemplateId::OnlineAdaptation, &s).unwrap()[1].content;
        assert!(user.contains("propose a refined version with corrected types:\n\n"));
    }

    #[test]
    fn slot_values_are_not_reexpanded() {
        let mut s = psa_slots();
        s.insert("annotated_source".into(), "{{line}}".into());
        let user = &render_prompt(TemplateId::Psa, &s).unwrap()[1].content;
        assert!(user.contains("```c\n{{line}}\n```"));
    }

    proptest! {
        #[test]
        fn distinct_slot_values_render_distinct_prompts(a in "[a-z_]{1,12}", b in "[a-z_]{1,12}") {
            prop_assume!(a != b);
            let mut sa = psa_slots();
            let mut sb = psa_slots();
            sa.insert("property_name".into(), a);
            sb.insert("property_name".into(), b);
            let ra = render_prompt(TemplateId::Psa, &sa).unwrap();
            let rb = render_prompt(TemplateId::Psa, &sb).unwrap();
            let ha = crate::llm::ChatRequest::new("m", ra).content_hash();
            let hb = crate::llm::ChatRequest::new("m", rb).content_hash();
            prop_assert_ne!(ha, hb);
        }
    }
}
