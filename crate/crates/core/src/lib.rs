//! Helper-lemma discovery pipeline for proving program verification
//! conditions with an interactive prover.
//!
//! The pipeline has two lemma sources. The offline synthesizer slices the
//! annotated source, asks a model for a semantics-aware restatement of the
//! property, then for helper lemmas bridging it to the generated goal; lemmas
//! that fail to check are pruned together with everything depending on them.
//! The online adapter refines or proposes lemmas from live prover feedback
//! while a tactic-level agent works on the generated goal. Every successful
//! run ends with a kernel re-check of the assembled file.

pub mod agent;
pub mod bench;
pub mod llm;
pub mod model;
pub mod offline;
pub mod prover;
