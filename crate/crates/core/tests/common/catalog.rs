//! Small proof scenarios shared by the agent, bench, CLI and acceptance
//! tests.

use std::path::Path;

use lemmata::agent::AgentConfig;
use lemmata::bench::analytics::{PropertyType, Quadrant};
use lemmata::llm::prompts::ADAPT_TOOL;
use lemmata::llm::ChatResponse;
use lemmata::model::{Outcome, VerificationTask};
use serde_json::json;

use super::*;

pub fn tool() -> ChatResponse {
    ChatResponse::tool(ADAPT_TOOL, json!({ "reason": "stuck" })).with_usage(90, 12)
}

pub fn world_for(task: &VerificationTask) -> World {
    World::new(&task.proof_targeted_vc().unwrap().statement_text)
}

/// A scenario whose offline reply carries the lemma blocks in `offline`.
pub fn scenario(
    task: VerificationTask,
    world: World,
    offline: &str,
    adaptation: Vec<ChatResponse>,
    agent: Vec<ChatResponse>,
) -> Scenario {
    let psa = psa_reply(&task.property_name);
    let synthesis = text(&format!("```coq\n{offline}```\nPlan:\n"));
    let replies = Replies { psa: vec![psa], synthesis: vec![synthesis], adaptation, agent };
    Scenario { task, world, replies, property_type: None }
}

pub const LE_GOAL: &str = "Theorem le_refl_goal :\n  forall x : Z, x <= x.";
pub const LE_CONTEXT: &str = "x : Z\n============================\nx <= x";
pub const ASSERT: &str = "//@ assert x <= x;";
pub const ENSURES: &str = "//@ ensures \\result == x;";
pub const RTE: &str = "//@ assert rte: signed_overflow: -2147483648 <= x;";

fn lemma(name: &str, statement: &str, proof: &str) -> String {
    format!("Lemma {name} : {statement}.\nProof.\n  {proof}\nQed.\n")
}

pub fn trivial(id: &str, annotation: &str) -> Scenario {
    let task = tiny_task(id, LE_GOAL, annotation);
    let mut world = world_for(&task);
    world.on(&[], "intros; lia.", Reply::goals(&[]));
    let offline = lemma("HL_sq_nonneg", "forall x : Z, 0 <= x * x", "intros; nia.");
    scenario(task, world, &offline, vec![], vec![text("intros; lia.")])
}

pub fn assert_true(id: &str) -> Scenario {
    let task = tiny_task(id, LE_GOAL, ASSERT);
    let mut world = world_for(&task);
    world.linear(&[
        ("assert (HL_true : True).", Reply::goals(&["True", "forall x : Z, x <= x"])),
        ("exact I.", Reply::goals(&["forall x : Z, x <= x"])),
        ("intros; lia.", Reply::goals(&[])),
    ]);
    let adaptation = text("```coq\nLemma HL_true : True.\nProof. exact I. Qed.\n```");
    scenario(task, world, "", vec![adaptation], vec![tool(), text("intros; lia.")])
}

pub fn ill_typed(id: &str, with_tool: bool) -> Scenario {
    let task = tiny_task(id, LE_GOAL, ASSERT);
    let mut world = world_for(&task);
    world
        .on(&[], "apply HL2.", Reply::Reject("Error: Unable to unify \"?y <= ?x\" with \"x <= x\".".into()))
        .on(
            &[],
            "assert (HL2' : forall x : Z, x <= x = true).",
            Reply::Reject(
                "Error: The term \"x <= x\" has type \"Prop\" while it is expected to have type \"bool\".".into(),
            ),
        )
        .on(&[], "intros; lia.", Reply::goals(&[]));
    let offline = lemma("HL2", "forall x y : Z, x <= y -> y <= x", "intros; lia.");
    let adaptation = text("```coq\nLemma HL2' : forall x : Z, x <= x = true.\nProof. reflexivity. Qed.\n```");
    let agent = if with_tool {
        vec![text("apply HL2."), tool(), text("intros; lia.")]
    } else {
        vec![text("apply HL2."), text("intros; lia.")]
    };
    scenario(task, world, &offline, vec![adaptation], agent)
}

pub const VALID_RD_GOAL: &str = "Theorem wp_goal_reduced :\n  forall (t : Z -> Z) (a_4 a_5 : addr),\n  a_5 = shift a_4 0 -> valid_rd t a_4 1 -> valid_rd t a_5 1.";
pub const SHIFT0: &str = "forall (t : Z -> Z) (p : addr) (n : Z), valid_rd t p n -> valid_rd t (shift p 0) n";

/// A rewrite lemma fails to apply and the adapter proposes a zero-shift
/// lemma instead.
pub fn valid_rd_shift(id: &str) -> Scenario {
    let task = tiny_task(id, VALID_RD_GOAL, "//@ assert rte: mem_access: \\valid_read(p + 0);");
    let ctx = "t : Z -> Z\na_4, a_5 : addr\nH5 : a_5 = shift a_4 0\nH22 : valid_rd t a_4 1\n============================\n";
    let main = format!("{ctx}valid_rd t a_5 1");
    let mut world = world_for(&task);
    let intros = "intros t a_4 a_5 H5 H22.";
    let assert = format!("assert (HL_valid_rd_shift0 : {SHIFT0}).");
    let sub = "t0 : Z -> Z\np : addr\nn : Z\nHrd : valid_rd t0 p n\n============================\nvalid_rd t0 (shift p 0) n";
    world
        .on(
            &[intros],
            "apply HL_valid_rd_rewrite.",
            Reply::Reject("Error: Unable to find an instance for the variable a.".into()),
        )
        .linear(&[
            (intros, Reply::Goals(vec![main.clone()])),
            (&assert, Reply::Goals(vec![format!("{ctx}{SHIFT0}"), main.clone()])),
            ("intros t0 p n Hrd.", Reply::Goals(vec![sub.into(), main.clone()])),
            ("rewrite shift_zero; exact Hrd.", Reply::Goals(vec![main.clone()])),
            ("subst a_5; exact (HL_valid_rd_shift0 t a_4 1 H22).", Reply::goals(&[])),
        ]);
    let offline = "Lemma HL_valid_rd_rewrite :\n  forall (t : Z -> Z) (a b : addr) (n : Z), valid_rd t a n -> a = b ->\n    valid_rd t b n.\nProof.\n  intros t a b n H Hab. subst. exact H.\nQed.\n";
    let adaptation = text(&format!(
        "The rewrite lemma cannot see that a_5 is a zero shift of a_4.\n```coq\nLemma HL_valid_rd_shift0 :\n  {SHIFT0}.\nProof.\n  intros t0 p n Hrd.\n  rewrite shift_zero; exact Hrd.\nQed.\n```"
    ));
    let agent = vec![
        text(intros),
        text("apply HL_valid_rd_rewrite."),
        tool(),
        text("subst a_5; exact (HL_valid_rd_shift0 t a_4 1 H22)."),
    ];
    scenario(task, world, offline, vec![adaptation], agent)
}

pub const MUL_GOAL: &str = "Theorem wp_goal_reduced :\n  forall i x_1 : Z, 0 <= i -> is_uint16 x_1 -> -2147483648 <= i * x_1.";
pub const MUL: &str = "forall a b : Z, 0 <= a -> 0 <= b -> 0 <= a * b";
pub const HX1: &str = "assert (HL_Hx1_nonneg : 0 <= x_1) by (apply HL_uint16_nonneg; exact H9).";
pub const HMUL: &str =
    "assert (HL_Hmul_nonneg : 0 <= i * x_1) by (apply HL_mul_nonneg_of_nonneg; [exact H0 | exact HL_Hx1_nonneg]).";

/// An offline typing lemma and an online arithmetic lemma close an
/// underflow obligation together.
pub fn uint16_product(id: &str) -> Scenario {
    let task = tiny_task(id, MUL_GOAL, RTE);
    let ctx = "i, x_1 : Z\nH0 : 0 <= i\nH9 : is_uint16 x_1\n============================\n";
    let main = format!("{ctx}-2147483648 <= i * x_1");
    let with_hx1 = main.replace("=====\n", "=====\nHL_Hx1_nonneg : 0 <= x_1\n");
    let mut world = world_for(&task);
    world.linear(&[
        ("intros i x_1 H0 H9.", Reply::Goals(vec![main.clone()])),
        (&format!("assert (HL_mul_nonneg_of_nonneg : {MUL})."), Reply::Goals(vec![format!("{ctx}{MUL}"), main.clone()])),
        ("intros a b Ha Hb.", Reply::Goals(vec!["0 <= a * b".into(), main.clone()])),
        ("apply Z.mul_nonneg_nonneg; assumption.", Reply::Goals(vec![main.clone()])),
        (HX1, Reply::Goals(vec![with_hx1.clone()])),
        (HMUL, Reply::Goals(vec![with_hx1])),
        ("lia.", Reply::goals(&[])),
    ]);
    let offline = lemma("HL_uint16_nonneg", "forall x : Z, is_uint16 x -> 0 <= x", "intros x [H _]. exact H.");
    let adaptation = text(&format!(
        "```coq\nLemma HL_mul_nonneg_of_nonneg : {MUL}.\nProof.\n  intros a b Ha Hb.\n  apply Z.mul_nonneg_nonneg; assumption.\nQed.\n```"
    ));
    let agent = vec![text("intros i x_1 H0 H9."), tool(), text(HX1), text(HMUL), text("lia.")];
    scenario(task, world, &offline, vec![adaptation], agent)
}

pub fn apply_existing(id: &str, annotation: &str) -> Scenario {
    let task = tiny_task(id, LE_GOAL, annotation);
    let mut world = world_for(&task);
    world.on(&[], "apply HL1.", Reply::goals(&[]));
    let offline = lemma("HL1", "forall x : Z, x <= x", "intros; lia.");
    scenario(task, world, &offline, vec![text("APPLY HL1")], vec![tool(), text("apply HL1.")])
}

pub fn conflict(id: &str) -> Scenario {
    let task = tiny_task(id, LE_GOAL, ASSERT);
    let mut world = world_for(&task);
    world
        .on(&[], "apply HL1.", Reply::Reject("Error: Unable to unify \"x <= x + 0\" with \"forall x : Z, x <= x\".".into()))
        .on(&[], "intros x.", Reply::goals(&[LE_CONTEXT]))
        .on(&["intros x."], "apply HL1.", Reply::goals(&[]));
    let offline = lemma("HL1", "forall x : Z, x <= x", "intros; lia.");
    let agent = vec![text("apply HL1."), text("intros x."), text("apply HL1.")];
    scenario(task, world, &offline, vec![], agent)
}

/// Every tactic the model proposes is refused; `delay_ms` slows each prover
/// sentence.
pub fn endless_failures(id: &str, delay_ms: u64) -> Scenario {
    let task = tiny_task(id, LE_GOAL, ASSERT);
    let mut world = world_for(&task);
    world.delay_ms = delay_ms;
    world.on(&[], "omega.", Reply::Reject("Error: The reference omega was not found in the current environment.".into()));
    scenario(task, world, "", vec![], vec![text("omega.")])
}

/// The prover refuses the goal statement itself.
pub fn rejected_goal(id: &str) -> Scenario {
    let task = tiny_task(id, "Theorem broken :\n  forall x : Z, x <= y.", ENSURES);
    let mut world = world_for(&task);
    world.reject_elsewhere(
        "Theorem broken :\n  forall x : Z, x <= y.",
        "Error: The reference y was not found in the current environment.",
    );
    scenario(task, world, "", vec![], vec![text("intros; lia.")])
}

/// First of a pair: proves a lemma online that the second task reuses.
pub fn history_first(id: &str) -> Scenario {
    let task = tiny_task(id, LE_GOAL, ASSERT);
    let mut world = world_for(&task);
    world.linear(&[
        ("assert (HL_shared : forall x : Z, x <= x).", Reply::goals(&["forall x : Z, x <= x", "forall x : Z, x <= x"])),
        ("intros; lia.", Reply::goals(&["forall x : Z, x <= x"])),
        ("apply HL_shared.", Reply::goals(&[])),
    ]);
    let adaptation = text("```coq\nLemma HL_shared : forall x : Z, x <= x.\nProof. intros; lia. Qed.\n```");
    scenario(task, world, "", vec![adaptation], vec![tool(), text("apply HL_shared.")])
}

pub fn history_second(id: &str) -> Scenario {
    let task = tiny_task(id, "Theorem le_refl_again :\n  forall x : Z, x <= x.", ASSERT);
    let mut world = world_for(&task);
    world.on(&[], "apply HL_shared.", Reply::goals(&[]));
    scenario(task, world, "", vec![], vec![text("apply HL_shared.")])
}

#[derive(Debug, Clone)]
pub struct Expected {
    pub outcome: Outcome,
    pub quadrant: Option<Quadrant>,
    pub property_type: PropertyType,
}

fn expect(outcome: Outcome, quadrant: Option<Quadrant>, property_type: PropertyType) -> Expected {
    Expected { outcome, quadrant, property_type }
}

/// Ten tasks covering every outcome but time exhaustion, every usage
/// quadrant and every property type, with the results they must produce.
pub fn ten_task_suite() -> Vec<(Scenario, Expected)> {
    use Outcome::*;
    use PropertyType as P;
    use Quadrant as Q;
    vec![
        (hex2bin_scenario(), expect(Proved, Some(Q::OfflineOnly), P::Loop)),
        (valid_rd_shift("t02_valid_rd"), expect(Proved, Some(Q::OnlineOnly), P::Rte)),
        (uint16_product("t03_uint16"), expect(Proved, Some(Q::Both), P::Rte)),
        (trivial("t04_plain", ENSURES), expect(Proved, Some(Q::None), P::Contract)),
        (apply_existing("t05_apply", ENSURES), expect(Proved, Some(Q::OfflineOnly), P::Contract)),
        (assert_true("t06_assert_true"), expect(Proved, Some(Q::None), P::Assertion)),
        (endless_failures("t07_stuck", 0), expect(ExhaustedSteps, None, P::Assertion)),
        (rejected_goal("t08_broken"), expect(Aborted, None, P::Contract)),
        (ill_typed("t09_ill_typed", true), expect(Proved, Some(Q::None), P::Assertion)),
        (conflict("t10_conflict"), expect(Proved, Some(Q::OfflineOnly), P::Assertion)),
    ]
}

/// Records each scenario and writes it as a suite task directory.
pub fn write_suite(dir: &Path, scenarios: &[Scenario], cfg: AgentConfig) {
    for s in scenarios {
        let rec = record(s, Flags::default(), cfg);
        write_task_dir(&dir.join(&s.task.task_id), s, &rec);
    }
}
