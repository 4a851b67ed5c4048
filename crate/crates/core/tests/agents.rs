mod common;

use contractplan::agents::{is_triggerable, AgentBehavior, Mode};
use contractplan::harness::{
    load_scenario, run_scenario, Evidence, Scenario, Terminal, ViolationKind, ViolationPolicy,
};
use contractplan::ledger::Reason;
use contractplan::plan::{ActionId, AgentId};

use common::scenario_path;

fn load(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).unwrap()
}

fn with_behavior(mut sc: Scenario, agent: &str, b: AgentBehavior, mode: Mode) -> Scenario {
    sc.behaviors.clear();
    sc.behaviors.insert(AgentId::from(agent), b);
    sc.mode = mode;
    sc
}

const MODES: [Mode; 2] = [Mode::Centralized, Mode::Decentralized];

#[test]
fn triggerability_follows_plan_shape() {
    let lettered = load("lettered_honest.json").plan;
    let oven = load("oven_honest.json").plan;
    let t = |s: &str| ActionId::from(s);
    assert!(!is_triggerable(&AgentBehavior::Honest, &lettered));
    assert!(!is_triggerable(&AgentBehavior::OutOfOrder(t("a")), &lettered));
    assert!(is_triggerable(&AgentBehavior::OutOfOrder(t("e")), &lettered));
    assert!(is_triggerable(&AgentBehavior::SkipAction(t("a")), &lettered));
    assert!(is_triggerable(&AgentBehavior::FalseCompletion(t("g")), &lettered));
    assert!(is_triggerable(&AgentBehavior::IgnorePrecondition(t("bake")), &oven));
    assert!(!is_triggerable(&AgentBehavior::IgnorePrecondition(t("preheat")), &oven));
    assert!(!is_triggerable(&AgentBehavior::SkipAction(t("zz")), &lettered));
}

#[test]
fn skipping_stalls_with_the_skipper_responsible() {
    for mode in MODES {
        let sc = with_behavior(
            load("lettered_honest.json"),
            "Agent2",
            AgentBehavior::SkipAction("e".into()),
            mode,
        );
        let r = run_scenario(&sc);
        assert_eq!(r.terminal, Terminal::Stalled, "{mode}");
        assert_eq!(r.violating_agents(), vec![AgentId::from("Agent2")], "{mode}");
        assert!(r.violations.iter().all(|v| v.kind == ViolationKind::SkippedAction));
        assert!(matches!(r.violations[0].evidence, Evidence::Stall { .. }));
        let stall = r.stall.clone().unwrap();
        assert_eq!(stall.stuck, vec![ActionId::from("e")]);
        assert_eq!(stall.blocked, vec![ActionId::from("f"), ActionId::from("g")]);
        assert_eq!(r.completed().len(), 4);
    }
}

#[test]
fn out_of_order_is_caught_in_both_modes() {
    for mode in MODES {
        let sc = with_behavior(
            load("lettered_honest.json"),
            "Agent2",
            AgentBehavior::OutOfOrder("e".into()),
            mode,
        );
        let r = run_scenario(&sc);
        assert_eq!(r.terminal, Terminal::Aborted, "{mode}");
        assert_eq!(r.violating_agents(), vec![AgentId::from("Agent2")]);
        let v = &r.violations[0];
        assert_eq!(v.action, Some("e".into()));
        match mode {
            // Only the plan contract may execute an Act, so a direct call is unauthorized.
            Mode::Centralized => assert_eq!(v.kind, ViolationKind::Unauthorized),
            Mode::Decentralized => {
                assert_eq!(v.kind, ViolationKind::OutOfOrder);
                assert!(matches!(
                    v.evidence,
                    Evidence::Receipt {
                        reason: Reason::Order,
                        ..
                    }
                ));
            }
        }
        assert!(r.trace.entries.iter().all(|e| e.action.as_str() != "e"));
    }
}

#[test]
fn false_completion_is_rejected_on_ledger() {
    for mode in MODES {
        let sc = with_behavior(
            load("lettered_honest.json"),
            "Agent2",
            AgentBehavior::FalseCompletion("e".into()),
            mode,
        );
        let r = run_scenario(&sc);
        assert_eq!(r.terminal, Terminal::Aborted, "{mode}");
        assert!(r.violations.iter().all(|v| v.kind == ViolationKind::FalseCompletion
            && v.agent.as_str() == "Agent2"
            && matches!(
                v.evidence,
                Evidence::Receipt {
                    reason: Reason::FalseCompletion,
                    ..
                }
            )));
        assert!(r.trace.entries.iter().all(|e| e.action.as_str() != "e"));
    }
}

#[test]
fn ignored_precondition_is_caught_by_the_oracle_check() {
    let r = run_scenario(&load("oven_ignore_precondition.json"));
    assert_eq!(r.terminal, Terminal::Aborted);
    assert_eq!(r.violations.len(), 1);
    let v = &r.violations[0];
    assert_eq!(v.kind, ViolationKind::PreconditionFalse);
    assert_eq!(v.agent.as_str(), "Baker");
    assert!(matches!(
        v.evidence,
        Evidence::Receipt {
            reason: Reason::Precond,
            ..
        }
    ));
}

#[test]
fn adversary_reverts_to_honest_under_continue_policy() {
    let mut sc = load("oven_ignore_precondition.json");
    sc.on_violation = ViolationPolicy::Continue;
    let r = run_scenario(&sc);
    assert_eq!(r.violations.len(), 1);
    // The early request is stuck in flight, so bake never completes.
    assert_eq!(r.terminal, Terminal::Stalled);
    assert!(r.trace.entries.iter().any(|e| e.action.as_str() == "preheat"));
}

#[test]
fn untriggerable_adversary_behaves_honestly() {
    for mode in MODES {
        let sc = with_behavior(
            load("lettered_honest.json"),
            "Agent1",
            AgentBehavior::OutOfOrder("a".into()),
            mode,
        );
        let r = run_scenario(&sc);
        assert!(r.is_clean(), "{mode}: {:?}", r.violations);
        assert_eq!(r.completed().len(), 7);
    }
}
