mod common;

use proptest::prelude::*;

use contractplan::agents::Mode;
use contractplan::harness::random::{random_scenario, scenario_file, BehaviorKind};
use contractplan::harness::verify::verify_audit_log;
use contractplan::harness::{
    build_scenario, emit_report, load_scenario, parse_json_lines_report, run_scenario, run_scenario_full, ReportFormat,
    ScenarioError, Terminal, ViolationKind,
};
use contractplan::ledger::audit::{audit_records, parse_json_lines, to_json_lines};
use contractplan::ledger::Reason;
use contractplan::plan::ActionId;

use common::{audit_completions_ordered, brute_respects_deps, scenario_path, scenarios_dir};

struct Expect {
    file: &'static str,
    terminal: Terminal,
    completed: usize,
    violations: &'static [ViolationKind],
    fault: Option<Reason>,
}

const BUNDLED: &[Expect] = &[
    Expect {
        file: "numbered_dag.json",
        terminal: Terminal::Done,
        completed: 6,
        violations: &[],
        fault: None,
    },
    Expect {
        file: "numbered_skip_1.json",
        terminal: Terminal::Stalled,
        completed: 2,
        violations: &[ViolationKind::SkippedAction],
        fault: None,
    },
    Expect {
        file: "numbered_fail_1.json",
        terminal: Terminal::Stalled,
        completed: 2,
        violations: &[],
        fault: Some(Reason::Actuation),
    },
    Expect {
        file: "lettered_honest.json",
        terminal: Terminal::Done,
        completed: 7,
        violations: &[],
        fault: None,
    },
    Expect {
        file: "lettered_falsecompletion_e.json",
        terminal: Terminal::Aborted,
        completed: 4,
        violations: &[ViolationKind::FalseCompletion, ViolationKind::FalseCompletion],
        fault: None,
    },
    Expect {
        file: "lettered_out_of_order_e.json",
        terminal: Terminal::Aborted,
        completed: 0,
        violations: &[ViolationKind::OutOfOrder],
        fault: None,
    },
    Expect {
        file: "lettered_partial_effect_e.json",
        terminal: Terminal::Stalled,
        completed: 4,
        violations: &[],
        fault: Some(Reason::Effect),
    },
    Expect {
        file: "oven_honest.json",
        terminal: Terminal::Done,
        completed: 2,
        violations: &[],
        fault: None,
    },
    Expect {
        file: "oven_ignore_precondition.json",
        terminal: Terminal::Aborted,
        completed: 0,
        violations: &[ViolationKind::PreconditionFalse],
        fault: None,
    },
];

#[test]
fn bundled_scenarios_behave_as_documented() {
    for e in BUNDLED {
        let sc = load_scenario(&scenario_path(e.file)).unwrap_or_else(|errs| panic!("{}: {errs:?}", e.file));
        let r = run_scenario(&sc);
        assert_eq!(r.terminal, e.terminal, "{}", e.file);
        let kinds: Vec<ViolationKind> = r.violations.iter().map(|v| v.kind).collect();
        assert_eq!(kinds, e.violations, "{}", e.file);
        assert!(r.chain_valid, "{}", e.file);
        assert!(brute_respects_deps(&r.trace, &sc.plan, false), "{}", e.file);
        assert!(audit_completions_ordered(&r.receipts, &sc.plan), "{}", e.file);
        assert_eq!(r.goal_satisfied, e.terminal == Terminal::Done, "{}", e.file);
        assert_eq!(r.faults.first().map(|f| f.reason), e.fault, "{}", e.file);
        if e.terminal != Terminal::Aborted {
            assert_eq!(r.completed().len(), e.completed, "{}", e.file);
        }
    }
}

#[test]
fn every_bundled_scenario_file_is_covered() {
    let mut files: Vec<String> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && n != "numbered_expected_trace.json")
        .collect();
    files.sort();
    let mut listed: Vec<String> = BUNDLED.iter().map(|e| e.file.to_string()).collect();
    listed.sort();
    assert_eq!(files, listed);
}

#[test]
fn stall_report_names_stuck_and_blocked_actions() {
    let r = run_scenario(&load_scenario(&scenario_path("numbered_skip_1.json")).unwrap());
    let s = r.stall.unwrap();
    let ids = |xs: &[&str]| xs.iter().map(|x| ActionId::from(*x)).collect::<Vec<_>>();
    assert_eq!(s.stuck, ids(&["1"]));
    assert_eq!(s.blocked, ids(&["3", "5", "6"]));
    assert_eq!(s.responsible.len(), 1);
    assert_eq!(s.responsible[0].as_str(), "Agent1");
}

#[test]
fn text_report_lists_the_essentials() {
    let r = run_scenario(&load_scenario(&scenario_path("lettered_partial_effect_e.json")).unwrap());
    let text = emit_report(&r, ReportFormat::Text);
    assert!(text.contains("terminal: stalled"));
    assert!(text.contains("violations: none"));
    assert!(text.contains("effect action e"));
    assert!(text.contains("stuck: [e]"));
    assert!(text.contains("blocked: [f, g]"));
}

#[test]
fn scenario_errors_are_collected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"plan":"nowhere.json","faults":"missing.json","stall_timeout_ticks":0}"#,
    )
    .unwrap();
    let errs = load_scenario(&dir.path().join("bad.json")).unwrap_err();
    assert_eq!(errs.len(), 3, "{errs:?}");
    assert!(errs.contains(&ScenarioError::StallTimeout));

    std::fs::write(dir.path().join("schema.json"), r#"{"plan":"x","surprise":true}"#).unwrap();
    let errs = load_scenario(&dir.path().join("schema.json")).unwrap_err();
    assert!(matches!(errs.as_slice(), [ScenarioError::Schema { .. }]));

    let plan = r#"{"agents":["oracle"],"predicates":[],"actions":[{"id":"x","agent":"oracle"}]}"#;
    std::fs::write(dir.path().join("reserved.json"), format!(r#"{{"plan":{plan}}}"#)).unwrap();
    let errs = load_scenario(&dir.path().join("reserved.json")).unwrap_err();
    assert!(matches!(errs.as_slice(), [ScenarioError::ReservedAgent(_)]));
}

#[test]
fn audit_log_verifies_and_catches_edits() {
    for mode in [Mode::Centralized, Mode::Decentralized] {
        let mut sc = load_scenario(&scenario_path("lettered_honest.json")).unwrap();
        sc.mode = mode;
        let artifacts = run_scenario_full(&sc);
        let records = parse_json_lines(&to_json_lines(&audit_records(&artifacts.ledger))).unwrap();
        let report = verify_audit_log(&records);
        assert!(report.ok(), "{mode}: {report:?}");
        assert_eq!(report.completions, 7);

        let mut edited = records.clone();
        let last_completion = edited
            .iter()
            .rposition(|r| r.events.iter().any(|e| e.name == "Action_Completed"))
            .unwrap();
        edited[last_completion].status = "rejected:effect".into();
        assert!(!verify_audit_log(&edited).ok(), "{mode}: status edit");

        let mut edited = records.clone();
        let sealed = edited.iter().position(|r| r.block_digest.is_some()).unwrap();
        edited[sealed].nonce += 1000;
        let v = verify_audit_log(&edited);
        assert!(!v.ok() && !v.digest_mismatches.is_empty(), "{mode}: nonce edit");
    }
}

#[test]
fn random_runs_verify_offline() {
    for seed in 0..10 {
        for mode in [Mode::Centralized, Mode::Decentralized] {
            let sc = random_scenario(6, 3, seed, mode, Some(BehaviorKind::OutOfOrder));
            let artifacts = run_scenario_full(&sc);
            let v = verify_audit_log(&audit_records(&artifacts.ledger));
            assert!(v.ok(), "seed {seed} {mode}: {v:?}");
        }
    }
}

#[test]
fn scenario_file_round_trips() {
    let sc = random_scenario(5, 2, 9, Mode::Decentralized, Some(BehaviorKind::SkipAction));
    let json = serde_json::to_string(&scenario_file(&sc)).unwrap();
    let back = build_scenario(serde_json::from_str(&json).unwrap(), std::path::Path::new("."), "x").unwrap();
    assert_eq!(back, sc);
    assert_eq!(run_scenario(&back), run_scenario(&sc));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn json_lines_report_round_trips(
        seed in 0u64..1000,
        n in 1usize..8,
        k in 1usize..4,
        kind in proptest::option::of(0usize..4),
        decentralized in any::<bool>(),
    ) {
        let mode = if decentralized { Mode::Decentralized } else { Mode::Centralized };
        let sc = random_scenario(n, k, seed, mode, kind.map(|i| BehaviorKind::ALL[i]));
        let r = run_scenario(&sc);
        let text = emit_report(&r, ReportFormat::JsonLines);
        prop_assert_eq!(parse_json_lines_report(&text).unwrap(), r.clone());
        prop_assert_eq!(emit_report(&run_scenario(&sc), ReportFormat::JsonLines), text);
    }

    #[test]
    fn violations_only_when_an_adversary_is_present(seed in 0u64..1000, n in 1usize..9, k in 1usize..5) {
        for mode in [Mode::Centralized, Mode::Decentralized] {
            let r = run_scenario(&random_scenario(n, k, seed, mode, None));
            prop_assert!(r.is_clean());
            prop_assert!(r.goal_satisfied);
            prop_assert!(brute_respects_deps(&r.trace, &random_scenario(n, k, seed, mode, None).plan, true));
        }
    }
}

#[test]
fn bundled_plans_have_the_expected_shape() {
    let lettered = load_scenario(&scenario_path("lettered_honest.json")).unwrap().plan;
    assert_eq!(lettered.agents.len(), 3);
    assert_eq!(lettered.actions.len(), 7);
    let owned = |agent: &str| {
        lettered
            .actions_of(&agent.into())
            .map(|a| a.id.to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(owned("Agent1"), ["a", "d", "f"]);
    assert_eq!(owned("Agent2"), ["b", "e"]);
    assert_eq!(owned("Agent3"), ["c", "g"]);

    let numbered = load_scenario(&scenario_path("numbered_dag.json")).unwrap().plan;
    let rows = contractplan::contracts::plan_sc::dag_rows(&numbered);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(ToString::to_string).collect())
        .collect();
    let expected: Vec<Vec<&str>> = vec![
        vec!["1"],
        vec!["2"],
        vec!["3", "1"],
        vec!["4", "2"],
        vec!["5", "2", "3"],
        vec!["6", "5"],
    ];
    assert_eq!(rows, expected);
}
