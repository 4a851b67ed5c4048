//! Independent oracles shared by the integration tests. None of these call
//! into the library's own ordering or enabling logic.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use contractplan::harness::Scenario;
use contractplan::ledger::audit::AuditRecord;
use contractplan::plan::{Plan, Trace};

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn scenario_path(name: &str) -> PathBuf {
    scenarios_dir().join(name)
}

fn dep_pairs(plan: &Plan) -> Vec<(String, String)> {
    plan.deps
        .iter()
        .map(|(b, a)| (b.as_str().to_string(), a.as_str().to_string()))
        .collect()
}

/// Checks every dependency pair against the trace positions. With
/// `complete`, every plan action must appear exactly once; otherwise only the
/// traced prefix is checked and each traced action's dependencies must be
/// traced too.
pub fn brute_respects_deps(trace: &Trace, plan: &Plan, complete: bool) -> bool {
    let mut seen: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for e in &trace.entries {
        if e.dispatched >= e.completed {
            return false;
        }
        if seen
            .insert(e.action.as_str().to_string(), (e.dispatched, e.completed))
            .is_some()
        {
            return false;
        }
    }
    let all: BTreeSet<String> = plan.actions.iter().map(|a| a.id.as_str().to_string()).collect();
    if seen.keys().any(|k| !all.contains(k)) {
        return false;
    }
    if complete && seen.len() != all.len() {
        return false;
    }
    for (b, a) in dep_pairs(plan) {
        match (seen.get(&b), seen.get(&a)) {
            (Some(&(_, done_b)), Some(&(start_a, _))) if done_b >= start_a => return false,
            (None, Some(_)) => return false,
            _ => {}
        }
    }
    true
}

/// Completion events in log order must each find all their dependencies
/// already completed, and no action may complete twice.
pub fn audit_completions_ordered(records: &[AuditRecord], plan: &Plan) -> bool {
    let pairs = dep_pairs(plan);
    let mut done: BTreeSet<String> = BTreeSet::new();
    for r in records.iter().filter(|r| r.status == "accepted") {
        for ev in r.events.iter().filter(|e| e.name == "Action_Completed") {
            let a = ev.args[0].clone();
            if pairs.iter().any(|(b, x)| *x == a && !done.contains(b)) {
                return false;
            }
            if !done.insert(a) {
                return false;
            }
        }
    }
    true
}

pub fn completion_events(records: &[AuditRecord]) -> Vec<String> {
    records
        .iter()
        .filter(|r| r.status == "accepted")
        .flat_map(|r| r.events.iter())
        .filter(|e| e.name == "Action_Completed")
        .map(|e| e.args[0].clone())
        .collect()
}

/// Replays the plan contract's loop of the plan contract: sweep rows
/// in order, run any row with a single entry, and strike that action from
/// every row.
pub fn reference_dispatch_order(rows: &[Vec<&str>]) -> Vec<String> {
    let mut rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
    let total = rows.len();
    let mut order = Vec::new();
    let mut guard = 0;
    while order.len() != total && guard < total * total + 1 {
        guard += 1;
        for x in 0..rows.len() {
            if rows[x].len() == 1 {
                let current = rows[x][0].clone();
                order.push(current.clone());
                for row in rows.iter_mut() {
                    row.retain(|a| *a != current);
                }
            }
        }
    }
    order
}

/// Whether the scenario's single adversary can deviate at all, judged from
/// the plan text alone.
pub fn injection_possible(sc: &Scenario) -> bool {
    use contractplan::agents::AgentBehavior::*;
    let Some(b) = sc.behaviors.values().next() else {
        return false;
    };
    match b {
        Honest => false,
        SkipAction(_) | FalseCompletion(_) => true,
        OutOfOrder(t) => sc.plan.deps.iter().any(|(_, a)| a == t),
        IgnorePrecondition(t) => {
            let spec = sc.plan.actions.iter().find(|a| &a.id == t).unwrap();
            spec.precond
                .iter()
                .any(|l| sc.plan.init.contains(&l.predicate) != l.positive)
        }
    }
}
