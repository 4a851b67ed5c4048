//! Offline verification of an exported audit log: chain integrity, replay
//! against fresh contract state, and completion ordering.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::contracts::{Call, ContractInit, EV_COMPLETED};
use crate::ledger::audit::{digest_mismatches, rebuild_blocks, AuditRecord};
use crate::ledger::{verify_blocks, Ledger};
use crate::plan::ActionId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub records: usize,
    pub blocks: usize,
    pub chain_valid: bool,
    /// Records whose stored block digest disagrees with the rebuilt chain.
    pub digest_mismatches: Vec<u64>,
    /// Records whose replayed status or events differ from the log.
    pub replay_mismatches: Vec<u64>,
    /// Completions recorded before one of their dependencies.
    pub ordering_violations: Vec<ActionId>,
    pub completions: usize,
    pub error: Option<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.error.is_none()
            && self.chain_valid
            && self.digest_mismatches.is_empty()
            && self.replay_mismatches.is_empty()
            && self.ordering_violations.is_empty()
    }
}

/// Dependencies as declared in accepted deployment transactions: plan rows
/// in centralized mode, local in-sets in decentralized mode.
pub fn deps_from_log(records: &[AuditRecord]) -> BTreeMap<ActionId, BTreeSet<ActionId>> {
    let mut deps: BTreeMap<ActionId, BTreeSet<ActionId>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == "accepted") {
        let Ok(Call::Deploy(init)) = Call::decode(&r.op, &r.payload) else {
            continue;
        };
        match init {
            ContractInit::Plan { rows, .. } => {
                for row in rows {
                    if let Some((head, tail)) = row.split_first() {
                        deps.entry(head.clone()).or_default().extend(tail.iter().cloned());
                    }
                }
            }
            ContractInit::PlanAct { entries, .. } => {
                for e in entries {
                    deps.entry(e.record.id.clone()).or_default().extend(e.in_set);
                }
            }
            _ => {}
        }
    }
    deps
}

/// Actions whose completion event precedes a completion of one of their
/// dependencies, or that complete twice.
pub fn check_completion_order(records: &[AuditRecord], deps: &BTreeMap<ActionId, BTreeSet<ActionId>>) -> Vec<ActionId> {
    let mut done = BTreeSet::new();
    let mut bad = Vec::new();
    let events = records
        .iter()
        .filter(|r| r.status == "accepted")
        .flat_map(|r| r.events.iter())
        .filter(|e| e.name == EV_COMPLETED);
    for ev in events {
        let a = ActionId::new(ev.args.first().cloned().unwrap_or_default());
        let ready = deps.get(&a).is_none_or(|ds| ds.is_subset(&done));
        if !ready || !done.insert(a.clone()) {
            bad.push(a);
        }
    }
    bad
}

pub fn verify_audit_log(records: &[AuditRecord]) -> VerifyReport {
    let mut report = VerifyReport {
        records: records.len(),
        blocks: 0,
        chain_valid: false,
        digest_mismatches: Vec::new(),
        replay_mismatches: Vec::new(),
        ordering_violations: Vec::new(),
        completions: 0,
        error: None,
    };
    let blocks = match rebuild_blocks(records) {
        Ok(b) => b,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.blocks = blocks.len();
    report.digest_mismatches = digest_mismatches(records, &blocks);

    let mut ledger = Ledger::for_replay();
    for r in records {
        let Some(b) = r.block else { continue };
        while (ledger.blocks().len() as u64) < b {
            ledger.seal_block();
        }
        let receipt = ledger.submit(r.transaction());
        if receipt.status.to_string() != r.status || receipt.events != r.events {
            report.replay_mismatches.push(r.seq);
        }
    }
    while ledger.blocks().len() < blocks.len() {
        ledger.seal_block();
    }
    let replayed = &ledger.blocks()[..blocks.len().min(ledger.blocks().len())];
    report.chain_valid = verify_blocks(&blocks)
        && replayed.len() == blocks.len()
        && replayed.iter().zip(&blocks).all(|(x, y)| x.digest == y.digest);

    let deps = deps_from_log(records);
    report.ordering_violations = check_completion_order(records, &deps);
    report.completions = records
        .iter()
        .filter(|r| r.status == "accepted")
        .flat_map(|r| r.events.iter())
        .filter(|e| e.name == EV_COMPLETED)
        .count();
    report
}
