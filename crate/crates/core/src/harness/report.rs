//! Run reports and their text / JSON-lines renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Mode;
use crate::ledger::audit::AuditRecord;
use crate::ledger::Reason;
use crate::plan::{ActionId, AgentId, Trace, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Done,
    Stalled,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// An action the agent owns was never carried out.
    SkippedAction,
    /// Execution requested before the action's dependencies completed.
    OutOfOrder,
    /// Execution requested through a path the agent is not allowed to use.
    Unauthorized,
    /// Execution requested while the precondition was false.
    PreconditionFalse,
    /// Completion claimed for an action with no completion on record.
    FalseCompletion,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::SkippedAction => "skipped_action",
            ViolationKind::OutOfOrder => "out_of_order",
            ViolationKind::Unauthorized => "unauthorized",
            ViolationKind::PreconditionFalse => "precondition_false",
            ViolationKind::FalseCompletion => "false_completion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    /// A rejected transaction.
    Receipt { seq: u64, reason: Reason },
    /// The stall detector fired at this tick.
    Stall { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub agent: AgentId,
    pub kind: ViolationKind,
    pub action: Option<ActionId>,
    pub evidence: Evidence,
}

/// A rejection that is not attributable to agent misbehavior: device
/// failures, unverified effects, environmental precondition failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub action: Option<ActionId>,
    pub agent: Option<AgentId>,
    pub reason: Reason,
    pub receipt: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallReport {
    pub tick: u64,
    /// Incomplete actions whose dependencies are all complete.
    pub stuck: Vec<ActionId>,
    /// Incomplete actions waiting on a stuck action.
    pub blocked: Vec<ActionId>,
    pub responsible: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub terminal: Terminal,
    pub ticks: u64,
    pub trace: Trace,
    pub violations: Vec<Violation>,
    pub faults: Vec<Fault>,
    pub stall: Option<StallReport>,
    pub goal_satisfied: bool,
    pub chain_valid: bool,
    pub final_world: BTreeMap<String, bool>,
    pub receipts: Vec<AuditRecord>,
}

impl RunReport {
    pub fn completed(&self) -> Vec<ActionId> {
        self.trace.actions()
    }

    pub fn violating_agents(&self) -> Vec<AgentId> {
        let mut agents: Vec<AgentId> = self.violations.iter().map(|v| v.agent.clone()).collect();
        agents.sort();
        agents.dedup();
        agents
    }

    /// Done with nothing to report.
    pub fn is_clean(&self) -> bool {
        self.terminal == Terminal::Done && self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    JsonLines,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Summary {
    scenario: String,
    mode: Mode,
    seed: u64,
    terminal: Terminal,
    ticks: u64,
    goal_satisfied: bool,
    chain_valid: bool,
    final_world: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Summary(Summary),
    Trace(TraceEntry),
    Violation(Violation),
    Fault(Fault),
    Stall(StallReport),
    Receipt(AuditRecord),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing summary record")]
    MissingSummary,
    #[error("more than one {0} record")]
    Repeated(&'static str),
}

pub fn emit_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => text_report(report),
        ReportFormat::JsonLines => json_lines_report(report),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn text_report(r: &RunReport) -> String {
    let mut out = String::new();
    let terminal = match r.terminal {
        Terminal::Done => "done",
        Terminal::Stalled => "stalled",
        Terminal::Aborted => "aborted",
    };
    let _ = writeln!(out, "scenario: {} ({}, seed {})", r.scenario, r.mode, r.seed);
    let _ = writeln!(out, "terminal: {terminal} after {} ticks", r.ticks);
    let _ = writeln!(out, "goal satisfied: {}", yes_no(r.goal_satisfied));
    let _ = writeln!(out, "chain valid: {}", yes_no(r.chain_valid));
    if r.trace.entries.is_empty() {
        let _ = writeln!(out, "trace: empty");
    } else {
        let _ = writeln!(out, "trace:");
        for e in &r.trace.entries {
            let _ = writeln!(
                out,
                "  {} dispatched@{} completed@{}",
                e.action, e.dispatched, e.completed
            );
        }
    }
    if r.violations.is_empty() {
        let _ = writeln!(out, "violations: none");
    } else {
        let _ = writeln!(out, "violations:");
        for v in &r.violations {
            let action = v.action.as_ref().map_or_else(String::new, |a| format!(" on {a}"));
            let evidence = match &v.evidence {
                Evidence::Receipt { seq, reason } => format!("receipt #{seq} rejected:{reason}"),
                Evidence::Stall { tick } => format!("stall at tick {tick}"),
            };
            let _ = writeln!(out, "  {} {}{action} ({evidence})", v.agent, v.kind.as_str());
        }
    }
    if r.faults.is_empty() {
        let _ = writeln!(out, "faults: none");
    } else {
        let _ = writeln!(out, "faults:");
        for f in &r.faults {
            let action = f.action.as_ref().map_or("-".to_string(), ToString::to_string);
            let agent = f.agent.as_ref().map_or("-".to_string(), ToString::to_string);
            let _ = writeln!(
                out,
                "  {} action {action} agent {agent} (receipt #{})",
                f.reason, f.receipt
            );
        }
    }
    if let Some(s) = &r.stall {
        let _ = writeln!(out, "stall at tick {}:", s.tick);
        let _ = writeln!(out, "  stuck: [{}]", join(&s.stuck));
        let _ = writeln!(out, "  blocked: [{}]", join(&s.blocked));
        let _ = writeln!(out, "  responsible: [{}]", join(&s.responsible));
    }
    let _ = writeln!(out, "receipts: {}", r.receipts.len());
    out
}

fn json_lines_report(r: &RunReport) -> String {
    let mut records = vec![Record::Summary(Summary {
        scenario: r.scenario.clone(),
        mode: r.mode,
        seed: r.seed,
        terminal: r.terminal,
        ticks: r.ticks,
        goal_satisfied: r.goal_satisfied,
        chain_valid: r.chain_valid,
        final_world: r.final_world.clone(),
    })];
    records.extend(r.trace.entries.iter().cloned().map(Record::Trace));
    records.extend(r.violations.iter().cloned().map(Record::Violation));
    records.extend(r.faults.iter().cloned().map(Record::Fault));
    records.extend(r.stall.iter().cloned().map(Record::Stall));
    records.extend(r.receipts.iter().cloned().map(Record::Receipt));
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(&rec).expect("report records serialize"));
        out.push('\n');
    }
    out
}

/// Parses the JSON-lines form back into a report.
pub fn parse_json_lines_report(text: &str) -> Result<RunReport, ReportParseError> {
    let mut summary = None;
    let mut trace = Vec::new();
    let mut violations = Vec::new();
    let mut faults = Vec::new();
    let mut stall = None;
    let mut receipts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| ReportParseError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        match rec {
            Record::Summary(s) => {
                if summary.replace(s).is_some() {
                    return Err(ReportParseError::Repeated("summary"));
                }
            }
            Record::Trace(t) => trace.push(t),
            Record::Violation(v) => violations.push(v),
            Record::Fault(f) => faults.push(f),
            Record::Stall(s) => {
                if stall.replace(s).is_some() {
                    return Err(ReportParseError::Repeated("stall"));
                }
            }
            Record::Receipt(r) => receipts.push(r),
        }
    }
    let s = summary.ok_or(ReportParseError::MissingSummary)?;
    Ok(RunReport {
        scenario: s.scenario,
        mode: s.mode,
        seed: s.seed,
        terminal: s.terminal,
        ticks: s.ticks,
        trace: Trace { entries: trace },
        violations,
        faults,
        stall,
        goal_satisfied: s.goal_satisfied,
        chain_valid: s.chain_valid,
        final_world: s.final_world,
        receipts,
    })
}
