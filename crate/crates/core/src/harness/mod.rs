//! Scenario loading, the simulation loop, reporting, and offline checks.

pub mod random;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod verify;

pub use random::{random_plan, random_scenario, BehaviorKind};
pub use report::{
    emit_report, parse_json_lines_report, Evidence, Fault, ReportFormat, RunReport, StallReport, Terminal, Violation,
    ViolationKind,
};
pub use runner::{run_scenario, run_scenario_full, RunArtifacts};
pub use scenario::{build_scenario, load_scenario, Scenario, ScenarioError, ScenarioFile, ViolationPolicy};
pub use verify::{verify_audit_log, VerifyReport};
