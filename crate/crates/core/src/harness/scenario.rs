//! Scenario files: plan, fault script, mode, agent behaviors, seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentBehavior, Mode};
use crate::plan::{validate_plan, ActionId, AgentId, Plan, PlanDocument, PlanViolation};
use crate::world::{OutcomeScript, ScriptEntry, WorldError};

/// Identities the harness reserves for itself.
pub const RESERVED_IDS: [&str; 3] = ["deployer", "oracle", "scheduler"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationPolicy {
    /// Stop the run at the first detected violation.
    #[default]
    Abort,
    /// Record violations and keep executing.
    Continue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanSource {
    Path(String),
    Inline(PlanDocument),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FaultSource {
    Path(String),
    Inline(BTreeMap<ActionId, ScriptEntry>),
}

/// A scenario file as written on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plan: PlanSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<FaultSource>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub behaviors: BTreeMap<AgentId, AgentBehavior>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_timeout_ticks: Option<u64>,
    #[serde(default)]
    pub on_violation: ViolationPolicy,
}

fn default_mode() -> Mode {
    Mode::Centralized
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub plan: Plan,
    pub script: OutcomeScript,
    pub mode: Mode,
    pub behaviors: BTreeMap<AgentId, AgentBehavior>,
    pub seed: u64,
    pub stall_timeout_ticks: u64,
    pub on_violation: ViolationPolicy,
}

impl Scenario {
    /// An all-honest, nominal scenario over `plan`.
    pub fn honest(name: impl Into<String>, plan: Plan, mode: Mode, seed: u64) -> Self {
        let stall_timeout_ticks = default_stall_timeout(&plan);
        Self {
            name: name.into(),
            plan,
            script: OutcomeScript::default(),
            mode,
            behaviors: BTreeMap::new(),
            seed,
            stall_timeout_ticks,
            on_violation: ViolationPolicy::Abort,
        }
    }

    pub fn behavior(&self, agent: &AgentId) -> AgentBehavior {
        self.behaviors.get(agent).cloned().unwrap_or_default()
    }
}

pub fn default_stall_timeout(plan: &Plan) -> u64 {
    (10 * plan.actions.len() as u64).max(1)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("plan: {0}")]
    Plan(PlanViolation),
    #[error("faults: {0}")]
    Fault(WorldError),
    #[error("behavior for `{agent}`: {problem}")]
    Behavior { agent: AgentId, problem: String },
    #[error("agent id `{0}` is reserved")]
    ReservedAgent(AgentId),
    #[error("stall_timeout_ticks must be at least 1")]
    StallTimeout,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Vec<ScenarioError>> {
    let text = fs::read_to_string(path).map_err(|e| {
        vec![ScenarioError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }]
    })?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| {
        vec![ScenarioError::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        }]
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let default_name = path
        .file_stem()
        .map_or_else(|| "scenario".to_string(), |s| s.to_string_lossy().into_owned());
    build_scenario(file, base, &default_name)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Resolves file references against `base` and validates everything,
/// collecting every problem found.
pub fn build_scenario(file: ScenarioFile, base: &Path, default_name: &str) -> Result<Scenario, Vec<ScenarioError>> {
    let mut errors = Vec::new();

    let plan_doc = match file.plan {
        PlanSource::Inline(doc) => Some(doc),
        PlanSource::Path(p) => read_json::<PlanDocument>(&base.join(p))
            .map_err(|e| errors.push(e))
            .ok(),
    };
    let fault_entries = match file.faults {
        None => Some(BTreeMap::new()),
        Some(FaultSource::Inline(m)) => Some(m),
        Some(FaultSource::Path(p)) => read_json::<BTreeMap<ActionId, ScriptEntry>>(&base.join(p))
            .map_err(|e| errors.push(e))
            .ok(),
    };
    if file.stall_timeout_ticks == Some(0) {
        errors.push(ScenarioError::StallTimeout);
    }

    let Some(doc) = plan_doc else {
        return Err(errors);
    };
    let plan = Plan::from(doc);
    let violations = validate_plan(&plan);
    let plan_ok = violations.is_empty();
    errors.extend(violations.into_iter().map(ScenarioError::Plan));

    for agent in &plan.agents {
        if RESERVED_IDS.contains(&agent.as_str()) {
            errors.push(ScenarioError::ReservedAgent(agent.clone()));
        }
    }
    for (agent, behavior) in &file.behaviors {
        if !plan.agents.contains(agent) {
            errors.push(ScenarioError::Behavior {
                agent: agent.clone(),
                problem: "agent is not declared in the plan".to_string(),
            });
            continue;
        }
        if let Some(target) = behavior.target() {
            match plan.owner(target) {
                None => errors.push(ScenarioError::Behavior {
                    agent: agent.clone(),
                    problem: format!("target `{target}` is not a plan action"),
                }),
                Some(owner) if owner != agent => errors.push(ScenarioError::Behavior {
                    agent: agent.clone(),
                    problem: format!("target `{target}` belongs to `{owner}`"),
                }),
                Some(_) => {}
            }
        }
    }

    let script = match fault_entries.map(|m| OutcomeScript::from_entries(m, &plan)) {
        Some(Ok(s)) => Some(s),
        Some(Err(es)) => {
            errors.extend(es.into_iter().map(ScenarioError::Fault));
            None
        }
        None => None,
    };

    match script {
        Some(script) if errors.is_empty() && plan_ok => Ok(Scenario {
            name: file.name.unwrap_or_else(|| default_name.to_string()),
            stall_timeout_ticks: file.stall_timeout_ticks.unwrap_or_else(|| default_stall_timeout(&plan)),
            plan,
            script,
            mode: file.mode,
            behaviors: file.behaviors,
            seed: file.seed,
            on_violation: file.on_violation,
        }),
        _ => Err(errors),
    }
}
