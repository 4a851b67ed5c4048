//! The precondition → actuation → effect pipeline shared by the act-style
//! contracts. Each stage waits for an oracle callback, so an execution spans
//! at least three transactions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::oracle::{self, QueryKind};
use super::{Abort, Env, EV_COMPLETED, EV_DISPATCHED};
use crate::ledger::{Address, Reason};
use crate::plan::{ActionId, ActionSpec, AgentId, Literal};
use crate::world::ExecOutcome;

/// What a contract stores about one action it hosts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub id: ActionId,
    pub uri: String,
    pub agent: AgentId,
    pub precond: Vec<Literal>,
    pub effect: Vec<Literal>,
}

impl ActionRecord {
    pub fn from_spec(spec: &ActionSpec) -> Self {
        Self {
            id: spec.id.clone(),
            uri: format!("device://{}/{}", spec.agent, spec.id),
            agent: spec.agent.clone(),
            precond: spec.precond.clone(),
            effect: spec.effect.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Idle,
    InFlight,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    AwaitPrecond { query: u64 },
    AwaitEffect { query: u64 },
}

impl Stage {
    pub fn query(&self) -> u64 {
        match self {
            Stage::AwaitPrecond { query } | Stage::AwaitEffect { query } => *query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub action: ActionId,
    /// Caller that started the execution: an identity id or a contract address.
    pub initiator: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pipeline {
    pub oracle: Address,
    pub actions: BTreeMap<ActionId, ActionRecord>,
    pub executions: BTreeMap<ActionId, Execution>,
    /// Completions in the order they were recorded; append-only.
    pub completed: Vec<ActionId>,
}

impl Pipeline {
    pub fn new(oracle: Address, records: Vec<ActionRecord>) -> Result<Self, Abort> {
        let mut actions = BTreeMap::new();
        for r in records {
            if actions.insert(r.id.clone(), r).is_some() {
                return Err(Abort::new(Reason::InvalidPlan));
            }
        }
        Ok(Self {
            oracle,
            actions,
            executions: BTreeMap::new(),
            completed: Vec::new(),
        })
    }

    pub fn hosts(&self, action: &ActionId) -> bool {
        self.actions.contains_key(action)
    }

    pub fn status(&self, action: &ActionId) -> ActionStatus {
        if self.completed.contains(action) {
            ActionStatus::Completed
        } else if self.executions.contains_key(action) {
            ActionStatus::InFlight
        } else {
            ActionStatus::Idle
        }
    }

    pub fn is_completed(&self, action: &ActionId) -> bool {
        self.completed.contains(action)
    }

    /// Starts an execution by asking the oracle for the precondition values.
    pub fn start(&mut self, env: &mut Env<'_>, me: Address, action: &ActionId, initiator: String) -> Result<(), Abort> {
        let fail = |reason| Abort::new(reason).at(me).action(action).initiator(&initiator);
        let record = self.actions.get(action).ok_or_else(|| fail(Reason::UnknownAction))?;
        match self.status(action) {
            ActionStatus::Completed => return Err(fail(Reason::Duplicate)),
            ActionStatus::InFlight => return Err(fail(Reason::InFlight)),
            ActionStatus::Idle => {}
        }
        let predicates = predicates_of(&record.precond);
        let query = oracle::query(env, self.oracle, me, predicates, QueryKind::Read)?;
        self.executions.insert(
            action.clone(),
            Execution {
                action: action.clone(),
                initiator: initiator.clone(),
                stage: Stage::AwaitPrecond { query },
            },
        );
        env.emit(me, EV_DISPATCHED, vec![action.to_string(), initiator]);
        Ok(())
    }

    /// Consumes an oracle result. Returns the action when it completes.
    pub fn on_result(
        &mut self,
        env: &mut Env<'_>,
        me: Address,
        query: u64,
        values: &BTreeMap<String, bool>,
        outcome: Option<ExecOutcome>,
    ) -> Result<Option<ActionId>, Abort> {
        let exec = self
            .executions
            .values()
            .find(|e| e.stage.query() == query)
            .cloned()
            .ok_or_else(|| Abort::new(Reason::UnknownQuery).at(me))?;
        let fail = |reason| {
            Abort::new(reason)
                .at(me)
                .action(&exec.action)
                .initiator(&exec.initiator)
        };
        let record = &self.actions[&exec.action];
        match exec.stage {
            Stage::AwaitPrecond { .. } => {
                if !literals_hold(&record.precond, values) {
                    return Err(fail(Reason::Precond));
                }
                let kind = QueryKind::Actuate {
                    action: record.id.clone(),
                    agent: record.agent.clone(),
                    uri: record.uri.clone(),
                };
                let predicates = predicates_of(&record.effect);
                let next = oracle::query(env, self.oracle, me, predicates, kind)?;
                if let Some(e) = self.executions.get_mut(&exec.action) {
                    e.stage = Stage::AwaitEffect { query: next };
                }
                Ok(None)
            }
            Stage::AwaitEffect { .. } => {
                if outcome != Some(ExecOutcome::Succeeded) {
                    return Err(fail(Reason::Actuation));
                }
                if !literals_hold(&record.effect, values) {
                    return Err(fail(Reason::Effect));
                }
                self.executions.remove(&exec.action);
                self.completed.push(exec.action.clone());
                env.emit(me, EV_COMPLETED, vec![exec.action.to_string()]);
                Ok(Some(exec.action))
            }
        }
    }
}

fn predicates_of(literals: &[Literal]) -> Vec<String> {
    let mut out: Vec<String> = literals.iter().map(|l| l.predicate.clone()).collect();
    out.sort();
    out.dedup();
    out
}

/// Literal-by-literal comparison against oracle-reported values. A predicate
/// missing from the report counts as a mismatch.
pub fn literals_hold(literals: &[Literal], values: &BTreeMap<String, bool>) -> bool {
    literals
        .iter()
        .all(|l| values.get(&l.predicate).is_some_and(|v| l.holds(*v)))
}
