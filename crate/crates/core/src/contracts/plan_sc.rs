//! PlanSC: the centralized scheduler's view of the plan as a list of rows,
//! each `[action, ...unmet dependencies]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::pipeline::ActionStatus;
use super::{act, register, Abort, Caller, Contract, Env, EV_LIST_UPDATED};
use crate::ledger::{Address, Reason};
use crate::plan::{ActionId, Plan};

/// One row per action in declaration order: the action followed by its
/// dependencies.
pub fn dag_rows(plan: &Plan) -> Vec<Vec<ActionId>> {
    plan.actions
        .iter()
        .map(|a| std::iter::once(a.id.clone()).chain(plan.dep(&a.id)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DispatchVerdict {
    Dispatched { action: ActionId },
    Idle,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanState {
    pub register: Address,
    pub dag: Vec<Vec<ActionId>>,
    /// Row heads in declaration order.
    pub actions: Vec<ActionId>,
    pub action_count: u64,
    pub completed_list_length: u64,
    pub completed: Vec<ActionId>,
}

impl PlanState {
    pub fn new(register: Address, rows: Vec<Vec<ActionId>>) -> Result<Self, Abort> {
        let mut heads = BTreeSet::new();
        let mut actions = Vec::new();
        for row in &rows {
            let head = row.first().ok_or_else(|| Abort::new(Reason::InvalidPlan))?;
            if !heads.insert(head.clone()) {
                return Err(Abort::new(Reason::InvalidPlan).action(head));
            }
            actions.push(head.clone());
        }
        for row in &rows {
            if row[1..].iter().any(|d| !heads.contains(d) || *d == row[0]) {
                return Err(Abort::new(Reason::InvalidPlan).action(&row[0]));
            }
        }
        Ok(Self {
            register,
            action_count: actions.len() as u64,
            actions,
            dag: rows,
            completed_list_length: 0,
            completed: Vec::new(),
        })
    }

    fn is_completed(&self, action: &ActionId) -> bool {
        self.completed.contains(action)
    }

    fn record_completion(&mut self, env: &mut Env<'_>, me: Address, action: &ActionId) {
        for row in &mut self.dag {
            row.retain(|a| a != action);
        }
        self.completed.push(action.clone());
        self.completed_list_length = self.completed.len() as u64;
        env.emit(
            me,
            EV_LIST_UPDATED,
            vec![action.to_string(), self.completed_list_length.to_string()],
        );
    }

    /// Pulls completions recorded by the hosting contracts into the rows.
    fn sync(&mut self, env: &mut Env<'_>, me: Address) -> Result<(), Abort> {
        for action in self.actions.clone() {
            if self.is_completed(&action) {
                continue;
            }
            if host_status(env, self.register, &action)? == ActionStatus::Completed {
                self.record_completion(env, me, &action);
            }
        }
        Ok(())
    }
}

fn host_status(env: &Env<'_>, register: Address, action: &ActionId) -> Result<ActionStatus, Abort> {
    let host = register::lookup(env, register, action)?;
    env.peek(&host)
        .and_then(Contract::pipeline)
        .map(|p| p.status(action))
        .ok_or_else(|| Abort::new(Reason::NoContract).at(host).action(action))
}

/// One scheduling step: sync completions, then dispatch the first ready row
/// whose action is not already running.
pub fn dispatch_next(env: &mut Env<'_>, target: Address) -> Result<DispatchVerdict, Abort> {
    env.with(target, |c, env| {
        let Contract::Plan(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        s.sync(env, target)?;
        if s.completed_list_length == s.action_count {
            return Ok(DispatchVerdict::Done);
        }
        let mut candidate = None;
        for row in &s.dag {
            if let [head] = row.as_slice() {
                if host_status(env, s.register, head)? == ActionStatus::Idle {
                    candidate = Some(head.clone());
                    break;
                }
            }
        }
        let Some(head) = candidate else {
            return Ok(DispatchVerdict::Idle);
        };
        let host = register::lookup(env, s.register, &head)?;
        act::execute(env, host, &Caller::Contract(target), &head)?;
        Ok(DispatchVerdict::Dispatched { action: head })
    })
}

/// Completion notification from an agent. Accepted only when the hosting
/// contract has the completion on record.
pub fn report_completion(env: &mut Env<'_>, target: Address, caller: &Caller, action: &ActionId) -> Result<(), Abort> {
    env.with(target, |c, env| {
        let Contract::Plan(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        if !s.actions.contains(action) {
            return Err(Abort::new(Reason::UnknownAction)
                .at(target)
                .action(action)
                .initiator(caller));
        }
        if host_status(env, s.register, action)? != ActionStatus::Completed {
            return Err(Abort::new(Reason::FalseCompletion)
                .at(target)
                .action(action)
                .initiator(caller));
        }
        s.sync(env, target)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<ActionId> {
        xs.iter().map(|x| ActionId::from(*x)).collect()
    }

    #[test]
    fn init_rejects_malformed_rows() {
        let reg = Address::ZERO;
        assert!(PlanState::new(reg, vec![ids(&["1"]), ids(&["1"])]).is_err());
        assert!(PlanState::new(reg, vec![ids(&["1", "9"])]).is_err());
        assert!(PlanState::new(reg, vec![vec![]]).is_err());
        assert!(PlanState::new(reg, vec![ids(&["1", "1"])]).is_err());
        let s = PlanState::new(reg, vec![ids(&["1"]), ids(&["2", "1"])]).unwrap();
        assert_eq!(s.action_count, 2);
        assert_eq!(s.completed_list_length, 0);
        let empty = PlanState::new(reg, vec![]).unwrap();
        assert_eq!(empty.action_count, 0);
    }

    #[test]
    fn verdict_json_shape() {
        let v = DispatchVerdict::Dispatched { action: "3".into() };
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"verdict":"dispatched","action":"3"}"#
        );
        assert_eq!(
            serde_json::to_string(&DispatchVerdict::Idle).unwrap(),
            r#"{"verdict":"idle"}"#
        );
    }
}
