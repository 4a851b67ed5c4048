//! PlanActSC: one instance per agent in decentralized mode. Holds the agent's
//! local plan entries and a cache of completions it has been told about.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::pipeline::{ActionRecord, ActionStatus, Pipeline};
use super::{register, Abort, Caller, Contract, Env, EV_LIST_UPDATED};
use crate::ledger::{Address, Reason};
use crate::plan::{ActionId, LocalEntry};
use crate::world::ExecOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanActEntry {
    pub record: ActionRecord,
    pub in_set: BTreeSet<ActionId>,
    pub out_set: BTreeSet<ActionId>,
}

impl PlanActEntry {
    pub fn from_local(entry: &LocalEntry, record: ActionRecord) -> Self {
        Self {
            record,
            in_set: entry.in_set.clone(),
            out_set: entry.out_set.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanActState {
    pub deployer: String,
    pub owner: String,
    pub register: Option<Address>,
    pub in_sets: BTreeMap<ActionId, BTreeSet<ActionId>>,
    pub out_sets: BTreeMap<ActionId, BTreeSet<ActionId>>,
    pub local_completed: BTreeSet<ActionId>,
    pub pipeline: Pipeline,
}

impl PlanActState {
    pub fn new(deployer: &str, owner: String, oracle: Address, entries: Vec<PlanActEntry>) -> Result<Self, Abort> {
        let mut in_sets = BTreeMap::new();
        let mut out_sets = BTreeMap::new();
        let mut records = Vec::new();
        for e in entries {
            in_sets.insert(e.record.id.clone(), e.in_set);
            out_sets.insert(e.record.id.clone(), e.out_set);
            records.push(e.record);
        }
        Ok(Self {
            deployer: deployer.to_string(),
            owner,
            register: None,
            in_sets,
            out_sets,
            local_completed: BTreeSet::new(),
            pipeline: Pipeline::new(oracle, records)?,
        })
    }

    /// Hosted actions whose in-set is covered and that have not started.
    pub fn eligible(&self) -> Vec<ActionId> {
        self.in_sets
            .iter()
            .filter(|(a, ins)| ins.is_subset(&self.local_completed) && self.pipeline.status(a) == ActionStatus::Idle)
            .map(|(a, _)| a.clone())
            .collect()
    }

    fn note_completed(&mut self, env: &mut Env<'_>, me: Address, action: &ActionId) {
        if self.local_completed.insert(action.clone()) {
            env.emit(
                me,
                EV_LIST_UPDATED,
                vec![action.to_string(), self.local_completed.len().to_string()],
            );
        }
    }
}

pub fn set_register(env: &mut Env<'_>, target: Address, caller: &Caller, register: Address) -> Result<(), Abort> {
    let is_register = matches!(env.peek(&register), Some(Contract::Register(_)));
    env.with(target, |c, _| {
        let Contract::PlanAct(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        if *caller != Caller::Identity(s.deployer.clone()) {
            return Err(Abort::new(Reason::Auth).at(target));
        }
        if s.register.is_some() {
            return Err(Abort::new(Reason::AlreadySet).at(target));
        }
        if !is_register {
            return Err(Abort::new(Reason::NoContract).at(target));
        }
        s.register = Some(register);
        Ok(())
    })
}

pub fn execute(env: &mut Env<'_>, target: Address, caller: &Caller, action: &ActionId) -> Result<(), Abort> {
    env.with(target, |c, env| {
        let Contract::PlanAct(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        let fail = |reason| Abort::new(reason).at(target).action(action).initiator(caller);
        if *caller != Caller::Identity(s.owner.clone()) {
            return Err(fail(Reason::Auth));
        }
        let ins = s.in_sets.get(action).ok_or_else(|| fail(Reason::UnknownAction))?;
        if !ins.is_subset(&s.local_completed) {
            return Err(fail(Reason::Order));
        }
        s.pipeline.start(env, target, action, caller.to_string())
    })
}

/// Records that `action` completed. The claim is checked against the
/// hosting contract's on-ledger record. Returns the newly eligible actions.
pub fn update(env: &mut Env<'_>, target: Address, caller: &Caller, action: &ActionId) -> Result<Vec<ActionId>, Abort> {
    env.with(target, |c, env| {
        let Contract::PlanAct(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        let fail = |reason| Abort::new(reason).at(target).action(action).initiator(caller);
        let register = s.register.ok_or_else(|| fail(Reason::NoMapping))?;
        let host = register::lookup(env, register, action).map_err(|_| fail(Reason::NoMapping))?;
        let (owner, completed) = if host == target {
            (s.owner.clone(), s.pipeline.is_completed(action))
        } else {
            match env.peek(&host) {
                Some(Contract::PlanAct(h)) => (h.owner.clone(), h.pipeline.is_completed(action)),
                _ => return Err(fail(Reason::NoContract)),
            }
        };
        if *caller != Caller::Identity(owner) && *caller != Caller::Contract(host) {
            return Err(fail(Reason::Auth));
        }
        if !completed {
            return Err(fail(Reason::FalseCompletion));
        }
        let before: BTreeSet<ActionId> = s.eligible().into_iter().collect();
        s.note_completed(env, target, action);
        Ok(s.eligible().into_iter().filter(|a| !before.contains(a)).collect())
    })
}

pub(crate) fn on_oracle_result(
    env: &mut Env<'_>,
    me: Address,
    query: u64,
    values: &BTreeMap<String, bool>,
    outcome: Option<ExecOutcome>,
) -> Result<(), Abort> {
    env.with(me, |c, env| {
        let Contract::PlanAct(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(me));
        };
        if let Some(done) = s.pipeline.on_result(env, me, query, values, outcome)? {
            s.note_completed(env, me, &done);
        }
        Ok(())
    })
}
