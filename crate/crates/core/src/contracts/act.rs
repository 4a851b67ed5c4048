//! ActSC: hosts one agent's actions in centralized mode. Only the plan
//! contract registered as dispatcher may start an execution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pipeline::{ActionRecord, Pipeline};
use super::{Abort, Caller, Contract, Env};
use crate::ledger::{Address, Reason};
use crate::plan::ActionId;
use crate::world::ExecOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActState {
    pub deployer: String,
    pub dispatcher: Option<Address>,
    pub pipeline: Pipeline,
}

impl ActState {
    pub fn new(deployer: &str, oracle: Address, actions: Vec<ActionRecord>) -> Result<Self, Abort> {
        Ok(Self {
            deployer: deployer.to_string(),
            dispatcher: None,
            pipeline: Pipeline::new(oracle, actions)?,
        })
    }
}

pub fn set_dispatcher(env: &mut Env<'_>, target: Address, caller: &Caller, dispatcher: Address) -> Result<(), Abort> {
    let is_plan = matches!(env.peek(&dispatcher), Some(Contract::Plan(_)));
    env.with(target, |c, _| {
        let Contract::Act(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        if *caller != Caller::Identity(s.deployer.clone()) {
            return Err(Abort::new(Reason::Auth).at(target));
        }
        if s.dispatcher.is_some() {
            return Err(Abort::new(Reason::AlreadySet).at(target));
        }
        if !is_plan {
            return Err(Abort::new(Reason::NoContract).at(target));
        }
        s.dispatcher = Some(dispatcher);
        Ok(())
    })
}

pub fn execute(env: &mut Env<'_>, target: Address, caller: &Caller, action: &ActionId) -> Result<(), Abort> {
    env.with(target, |c, env| {
        let Contract::Act(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        let authorized = s.dispatcher.is_some_and(|d| *caller == Caller::Contract(d));
        if !authorized {
            return Err(Abort::new(Reason::Auth).at(target).action(action).initiator(caller));
        }
        s.pipeline.start(env, target, action, caller.to_string())
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
        let Contract::Act(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(me));
        };
        s.pipeline.on_result(env, me, query, values, outcome).map(|_| ())
    })
}
