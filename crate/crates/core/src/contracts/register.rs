//! RegisterSC: maps action ids to the contract that hosts them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Abort, Caller, Contract, Env, EV_DEPLOYED};
use crate::ledger::{Address, Reason};
use crate::plan::ActionId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterState {
    pub deployer: String,
    pub action_to_act: BTreeMap<ActionId, Address>,
}

impl RegisterState {
    pub fn new(deployer: &str) -> Self {
        Self {
            deployer: deployer.to_string(),
            action_to_act: BTreeMap::new(),
        }
    }
}

pub fn set_act(
    env: &mut Env<'_>,
    target: Address,
    caller: &Caller,
    actions: &[ActionId],
    act: Address,
) -> Result<(), Abort> {
    let hosts_actions = matches!(env.peek(&act), Some(Contract::Act(_) | Contract::PlanAct(_)));
    env.with(target, |c, env| {
        let Contract::Register(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        if *caller != Caller::Identity(s.deployer.clone()) {
            return Err(Abort::new(Reason::Auth).at(target));
        }
        if !hosts_actions {
            return Err(Abort::new(Reason::NoContract).at(target));
        }
        if let Some(a) = actions.iter().find(|a| s.action_to_act.contains_key(*a)) {
            return Err(Abort::new(Reason::Remap).at(target).action(a));
        }
        for a in actions {
            s.action_to_act.insert(a.clone(), act);
        }
        env.emit(
            target,
            EV_DEPLOYED,
            vec![act.to_string(), "new_contract_address".to_string()],
        );
        Ok(())
    })
}

pub fn get_act(env: &mut Env<'_>, target: Address, action: &ActionId) -> Result<Address, Abort> {
    match env.peek(&target) {
        Some(Contract::Register(_)) => lookup(env, target, action),
        _ => Err(Abort::new(Reason::WrongContract).at(target)),
    }
}

/// Read-only lookup used by nested calls from other contracts.
pub fn lookup(env: &Env<'_>, register: Address, action: &ActionId) -> Result<Address, Abort> {
    let Some(Contract::Register(s)) = env.peek(&register) else {
        return Err(Abort::new(Reason::NoMapping).at(register).action(action));
    };
    s.action_to_act
        .get(action)
        .copied()
        .ok_or_else(|| Abort::new(Reason::NoMapping).at(register).action(action))
}
