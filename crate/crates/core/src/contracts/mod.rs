//! Contract state machines executed by the ledger.
//!
//! Centralized mode uses [`oracle`], [`register`], [`act`] and [`plan_sc`];
//! decentralized mode replaces the scheduler and act contracts with one
//! [`plan_act`] instance per agent. All state is plain data so the ledger can
//! snapshot it and roll back rejected transactions.

pub mod act;
pub mod oracle;
pub mod pipeline;
pub mod plan_act;
pub mod plan_sc;
pub mod register;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ledger::{Address, Digest, Reason};
use crate::plan::ActionId;
use crate::world::ExecOutcome;

pub use act::ActState;
pub use oracle::{OracleState, Query, QueryKind};
pub use pipeline::{ActionRecord, ActionStatus, Execution, Pipeline, Stage};
pub use plan_act::{PlanActEntry, PlanActState};
pub use plan_sc::{dag_rows, DispatchVerdict, PlanState};
pub use register::RegisterState;

pub const EV_DEPLOYED: &str = "logDeployedContract";
pub const EV_COMPLETED: &str = "Action_Completed";
pub const EV_ROLLBACK: &str = "Transaction_Rollback";
pub const EV_LIST_UPDATED: &str = "completed_list_updated";
pub const EV_DISPATCHED: &str = "Action_Dispatched";

/// Who is invoking a contract function: a signing identity (the transaction
/// sender) or another contract making a nested call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Caller {
    Identity(String),
    Contract(Address),
}

impl fmt::Display for Caller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Caller::Identity(id) => f.write_str(id),
            Caller::Contract(addr) => write!(f, "{addr}"),
        }
    }
}

/// A contract-level abort. The enclosing transaction is rejected and every
/// state change it made is rolled back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abort {
    pub reason: Reason,
    pub contract: Option<Address>,
    pub action: Option<ActionId>,
    pub initiator: Option<String>,
}

impl Abort {
    pub fn new(reason: Reason) -> Self {
        Self {
            reason,
            contract: None,
            action: None,
            initiator: None,
        }
    }

    pub fn at(mut self, contract: Address) -> Self {
        self.contract.get_or_insert(contract);
        self
    }

    pub fn action(mut self, action: &ActionId) -> Self {
        self.action.get_or_insert_with(|| action.clone());
        self
    }

    pub fn initiator(mut self, who: impl fmt::Display) -> Self {
        self.initiator.get_or_insert_with(|| who.to_string());
        self
    }
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "abort({})", self.reason)?;
        if let Some(a) = &self.action {
            write!(f, " action={a}")?;
        }
        Ok(())
    }
}

/// Constructor arguments carried by a deployment transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContractInit {
    Oracle {
        responder: String,
    },
    Register,
    Act {
        oracle: Address,
        actions: Vec<ActionRecord>,
    },
    Plan {
        register: Address,
        rows: Vec<Vec<ActionId>>,
    },
    PlanAct {
        owner: String,
        oracle: Address,
        entries: Vec<PlanActEntry>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contract {
    Oracle(OracleState),
    Register(RegisterState),
    Plan(PlanState),
    Act(ActState),
    PlanAct(PlanActState),
}

impl Contract {
    pub fn deploy(init: ContractInit, deployer: &str) -> Result<Self, Abort> {
        Ok(match init {
            ContractInit::Oracle { responder } => Contract::Oracle(OracleState::new(responder)),
            ContractInit::Register => Contract::Register(RegisterState::new(deployer)),
            ContractInit::Act { oracle, actions } => Contract::Act(ActState::new(deployer, oracle, actions)?),
            ContractInit::Plan { register, rows } => Contract::Plan(PlanState::new(register, rows)?),
            ContractInit::PlanAct { owner, oracle, entries } => {
                Contract::PlanAct(PlanActState::new(deployer, owner, oracle, entries)?)
            }
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Contract::Oracle(_) => "oracle",
            Contract::Register(_) => "register",
            Contract::Plan(_) => "plan",
            Contract::Act(_) => "act",
            Contract::PlanAct(_) => "plan_act",
        }
    }

    /// The execution pipeline of act-style contracts.
    pub fn pipeline(&self) -> Option<&Pipeline> {
        match self {
            Contract::Act(s) => Some(&s.pipeline),
            Contract::PlanAct(s) => Some(&s.pipeline),
            _ => None,
        }
    }

    pub fn as_oracle(&self) -> Option<&OracleState> {
        match self {
            Contract::Oracle(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_register(&self) -> Option<&RegisterState> {
        match self {
            Contract::Register(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_plan(&self) -> Option<&PlanState> {
        match self {
            Contract::Plan(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_act(&self) -> Option<&ActState> {
        match self {
            Contract::Act(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_plan_act(&self) -> Option<&PlanActState> {
        match self {
            Contract::PlanAct(s) => Some(s),
            _ => None,
        }
    }
}

/// A contract function call. `op` is the function name and `args` its
/// JSON-encoded arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "camelCase")]
pub enum Call {
    Deploy(ContractInit),
    SetAct {
        actions: Vec<ActionId>,
        act: Address,
    },
    GetAct {
        action: ActionId,
    },
    SetDispatcher {
        dispatcher: Address,
    },
    SetRegister {
        register: Address,
    },
    DispatchNext {},
    ReportCompletion {
        action: ActionId,
    },
    Execute {
        action: ActionId,
    },
    #[serde(rename = "__callback")]
    Callback {
        query: u64,
        values: BTreeMap<String, bool>,
        outcome: Option<ExecOutcome>,
        tag: Digest,
    },
    Update {
        action: ActionId,
    },
}

impl Call {
    fn encoded(&self) -> serde_json::Map<String, Value> {
        match serde_json::to_value(self).expect("calls serialize") {
            Value::Object(map) => map,
            _ => unreachable!("adjacently tagged enum"),
        }
    }

    pub fn op(&self) -> String {
        match self.encoded().get("op") {
            Some(Value::String(s)) => s.clone(),
            _ => unreachable!("op tag"),
        }
    }

    pub fn payload(&self) -> String {
        self.encoded()
            .get("args")
            .map_or_else(|| "null".to_string(), Value::to_string)
    }

    pub fn decode(op: &str, payload: &str) -> Result<Self, serde_json::Error> {
        let args: Value = serde_json::from_str(payload)?;
        let mut map = serde_json::Map::new();
        map.insert("op".to_string(), Value::String(op.to_string()));
        map.insert("args".to_string(), args);
        serde_json::from_value(Value::Object(map))
    }
}

/// Execution context for one transaction: the live contract map, the event
/// buffer, and the set of contracts currently on the call stack.
pub struct Env<'a> {
    contracts: &'a mut BTreeMap<Address, Contract>,
    active: BTreeSet<Address>,
    events: Vec<(Address, String, Vec<String>)>,
    origin: String,
}

impl<'a> Env<'a> {
    pub fn new(contracts: &'a mut BTreeMap<Address, Contract>, origin: String) -> Self {
        Self {
            contracts,
            active: BTreeSet::new(),
            events: Vec::new(),
            origin,
        }
    }

    /// Signer of the enclosing transaction.
    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn emit(&mut self, contract: Address, name: &str, args: Vec<String>) {
        self.events.push((contract, name.to_string(), args));
    }

    pub fn into_events(self) -> Vec<(Address, String, Vec<String>)> {
        self.events
    }

    /// Read-only view of a contract that is not currently executing.
    pub fn peek(&self, at: &Address) -> Option<&Contract> {
        self.contracts.get(at)
    }

    pub fn is_deployed(&self, at: &Address) -> bool {
        self.contracts.contains_key(at) || self.active.contains(at)
    }

    fn install(&mut self, at: Address, contract: Contract) {
        self.contracts.insert(at, contract);
    }

    /// Runs `f` with mutable access to the contract at `at`. The contract is
    /// taken off the map for the duration, so a nested call back into it
    /// aborts.
    pub fn with<R>(
        &mut self,
        at: Address,
        f: impl FnOnce(&mut Contract, &mut Env<'a>) -> Result<R, Abort>,
    ) -> Result<R, Abort> {
        let mut contract = self
            .contracts
            .remove(&at)
            .ok_or_else(|| Abort::new(Reason::NoContract).at(at))?;
        self.active.insert(at);
        let result = f(&mut contract, self);
        self.active.remove(&at);
        self.contracts.insert(at, contract);
        result
    }
}

/// Entry point used by the ledger for a transaction signed by `sender`.
pub fn execute_transaction(
    env: &mut Env<'_>,
    target: Address,
    sender: &str,
    nonce: u64,
    call: Call,
) -> Result<Option<Value>, Abort> {
    let caller = Caller::Identity(sender.to_string());
    if target == Address::ZERO {
        let Call::Deploy(init) = call else {
            return Err(Abort::new(Reason::NoContract));
        };
        let contract = Contract::deploy(init, sender)?;
        let at = Address::derive(sender, nonce);
        if env.is_deployed(&at) {
            return Err(Abort::new(Reason::AlreadySet).at(at));
        }
        env.install(at, contract);
        return Ok(Some(serde_json::json!({ "address": at.to_string() })));
    }
    match call {
        Call::Deploy(_) => Err(Abort::new(Reason::WrongContract).at(target)),
        Call::SetAct { actions, act } => register::set_act(env, target, &caller, &actions, act).map(|_| None),
        Call::GetAct { action } => {
            register::get_act(env, target, &action).map(|addr| Some(Value::String(addr.to_string())))
        }
        Call::SetDispatcher { dispatcher } => act::set_dispatcher(env, target, &caller, dispatcher).map(|_| None),
        Call::SetRegister { register } => plan_act::set_register(env, target, &caller, register).map(|_| None),
        Call::DispatchNext {} => {
            plan_sc::dispatch_next(env, target).map(|v| Some(serde_json::to_value(v).expect("verdict serializes")))
        }
        Call::ReportCompletion { action } => plan_sc::report_completion(env, target, &caller, &action).map(|_| None),
        Call::Execute { action } => match env.peek(&target) {
            Some(Contract::Act(_)) => act::execute(env, target, &caller, &action).map(|_| None),
            Some(Contract::PlanAct(_)) => plan_act::execute(env, target, &caller, &action).map(|_| None),
            _ => Err(Abort::new(Reason::WrongContract).at(target)),
        },
        Call::Callback {
            query,
            values,
            outcome,
            tag,
        } => oracle::callback(env, target, &caller, query, values, outcome, tag).map(|_| None),
        Call::Update { action } => plan_act::update(env, target, &caller, &action)
            .map(|eligible| Some(serde_json::to_value(eligible).expect("ids serialize"))),
    }
}

/// Delivers an oracle result to the act-style contract that requested it.
pub(crate) fn deliver_oracle_result(
    env: &mut Env<'_>,
    requester: Address,
    query: u64,
    values: &BTreeMap<String, bool>,
    outcome: Option<ExecOutcome>,
) -> Result<(), Abort> {
    match env.peek(&requester) {
        Some(Contract::Act(_)) => act::on_oracle_result(env, requester, query, values, outcome),
        Some(Contract::PlanAct(_)) => plan_act::on_oracle_result(env, requester, query, values, outcome),
        _ => Err(Abort::new(Reason::WrongContract).at(requester)),
    }
}
