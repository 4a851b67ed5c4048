//! Agent processes: the centralized scheduler, honest decentralized peers,
//! and the four adversarial behaviors. Agents act only by signing
//! transactions under their own identity.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contracts::{Call, Contract, DispatchVerdict, Pipeline};
use crate::ledger::{Address, Ledger, Receipt, Signer};
use crate::plan::{ActionId, AgentId, LocalPlan, Plan};
use crate::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Centralized,
    Decentralized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "centralized",
            Mode::Decentralized => "decentralized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "snake_case")]
pub enum AgentBehavior {
    #[default]
    Honest,
    SkipAction(ActionId),
    OutOfOrder(ActionId),
    IgnorePrecondition(ActionId),
    FalseCompletion(ActionId),
}

impl AgentBehavior {
    pub fn target(&self) -> Option<&ActionId> {
        match self {
            AgentBehavior::Honest => None,
            AgentBehavior::SkipAction(t)
            | AgentBehavior::OutOfOrder(t)
            | AgentBehavior::IgnorePrecondition(t)
            | AgentBehavior::FalseCompletion(t) => Some(t),
        }
    }

    pub fn is_honest(&self) -> bool {
        matches!(self, AgentBehavior::Honest)
    }

    pub fn name(&self) -> &'static str {
        match self {
            AgentBehavior::Honest => "honest",
            AgentBehavior::SkipAction(_) => "skip_action",
            AgentBehavior::OutOfOrder(_) => "out_of_order",
            AgentBehavior::IgnorePrecondition(_) => "ignore_precondition",
            AgentBehavior::FalseCompletion(_) => "false_completion",
        }
    }
}

/// Whether injecting `behavior` can deviate from honest execution at all on
/// this plan and initial state.
pub fn is_triggerable(behavior: &AgentBehavior, plan: &Plan) -> bool {
    let Some(target) = behavior.target() else {
        return false;
    };
    let Some(spec) = plan.action(target) else {
        return false;
    };
    match behavior {
        AgentBehavior::Honest => false,
        AgentBehavior::SkipAction(_) | AgentBehavior::FalseCompletion(_) => true,
        AgentBehavior::OutOfOrder(_) => !plan.dep(target).is_empty(),
        AgentBehavior::IgnorePrecondition(_) => spec.precond.iter().any(|l| !l.holds(plan.init.contains(&l.predicate))),
    }
}

/// Addresses produced by deployment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub oracle: Address,
    pub register: Address,
    pub plan: Option<Address>,
    /// Act (centralized) or PlanAct (decentralized) contract per agent.
    pub hosts: std::collections::BTreeMap<AgentId, Address>,
}

impl Deployment {
    pub fn host_of(&self, plan: &Plan, action: &ActionId) -> Option<Address> {
        plan.owner(action).and_then(|agent| self.hosts.get(agent)).copied()
    }
}

fn pipeline<'a>(ledger: &'a Ledger, at: &Address) -> Option<&'a Pipeline> {
    ledger.contract(at).and_then(Contract::pipeline)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulerOutcome {
    Progress(ActionId),
    Idle,
    Done,
    Aborted,
}

/// Submits one `dispatchNext` transaction and reads back the verdict.
pub fn scheduler_tick(ledger: &mut Ledger, scheduler: &mut Signer, plan: Address) -> (SchedulerOutcome, Receipt) {
    let receipt = scheduler.send(ledger, plan, &Call::DispatchNext {});
    let verdict = receipt
        .output
        .clone()
        .and_then(|v| serde_json::from_value::<DispatchVerdict>(v).ok());
    let outcome = match verdict {
        _ if !receipt.is_accepted() => SchedulerOutcome::Aborted,
        Some(DispatchVerdict::Dispatched { action }) => SchedulerOutcome::Progress(action),
        Some(DispatchVerdict::Idle) => SchedulerOutcome::Idle,
        Some(DispatchVerdict::Done) => SchedulerOutcome::Done,
        None => SchedulerOutcome::Aborted,
    };
    (outcome, receipt)
}

#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub agent: AgentId,
    pub signer: Signer,
    pub behavior: AgentBehavior,
    pub local_plan: Option<LocalPlan>,
    injected: bool,
    announced: BTreeSet<ActionId>,
}

impl AgentRuntime {
    pub fn new(agent: AgentId, signer: Signer, behavior: AgentBehavior, local_plan: Option<LocalPlan>) -> Self {
        Self {
            agent,
            signer,
            behavior,
            local_plan,
            injected: false,
            announced: BTreeSet::new(),
        }
    }

    pub fn has_injected(&self) -> bool {
        self.injected
    }

    /// Device side: whether this agent carries out the physical actuation.
    pub fn will_actuate(&self, action: &ActionId) -> bool {
        !matches!(&self.behavior, AgentBehavior::SkipAction(t) if t == action)
    }

    fn skips(&self, action: &ActionId) -> bool {
        !self.will_actuate(action)
    }

    /// One driver step. Adversaries inject once when their deviation is
    /// triggerable and otherwise follow the honest protocol.
    pub fn tick(
        &mut self,
        ledger: &mut Ledger,
        mode: Mode,
        plan: &Plan,
        deployment: &Deployment,
        world: &WorldState,
    ) -> Vec<Receipt> {
        let mut receipts = Vec::new();
        if !self.injected && !self.behavior.is_honest() {
            self.injected = true;
            if is_triggerable(&self.behavior, plan) {
                receipts.extend(inject_adversarial_tx(self, ledger, mode, plan, deployment));
            }
        }
        if mode == Mode::Decentralized {
            receipts.extend(agent_tick_decentralized(self, ledger, plan, deployment, world));
        }
        receipts
    }
}

/// Honest decentralized step: announce own completions to the hosts of
/// dependent actions, then start every eligible action whose precondition
/// currently holds.
pub fn agent_tick_decentralized(
    agent: &mut AgentRuntime,
    ledger: &mut Ledger,
    plan: &Plan,
    deployment: &Deployment,
    world: &WorldState,
) -> Vec<Receipt> {
    let mut receipts = Vec::new();
    let Some(own) = deployment.hosts.get(&agent.agent).copied() else {
        return receipts;
    };
    let Some(local) = agent.local_plan.clone() else {
        return receipts;
    };

    for entry in &local.entries {
        let a = &entry.action;
        if agent.announced.contains(a) || !pipeline(ledger, &own).is_some_and(|p| p.is_completed(a)) {
            continue;
        }
        agent.announced.insert(a.clone());
        let targets: BTreeSet<Address> = entry
            .out_set
            .iter()
            .filter_map(|b| deployment.host_of(plan, b))
            .filter(|h| *h != own)
            .collect();
        for host in targets {
            let call = Call::Update { action: a.clone() };
            receipts.push(agent.signer.send(ledger, host, &call));
        }
    }

    let eligible = match ledger.contract(&own) {
        Some(Contract::PlanAct(s)) => s.eligible(),
        _ => Vec::new(),
    };
    for a in eligible {
        if agent.skips(&a) {
            continue;
        }
        let Some(entry) = local.entry(&a) else { continue };
        let holds = entry.precond.iter().all(|l| world.literal_holds(l).unwrap_or(false));
        if holds {
            receipts.push(agent.signer.send(ledger, own, &Call::Execute { action: a }));
        }
    }
    receipts
}

/// Sends the deviating transaction(s) for the agent's behavior. SkipAction
/// sends nothing: it acts by omission.
pub fn inject_adversarial_tx(
    agent: &mut AgentRuntime,
    ledger: &mut Ledger,
    mode: Mode,
    plan: &Plan,
    deployment: &Deployment,
) -> Vec<Receipt> {
    let own = deployment.hosts.get(&agent.agent).copied();
    match agent.behavior.clone() {
        AgentBehavior::Honest | AgentBehavior::SkipAction(_) => Vec::new(),
        AgentBehavior::OutOfOrder(t) | AgentBehavior::IgnorePrecondition(t) => {
            let Some(host) = deployment.host_of(plan, &t) else {
                return Vec::new();
            };
            vec![agent.signer.send(ledger, host, &Call::Execute { action: t })]
        }
        AgentBehavior::FalseCompletion(t) => match mode {
            Mode::Centralized => {
                let Some(plan_sc) = deployment.plan else {
                    return Vec::new();
                };
                vec![agent
                    .signer
                    .send(ledger, plan_sc, &Call::ReportCompletion { action: t })]
            }
            Mode::Decentralized => {
                let mut hosts: BTreeSet<Address> = plan
                    .dependents(&t)
                    .iter()
                    .filter_map(|b| deployment.host_of(plan, b))
                    .collect();
                if hosts.is_empty() {
                    hosts.extend(own);
                }
                hosts
                    .into_iter()
                    .map(|h| agent.signer.send(ledger, h, &Call::Update { action: t.clone() }))
                    .collect()
            }
        },
    }
}
