//! The deterministic event loop.
//!
//! Each tick: drivers (scheduler or agents) act in a seeded shuffled order,
//! device agents serve pending actuation requests, the oracle service answers
//! the queries outstanding at that point, the world advances one step, and
//! one block is sealed.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{Evidence, Fault, RunReport, StallReport, Terminal, Violation, ViolationKind};
use super::scenario::{Scenario, ViolationPolicy};
use crate::agents::{scheduler_tick, AgentRuntime, Deployment, Mode};
use crate::contracts::oracle::{authenticity_tag, QueryKind};
use crate::contracts::{
    dag_rows, ActionRecord, ActionStatus, Call, Contract, ContractInit, PlanActEntry, EV_COMPLETED, EV_DISPATCHED,
    EV_ROLLBACK,
};
use crate::ledger::audit::audit_records;
use crate::ledger::{Address, Identity, Ledger, Reason, Receipt, Signer};
use crate::plan::{derive_local_plans, ActionId, AgentId, Plan, Trace, TraceEntry};
use crate::world::{Devices, ExecResult, WorldState};

pub const DEPLOYER: &str = "deployer";
pub const ORACLE: &str = "oracle";
pub const SCHEDULER: &str = "scheduler";

/// A finished run together with the ledger it produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub ledger: Ledger,
    pub deployment: Deployment,
}

pub fn run_scenario(scenario: &Scenario) -> RunReport {
    run_scenario_full(scenario).report
}

pub fn run_scenario_full(scenario: &Scenario) -> RunArtifacts {
    let mut sim = Simulation::new(scenario);
    sim.run();
    sim.finish()
}

/// Off-ledger half of the oracle: remembers which queries it has answered
/// and which actuations have been carried out or refused.
#[derive(Debug, Default)]
struct OracleService {
    answered: BTreeSet<u64>,
    actuated: BTreeMap<u64, ExecResult>,
    refused: BTreeSet<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Driver {
    Scheduler,
    Agent(usize),
}

struct Simulation<'a> {
    sc: &'a Scenario,
    ledger: Ledger,
    devices: Devices,
    deployer: Signer,
    oracle: Signer,
    scheduler: Signer,
    agents: Vec<AgentRuntime>,
    deployment: Deployment,
    rng: ChaCha8Rng,
    service: OracleService,
    tick: u64,
    last_progress: u64,
    processed: usize,
    dispatched_at: BTreeMap<ActionId, u64>,
    /// For agent-initiated executions: whether the precondition held in the
    /// world when the agent submitted it.
    precond_at_dispatch: BTreeMap<ActionId, bool>,
    trace: Vec<TraceEntry>,
    completed: BTreeSet<ActionId>,
    violations: Vec<Violation>,
    faults: Vec<Fault>,
    stall: Option<StallReport>,
    terminal: Option<Terminal>,
}

impl<'a> Simulation<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let mut ledger = Ledger::new();
        let mut signer = |id: &str| {
            let identity = Identity::derive(id, sc.seed);
            ledger.register_identity(&identity);
            Signer::new(identity)
        };
        let deployer = signer(DEPLOYER);
        let oracle = signer(ORACLE);
        let scheduler = signer(SCHEDULER);
        let local_plans = derive_local_plans(&sc.plan).expect("scenario plans are validated");
        let agents = sc
            .plan
            .agents
            .iter()
            .map(|agent| {
                let local = (sc.mode == Mode::Decentralized).then(|| local_plans[agent].clone());
                AgentRuntime::new(agent.clone(), signer(agent.as_str()), sc.behavior(agent), local)
            })
            .collect();
        Self {
            sc,
            ledger,
            devices: Devices::new(&sc.plan, sc.script.clone()),
            deployer,
            oracle,
            scheduler,
            agents,
            deployment: Deployment::default(),
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            service: OracleService::default(),
            tick: 0,
            last_progress: 0,
            processed: 0,
            dispatched_at: BTreeMap::new(),
            precond_at_dispatch: BTreeMap::new(),
            trace: Vec::new(),
            completed: BTreeSet::new(),
            violations: Vec::new(),
            faults: Vec::new(),
            stall: None,
            terminal: None,
        }
    }

    fn plan(&self) -> &'a Plan {
        &self.sc.plan
    }

    fn deploy(&mut self, init: ContractInit) -> Address {
        match self.deployer.deploy(&mut self.ledger, init) {
            Ok(addr) => addr,
            Err(receipt) => panic!("deployment rejected: {}", receipt.status),
        }
    }

    fn setup(&mut self, target: Address, call: Call) {
        let receipt = self.deployer.send(&mut self.ledger, target, &call);
        assert!(
            receipt.is_accepted(),
            "setup call {} rejected: {}",
            receipt.op,
            receipt.status
        );
    }

    /// Oracle first, then the per-agent hosts, the register and its mappings,
    /// and finally the plan contract (centralized) or register links
    /// (decentralized). All of it lands in block 1.
    fn deploy_contracts(&mut self) {
        let plan = self.plan();
        let oracle = self.deploy(ContractInit::Oracle {
            responder: ORACLE.to_string(),
        });
        self.deployment.oracle = oracle;
        let local_plans = derive_local_plans(plan).expect("validated");

        for agent in &plan.agents {
            let records: Vec<ActionRecord> = plan.actions_of(agent).map(ActionRecord::from_spec).collect();
            if records.is_empty() {
                continue;
            }
            let init = match self.sc.mode {
                Mode::Centralized => ContractInit::Act {
                    oracle,
                    actions: records,
                },
                Mode::Decentralized => {
                    let local = &local_plans[agent];
                    let entries = records
                        .into_iter()
                        .map(|r| PlanActEntry::from_local(local.entry(&r.id).expect("own action"), r))
                        .collect();
                    ContractInit::PlanAct {
                        owner: agent.to_string(),
                        oracle,
                        entries,
                    }
                }
            };
            let host = self.deploy(init);
            self.deployment.hosts.insert(agent.clone(), host);
        }

        let register = self.deploy(ContractInit::Register);
        self.deployment.register = register;
        for (agent, host) in self.deployment.hosts.clone() {
            let actions: Vec<ActionId> = plan.actions_of(&agent).map(|a| a.id.clone()).collect();
            self.setup(register, Call::SetAct { actions, act: host });
        }

        match self.sc.mode {
            Mode::Centralized => {
                let plan_sc = self.deploy(ContractInit::Plan {
                    register,
                    rows: dag_rows(plan),
                });
                self.deployment.plan = Some(plan_sc);
                for host in self.deployment.hosts.values().copied().collect::<Vec<_>>() {
                    self.setup(host, Call::SetDispatcher { dispatcher: plan_sc });
                }
            }
            Mode::Decentralized => {
                for host in self.deployment.hosts.values().copied().collect::<Vec<_>>() {
                    self.setup(host, Call::SetRegister { register });
                }
            }
        }
        self.ledger.seal_block();
        self.processed = self.ledger.log().len();
    }

    fn run(&mut self) {
        self.deploy_contracts();
        while self.terminal.is_none() {
            if self.completed.len() == self.plan().actions.len() {
                self.terminal = Some(Terminal::Done);
                break;
            }
            self.step();
        }
    }

    fn step(&mut self) {
        self.tick += 1;
        let world_before = self.devices.state.clone();
        self.drive(&world_before);
        self.serve_actuations();
        self.deliver_oracle_results();
        self.devices.state.advance();
        self.ledger.seal_block();
        self.process_receipts(&world_before);

        if !self.violations.is_empty() && self.sc.on_violation == ViolationPolicy::Abort {
            self.terminal = Some(Terminal::Aborted);
        } else if self.completed.len() == self.plan().actions.len() {
            self.terminal = Some(Terminal::Done);
        } else if self.tick - self.last_progress >= self.sc.stall_timeout_ticks {
            self.analyze_stall();
            self.terminal = Some(Terminal::Stalled);
        }
    }

    fn drive(&mut self, world: &WorldState) {
        let sc = self.sc;
        let mut drivers: Vec<Driver> = (0..self.agents.len()).map(Driver::Agent).collect();
        if self.sc.mode == Mode::Centralized {
            drivers.push(Driver::Scheduler);
        }
        drivers.shuffle(&mut self.rng);
        for d in drivers {
            match d {
                Driver::Scheduler => {
                    let plan_sc = self.deployment.plan.expect("centralized deployment");
                    scheduler_tick(&mut self.ledger, &mut self.scheduler, plan_sc);
                }
                Driver::Agent(i) => {
                    self.agents[i].tick(&mut self.ledger, sc.mode, &sc.plan, &self.deployment, world);
                }
            }
        }
    }

    fn pending_queries(&self) -> Vec<(u64, crate::contracts::Query)> {
        match self.ledger.contract(&self.deployment.oracle) {
            Some(Contract::Oracle(s)) => s.pending.iter().map(|(id, q)| (*id, q.clone())).collect(),
            _ => Vec::new(),
        }
    }

    fn serve_actuations(&mut self) {
        for (id, q) in self.pending_queries() {
            let QueryKind::Actuate { action, agent, .. } = &q.kind else {
                continue;
            };
            if self.service.actuated.contains_key(&id) || self.service.refused.contains(&id) {
                continue;
            }
            let willing = self
                .agents
                .iter()
                .find(|a| a.agent == *agent)
                .is_some_and(|a| a.will_actuate(action));
            if willing {
                let result = self.devices.execute(action).expect("plan action");
                self.service.actuated.insert(id, result);
            } else {
                self.service.refused.insert(id);
            }
        }
    }

    fn deliver_oracle_results(&mut self) {
        for (id, q) in self.pending_queries() {
            if self.service.answered.contains(&id) {
                continue;
            }
            let outcome = match &q.kind {
                QueryKind::Read => None,
                QueryKind::Actuate { .. } => match self.service.actuated.get(&id) {
                    Some(result) => Some(result.outcome),
                    None => continue,
                },
            };
            let values = self
                .devices
                .state
                .snapshot(&q.predicates)
                .expect("contract predicates come from the plan");
            let tag = authenticity_tag(ORACLE, id, &values, outcome);
            let call = Call::Callback {
                query: id,
                values,
                outcome,
                tag,
            };
            self.oracle.send(&mut self.ledger, self.deployment.oracle, &call);
            self.service.answered.insert(id);
        }
    }

    fn is_agent(&self, id: &str) -> bool {
        self.agents.iter().any(|a| a.agent.as_str() == id)
    }

    fn process_receipts(&mut self, world_before: &WorldState) {
        let fresh: Vec<Receipt> = self.ledger.log()[self.processed..]
            .iter()
            .map(|e| e.receipt.clone())
            .collect();
        self.processed = self.ledger.log().len();
        for r in fresh {
            if r.is_accepted() {
                self.record_progress(&r, world_before);
            } else {
                self.classify_rejection(&r);
            }
        }
    }

    fn record_progress(&mut self, r: &Receipt, world_before: &WorldState) {
        for ev in &r.events {
            match ev.name.as_str() {
                EV_DISPATCHED => {
                    let action = ActionId::new(ev.args[0].clone());
                    if self.is_agent(&ev.args[1]) {
                        let holds = self
                            .plan()
                            .action(&action)
                            .is_some_and(|s| s.precond.iter().all(|l| world_before.literal_holds(l).unwrap_or(false)));
                        self.precond_at_dispatch.insert(action.clone(), holds);
                    }
                    self.dispatched_at.insert(action, self.tick);
                }
                EV_COMPLETED => {
                    let action = ActionId::new(ev.args[0].clone());
                    if self.completed.insert(action.clone()) {
                        self.trace.push(TraceEntry {
                            dispatched: self.dispatched_at.get(&action).copied().unwrap_or(0),
                            completed: self.tick,
                            action,
                        });
                        self.last_progress = self.tick;
                    }
                }
                _ => {}
            }
        }
    }

    fn classify_rejection(&mut self, r: &Receipt) {
        let reason = r.status.reason().expect("rejected receipt");
        let (action, initiator) = match r.event(EV_ROLLBACK) {
            Some(ev) => (Some(ActionId::new(ev.args[0].clone())), Some(ev.args[2].clone())),
            None => (None, None),
        };
        let evidence = Evidence::Receipt { seq: r.seq, reason };

        if self.is_agent(&r.sender) {
            let kind = match reason {
                Reason::FalseCompletion => ViolationKind::FalseCompletion,
                Reason::Order | Reason::InFlight | Reason::Duplicate | Reason::UnknownAction => {
                    ViolationKind::OutOfOrder
                }
                _ => ViolationKind::Unauthorized,
            };
            self.violations.push(Violation {
                agent: AgentId::new(r.sender.clone()),
                kind,
                action,
                evidence,
            });
            return;
        }

        if r.sender == ORACLE && reason == Reason::Precond {
            if let (Some(a), Some(who)) = (&action, &initiator) {
                let held = self.precond_at_dispatch.get(a).copied().unwrap_or(true);
                if self.is_agent(who) && !held {
                    self.violations.push(Violation {
                        agent: AgentId::new(who.clone()),
                        kind: ViolationKind::PreconditionFalse,
                        action,
                        evidence,
                    });
                    return;
                }
            }
        }

        let agent = action.as_ref().and_then(|a| self.plan().owner(a)).cloned();
        self.faults.push(Fault {
            action,
            agent,
            reason,
            receipt: r.seq,
        });
    }

    fn host_status(&self, action: &ActionId) -> ActionStatus {
        self.deployment
            .host_of(self.plan(), action)
            .and_then(|h| self.ledger.contract(&h))
            .and_then(Contract::pipeline)
            .map_or(ActionStatus::Idle, |p| p.status(action))
    }

    /// Separates incomplete actions into stuck ones (all dependencies done)
    /// and those blocked behind them, and attributes omissions.
    fn analyze_stall(&mut self) {
        let plan = self.plan();
        let mut stuck = BTreeSet::new();
        let mut flagged = BTreeSet::new();

        for (id, q) in self.pending_queries() {
            if let QueryKind::Actuate { action, agent, .. } = q.kind {
                if self.service.refused.contains(&id) && flagged.insert(action.clone()) {
                    stuck.insert(action.clone());
                    self.violations.push(Violation {
                        agent,
                        kind: ViolationKind::SkippedAction,
                        action: Some(action),
                        evidence: Evidence::Stall { tick: self.tick },
                    });
                }
            }
        }

        for spec in &plan.actions {
            let a = &spec.id;
            if self.completed.contains(a) || !plan.dep(a).iter().all(|d| self.completed.contains(d)) {
                continue;
            }
            stuck.insert(a.clone());
            let startable = self.sc.mode == Mode::Decentralized
                && self.host_status(a) == ActionStatus::Idle
                && self.devices.precondition_holds(a).unwrap_or(false);
            if startable && flagged.insert(a.clone()) {
                self.violations.push(Violation {
                    agent: spec.agent.clone(),
                    kind: ViolationKind::SkippedAction,
                    action: Some(a.clone()),
                    evidence: Evidence::Stall { tick: self.tick },
                });
            }
        }

        let blocked: Vec<ActionId> = plan
            .actions
            .iter()
            .map(|s| s.id.clone())
            .filter(|a| !self.completed.contains(a) && !stuck.contains(a))
            .collect();
        let responsible: BTreeSet<AgentId> = stuck.iter().filter_map(|a| plan.owner(a)).cloned().collect();
        self.stall = Some(StallReport {
            tick: self.tick,
            stuck: plan
                .actions
                .iter()
                .map(|s| s.id.clone())
                .filter(|a| stuck.contains(a))
                .collect(),
            blocked,
            responsible: responsible.into_iter().collect(),
        });
    }

    fn finish(self) -> RunArtifacts {
        let report = RunReport {
            scenario: self.sc.name.clone(),
            mode: self.sc.mode,
            seed: self.sc.seed,
            terminal: self.terminal.unwrap_or(Terminal::Stalled),
            ticks: self.tick,
            trace: Trace { entries: self.trace },
            violations: self.violations,
            faults: self.faults,
            stall: self.stall,
            goal_satisfied: self.sc.plan.goal_holds(self.devices.state.values()),
            chain_valid: self.ledger.verify_chain(),
            final_world: self.devices.state.values().clone(),
            receipts: audit_records(&self.ledger),
        };
        RunArtifacts {
            report,
            ledger: self.ledger,
            deployment: self.deployment,
        }
    }
}
