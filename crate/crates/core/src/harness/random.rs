//! Seeded random plans and scenarios for property suites.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{PlanSource, Scenario, ScenarioFile, ViolationPolicy};
use crate::agents::{AgentBehavior, Mode};
use crate::plan::{ActionId, ActionSpec, AgentId, Literal, Plan};

/// Probability of an edge between any two actions `i < j`.
pub const EDGE_PROBABILITY: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    SkipAction,
    OutOfOrder,
    IgnorePrecondition,
    FalseCompletion,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 4] = [
        BehaviorKind::SkipAction,
        BehaviorKind::OutOfOrder,
        BehaviorKind::IgnorePrecondition,
        BehaviorKind::FalseCompletion,
    ];

    pub fn with_target(self, target: ActionId) -> AgentBehavior {
        match self {
            BehaviorKind::SkipAction => AgentBehavior::SkipAction(target),
            BehaviorKind::OutOfOrder => AgentBehavior::OutOfOrder(target),
            BehaviorKind::IgnorePrecondition => AgentBehavior::IgnorePrecondition(target),
            BehaviorKind::FalseCompletion => AgentBehavior::FalseCompletion(target),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorKind::SkipAction => "skip_action",
            BehaviorKind::OutOfOrder => "out_of_order",
            BehaviorKind::IgnorePrecondition => "ignore_precondition",
            BehaviorKind::FalseCompletion => "false_completion",
        }
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown behavior `{s}`"))
    }
}

/// A random DAG over actions `a1..aN` owned by `Agent1..AgentK`.
///
/// Action `ai` needs `ready_i` and `done_j` for each dependency `aj`, and
/// establishes `done_i` while clearing `ready_i`. Every `ready_i` starts true
/// and the goal is every `done_i`.
pub fn random_plan(actions: usize, agents: usize, rng: &mut impl Rng) -> Plan {
    let agent_ids: Vec<AgentId> = (1..=agents.max(1)).map(|k| AgentId::new(format!("Agent{k}"))).collect();
    let ids: Vec<ActionId> = (1..=actions).map(|i| ActionId::new(format!("a{i}"))).collect();
    let mut deps = std::collections::BTreeSet::new();
    for j in 0..actions {
        for i in 0..j {
            if rng.gen_bool(EDGE_PROBABILITY) {
                deps.insert((ids[i].clone(), ids[j].clone()));
            }
        }
    }
    let mut predicates = Vec::new();
    let mut specs = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let n = i + 1;
        predicates.push(format!("ready_{n}"));
        predicates.push(format!("done_{n}"));
        let mut precond = vec![Literal::pos(format!("ready_{n}"))];
        for (j, other) in ids.iter().enumerate() {
            if deps.contains(&(other.clone(), id.clone())) {
                precond.push(Literal::pos(format!("done_{}", j + 1)));
            }
        }
        specs.push(ActionSpec {
            id: id.clone(),
            agent: agent_ids.choose(rng).expect("at least one agent").clone(),
            precond,
            effect: vec![Literal::pos(format!("done_{n}")), Literal::neg(format!("ready_{n}"))],
        });
    }
    Plan {
        agents: agent_ids,
        predicates,
        actions: specs,
        deps,
        init: (1..=actions).map(|n| format!("ready_{n}")).collect(),
        goal: (1..=actions).map(|n| Literal::pos(format!("done_{n}"))).collect(),
    }
}

/// A random scenario, optionally with one adversarial agent. The adversary
/// owns the target action; for behaviors that need a dependency to trigger,
/// a target with dependencies is preferred when one exists.
pub fn random_scenario(
    actions: usize,
    agents: usize,
    seed: u64,
    mode: Mode,
    behavior: Option<BehaviorKind>,
) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = random_plan(actions, agents, &mut rng);
    let mut behaviors = BTreeMap::new();
    if let Some(kind) = behavior {
        let needs_dep = matches!(kind, BehaviorKind::OutOfOrder | BehaviorKind::IgnorePrecondition);
        let with_deps: Vec<&ActionSpec> = plan.actions.iter().filter(|a| !plan.dep(&a.id).is_empty()).collect();
        let pool: Vec<&ActionSpec> = if needs_dep && !with_deps.is_empty() {
            with_deps
        } else {
            plan.actions.iter().collect()
        };
        if let Some(target) = pool.choose(&mut rng) {
            behaviors.insert(target.agent.clone(), kind.with_target(target.id.clone()));
        }
    }
    let name = match behavior {
        Some(k) => format!("random-{actions}x{agents}-{seed}-{k}"),
        None => format!("random-{actions}x{agents}-{seed}"),
    };
    let mut sc = Scenario::honest(name, plan, mode, seed);
    sc.behaviors = behaviors;
    sc
}

/// The file form of a scenario with the plan inlined.
pub fn scenario_file(sc: &Scenario) -> ScenarioFile {
    ScenarioFile {
        name: Some(sc.name.clone()),
        plan: PlanSource::Inline(sc.plan.to_document()),
        faults: None,
        mode: sc.mode,
        behaviors: sc.behaviors.clone(),
        seed: sc.seed,
        stall_timeout_ticks: Some(sc.stall_timeout_ticks),
        on_violation: ViolationPolicy::Abort,
    }
}
