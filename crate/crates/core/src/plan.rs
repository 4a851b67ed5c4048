//! Global partial-order plans, their per-agent projections, and execution traces.
//!
//! A [`Plan`] is a set of actions, each owned by one agent and annotated with
//! precondition and effect literals, plus an acyclic dependency relation.
//! Any linear extension of the dependency relation is a valid execution order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a plan action. Integer ids from other sources map to their
/// decimal string form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub String);

impl ActionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActionId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Identifier of an agent (the value of `loc(a)` for the actions it owns).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A ground predicate or its negation. Serialized as `"p"` or `"!p"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub predicate: String,
    pub positive: bool,
}

impl Literal {
    pub fn pos(predicate: impl Into<String>) -> Self {
        Self {
            predicate: predicate.into(),
            positive: true,
        }
    }

    pub fn neg(predicate: impl Into<String>) -> Self {
        Self {
            predicate: predicate.into(),
            positive: false,
        }
    }

    pub fn parse(s: &str) -> Result<Self, PlanError> {
        let (positive, name) = match s.strip_prefix('!') {
            Some(rest) => (false, rest),
            None => (true, s),
        };
        if name.is_empty() || name.starts_with('!') {
            return Err(PlanError::BadLiteral(s.to_string()));
        }
        Ok(Self {
            predicate: name.to_string(),
            positive,
        })
    }

    /// Whether this literal is satisfied when its predicate has `value`.
    pub fn holds(&self, value: bool) -> bool {
        value == self.positive
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("!")?;
        }
        f.write_str(&self.predicate)
    }
}

impl Serialize for Literal {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Literal::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: ActionId,
    pub agent: AgentId,
    #[serde(default)]
    pub precond: Vec<Literal>,
    #[serde(default)]
    pub effect: Vec<Literal>,
}

/// A global partial-order plan.
///
/// `actions` keeps declaration order; it is the row order used by the
/// on-ledger scheduler when breaking ties. `deps` holds `(before, after)`
/// pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub agents: Vec<AgentId>,
    pub predicates: Vec<String>,
    pub actions: Vec<ActionSpec>,
    pub deps: BTreeSet<(ActionId, ActionId)>,
    pub init: BTreeSet<String>,
    pub goal: Vec<Literal>,
}

/// On-disk plan document (JSON).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    #[serde(default)]
    pub agents: Vec<AgentId>,
    #[serde(default)]
    pub predicates: Vec<String>,
    #[serde(default)]
    pub actions: Vec<ActionSpec>,
    #[serde(default)]
    pub deps: Vec<(ActionId, ActionId)>,
    #[serde(default)]
    pub init: Vec<String>,
    #[serde(default)]
    pub goal: Vec<Literal>,
}

/// A single invariant violation reported by [`validate_plan`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanViolation {
    DuplicateAction { action: ActionId },
    DuplicateAgent { agent: AgentId },
    UndeclaredAgent { action: ActionId, agent: AgentId },
    DanglingDependency { before: ActionId, after: ActionId },
    Cycle { actions: Vec<ActionId> },
    UndeclaredPredicate { context: String, predicate: String },
    ContradictoryLiterals { action: ActionId, predicate: String },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateAction { action } => write!(f, "duplicate action id `{action}`"),
            Self::DuplicateAgent { agent } => write!(f, "duplicate agent `{agent}`"),
            Self::UndeclaredAgent { action, agent } => {
                write!(f, "action `{action}` is assigned to undeclared agent `{agent}`")
            }
            Self::DanglingDependency { before, after } => {
                write!(f, "dependency ({before}, {after}) references an undeclared action")
            }
            Self::Cycle { actions } => {
                let ids: Vec<&str> = actions.iter().map(ActionId::as_str).collect();
                write!(f, "dependency cycle through [{}]", ids.join(", "))
            }
            Self::UndeclaredPredicate { context, predicate } => {
                write!(f, "{context} references undeclared predicate `{predicate}`")
            }
            Self::ContradictoryLiterals { action, predicate } => {
                write!(
                    f,
                    "action `{action}` has both `{predicate}` and `!{predicate}` in one literal set"
                )
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("malformed plan document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("bad literal `{0}`")]
    BadLiteral(String),
    #[error("invalid plan: {}", join_violations(.0))]
    Invalid(Vec<PlanViolation>),
    #[error("unknown action `{0}`")]
    UnknownAction(ActionId),
}

fn join_violations(v: &[PlanViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl From<PlanDocument> for Plan {
    fn from(doc: PlanDocument) -> Self {
        Plan {
            agents: doc.agents,
            predicates: doc.predicates,
            actions: doc.actions,
            deps: doc.deps.into_iter().collect(),
            init: doc.init.into_iter().collect(),
            goal: doc.goal,
        }
    }
}

impl Plan {
    pub fn action(&self, id: &ActionId) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| &a.id == id)
    }

    pub fn contains(&self, id: &ActionId) -> bool {
        self.actions.iter().any(|a| &a.id == id)
    }

    pub fn action_ids(&self) -> Vec<ActionId> {
        self.actions.iter().map(|a| a.id.clone()).collect()
    }

    /// Position of each action in declaration order.
    fn positions(&self) -> BTreeMap<&ActionId, usize> {
        self.actions.iter().enumerate().map(|(i, a)| (&a.id, i)).collect()
    }

    /// `dep(a)`: the actions `a` depends on, in declaration order.
    pub fn dep(&self, id: &ActionId) -> Vec<ActionId> {
        let pos = self.positions();
        let mut out: Vec<ActionId> = self
            .deps
            .iter()
            .filter(|(_, after)| after == id)
            .map(|(before, _)| before.clone())
            .collect();
        out.sort_by_key(|b| pos.get(b).copied().unwrap_or(usize::MAX));
        out
    }

    /// The actions that depend on `id`, in declaration order.
    pub fn dependents(&self, id: &ActionId) -> Vec<ActionId> {
        let pos = self.positions();
        let mut out: Vec<ActionId> = self
            .deps
            .iter()
            .filter(|(before, _)| before == id)
            .map(|(_, after)| after.clone())
            .collect();
        out.sort_by_key(|a| pos.get(a).copied().unwrap_or(usize::MAX));
        out
    }

    /// Every action reachable from `id` along dependency edges (excluding `id`).
    pub fn transitive_dependents(&self, id: &ActionId) -> BTreeSet<ActionId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<ActionId> = self.dependents(id).into();
        while let Some(next) = queue.pop_front() {
            if seen.insert(next.clone()) {
                queue.extend(self.dependents(&next));
            }
        }
        seen
    }

    pub fn owner(&self, id: &ActionId) -> Option<&AgentId> {
        self.action(id).map(|a| &a.agent)
    }

    pub fn actions_of<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a ActionSpec> + 'a {
        self.actions.iter().filter(move |a| &a.agent == agent)
    }

    /// Evaluates the conjunctive goal against a predicate valuation; missing
    /// predicates read as false.
    pub fn goal_holds(&self, values: &BTreeMap<String, bool>) -> bool {
        self.goal
            .iter()
            .all(|lit| lit.holds(values.get(&lit.predicate).copied().unwrap_or(false)))
    }

    pub fn to_document(&self) -> PlanDocument {
        PlanDocument {
            agents: self.agents.clone(),
            predicates: self.predicates.clone(),
            actions: self.actions.clone(),
            deps: self.deps.iter().cloned().collect(),
            init: self.init.iter().cloned().collect(),
            goal: self.goal.clone(),
        }
    }
}

/// Parses and validates a plan document.
pub fn parse_plan(document: &str) -> Result<Plan, PlanError> {
    let doc: PlanDocument = serde_json::from_str(document)?;
    let plan = Plan::from(doc);
    let violations = validate_plan(&plan);
    if violations.is_empty() {
        Ok(plan)
    } else {
        Err(PlanError::Invalid(violations))
    }
}

/// Returns every invariant violation of `plan`; empty means valid.
pub fn validate_plan(plan: &Plan) -> Vec<PlanViolation> {
    let mut out = Vec::new();

    let mut agents = BTreeSet::new();
    for agent in &plan.agents {
        if !agents.insert(agent) {
            out.push(PlanViolation::DuplicateAgent { agent: agent.clone() });
        }
    }

    let predicates: BTreeSet<&str> = plan.predicates.iter().map(String::as_str).collect();
    let check_pred = |context: String, predicate: &str, out: &mut Vec<PlanViolation>| {
        if !predicates.contains(predicate) {
            out.push(PlanViolation::UndeclaredPredicate {
                context,
                predicate: predicate.to_string(),
            });
        }
    };

    let mut ids = BTreeSet::new();
    for action in &plan.actions {
        if !ids.insert(&action.id) {
            out.push(PlanViolation::DuplicateAction {
                action: action.id.clone(),
            });
        }
        if !agents.contains(&action.agent) {
            out.push(PlanViolation::UndeclaredAgent {
                action: action.id.clone(),
                agent: action.agent.clone(),
            });
        }
        for (set_name, set) in [("precondition", &action.precond), ("effect", &action.effect)] {
            let mut polarity: BTreeMap<&str, bool> = BTreeMap::new();
            let mut reported = BTreeSet::new();
            for lit in set {
                check_pred(
                    format!("{set_name} of action `{}`", action.id),
                    &lit.predicate,
                    &mut out,
                );
                if let Some(prev) = polarity.insert(&lit.predicate, lit.positive) {
                    if prev != lit.positive && reported.insert(&lit.predicate) {
                        out.push(PlanViolation::ContradictoryLiterals {
                            action: action.id.clone(),
                            predicate: lit.predicate.clone(),
                        });
                    }
                }
            }
        }
    }
    for p in &plan.init {
        check_pred("init".to_string(), p, &mut out);
    }
    for lit in &plan.goal {
        check_pred("goal".to_string(), &lit.predicate, &mut out);
    }

    for (before, after) in &plan.deps {
        if !ids.contains(before) || !ids.contains(after) {
            out.push(PlanViolation::DanglingDependency {
                before: before.clone(),
                after: after.clone(),
            });
        }
    }

    if let Some(cycle) = find_cycle(plan, &ids) {
        out.push(PlanViolation::Cycle { actions: cycle });
    }
    out
}

/// Kahn's algorithm over the declared actions; returns the actions left over
/// (those on or behind a cycle) when the relation is cyclic.
fn find_cycle(plan: &Plan, ids: &BTreeSet<&ActionId>) -> Option<Vec<ActionId>> {
    let mut indegree: BTreeMap<&ActionId, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut succ: BTreeMap<&ActionId, Vec<&ActionId>> = BTreeMap::new();
    for (before, after) in &plan.deps {
        if !ids.contains(before) || !ids.contains(after) {
            continue;
        }
        *indegree.get_mut(after).expect("declared") += 1;
        succ.entry(before).or_default().push(after);
    }
    let mut ready: VecDeque<&ActionId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    let mut removed = 0;
    while let Some(id) = ready.pop_front() {
        removed += 1;
        for next in succ.get(id).into_iter().flatten() {
            let d = indegree.get_mut(next).expect("declared");
            *d -= 1;
            if *d == 0 {
                ready.push_back(next);
            }
        }
    }
    if removed == indegree.len() {
        None
    } else {
        Some(
            indegree
                .into_iter()
                .filter(|(_, d)| *d > 0)
                .map(|(id, _)| id.clone())
                .collect(),
        )
    }
}

/// One entry `<In(a), precond(a), a, effect(a), Out(a)>` of a local plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalEntry {
    pub in_set: BTreeSet<ActionId>,
    pub precond: Vec<Literal>,
    pub action: ActionId,
    pub effect: Vec<Literal>,
    pub out_set: BTreeSet<ActionId>,
}

/// An agent's projection of the global plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalPlan {
    pub agent: AgentId,
    pub entries: Vec<LocalEntry>,
}

impl LocalPlan {
    pub fn entry(&self, action: &ActionId) -> Option<&LocalEntry> {
        self.entries.iter().find(|e| &e.action == action)
    }
}

/// Derives one local plan per declared agent. Agents owning no action get an
/// empty local plan.
pub fn derive_local_plans(plan: &Plan) -> Result<BTreeMap<AgentId, LocalPlan>, PlanError> {
    let violations = validate_plan(plan);
    if !violations.is_empty() {
        return Err(PlanError::Invalid(violations));
    }
    let mut out: BTreeMap<AgentId, LocalPlan> = plan
        .agents
        .iter()
        .map(|agent| {
            (
                agent.clone(),
                LocalPlan {
                    agent: agent.clone(),
                    entries: Vec::new(),
                },
            )
        })
        .collect();
    for action in &plan.actions {
        let entry = LocalEntry {
            in_set: plan.dep(&action.id).into_iter().collect(),
            precond: action.precond.clone(),
            action: action.id.clone(),
            effect: action.effect.clone(),
            out_set: plan.dependents(&action.id).into_iter().collect(),
        };
        out.get_mut(&action.agent).expect("validated agent").entries.push(entry);
    }
    Ok(out)
}

/// Actions not yet completed whose dependencies have all completed.
pub fn enabled_actions(plan: &Plan, completed: &BTreeSet<ActionId>) -> Result<BTreeSet<ActionId>, PlanError> {
    if let Some(unknown) = completed.iter().find(|id| !plan.contains(id)) {
        return Err(PlanError::UnknownAction(unknown.clone()));
    }
    Ok(plan
        .actions
        .iter()
        .filter(|a| !completed.contains(&a.id))
        .filter(|a| {
            plan.deps
                .iter()
                .filter(|(_, after)| after == &a.id)
                .all(|(before, _)| completed.contains(before))
        })
        .map(|a| a.id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub action: ActionId,
    pub dispatched: u64,
    pub completed: u64,
}

/// Audit record of an execution: completed actions in completion order, with
/// the global step at which each was dispatched and completed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn actions(&self) -> Vec<ActionId> {
        self.entries.iter().map(|e| e.action.clone()).collect()
    }

    pub fn completed_set(&self) -> BTreeSet<ActionId> {
        self.entries.iter().map(|e| e.action.clone()).collect()
    }

    /// Builds a trace from actions executed back-to-back in the given order.
    pub fn sequential<I, A>(order: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<ActionId>,
    {
        let entries = order
            .into_iter()
            .enumerate()
            .map(|(i, a)| TraceEntry {
                action: a.into(),
                dispatched: 2 * i as u64,
                completed: 2 * i as u64 + 1,
            })
            .collect();
        Self { entries }
    }
}

/// True iff every action of `plan` appears exactly once in `trace` and every
/// dependency completed before its dependent was dispatched.
pub fn is_linear_extension(trace: &Trace, plan: &Plan) -> bool {
    trace.entries.len() == plan.actions.len() && respects_order(trace, plan)
}

/// The prefix form of [`is_linear_extension`]: every traced action is a plan
/// action, appears once, has well-formed step indices, and all of its
/// dependencies appear in the trace and completed before it was dispatched.
pub fn respects_order(trace: &Trace, plan: &Plan) -> bool {
    let mut by_id: BTreeMap<&ActionId, &TraceEntry> = BTreeMap::new();
    for entry in &trace.entries {
        if !plan.contains(&entry.action)
            || entry.dispatched >= entry.completed
            || by_id.insert(&entry.action, entry).is_some()
        {
            return false;
        }
    }
    by_id.iter().all(|(id, entry)| {
        plan.deps
            .iter()
            .filter(|(_, after)| after == *id)
            .all(|(before, _)| by_id.get(before).is_some_and(|b| b.completed < entry.dispatched))
    })
}
