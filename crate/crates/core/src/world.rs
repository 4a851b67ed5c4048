//! Simulated device layer: predicate valuation, `getVal`/`execute` calls, and
//! scripted faults that decide whether an action's physical effects happen.
//!
//! The device layer does not check preconditions. Contracts do that through
//! the oracle; a device will execute whatever it is asked to.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{ActionId, ActionSpec, Literal, Plan};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown action `{0}`")]
    UnknownAction(ActionId),
    #[error("fault script for `{action}`: {problem}")]
    BadScript { action: ActionId, problem: String },
}

/// Scripted device behavior for one action.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Outcome {
    #[default]
    Nominal,
    FailNoEffect,
    /// Only the listed literals are applied, yet the device reports success.
    PartialEffect(Vec<Literal>),
    /// Effects land `n` steps after the call returns.
    DelaySteps(u64),
}

/// Per-action outcomes; actions without an entry behave nominally.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OutcomeScript {
    pub outcomes: BTreeMap<ActionId, Outcome>,
}

/// One fault-script entry as written on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub kind: ScriptKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Literal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptKind {
    Nominal,
    Fail,
    Partial,
    Delay,
}

impl OutcomeScript {
    pub fn outcome(&self, action: &ActionId) -> &Outcome {
        static NOMINAL: Outcome = Outcome::Nominal;
        self.outcomes.get(action).unwrap_or(&NOMINAL)
    }

    /// Builds a script from its file form, checking it against `plan`.
    /// Every problem is reported.
    pub fn from_entries(entries: BTreeMap<ActionId, ScriptEntry>, plan: &Plan) -> Result<Self, Vec<WorldError>> {
        let mut errors = Vec::new();
        let mut outcomes = BTreeMap::new();
        for (id, entry) in entries {
            let Some(spec) = plan.action(&id) else {
                errors.push(WorldError::UnknownAction(id));
                continue;
            };
            let outcome = match entry.kind {
                ScriptKind::Nominal => Outcome::Nominal,
                ScriptKind::Fail => Outcome::FailNoEffect,
                ScriptKind::Partial => {
                    if let Some(stray) = entry.effects.iter().find(|l| !spec.effect.contains(l)) {
                        errors.push(WorldError::BadScript {
                            action: id,
                            problem: format!("partial effect `{stray}` is not an effect of the action"),
                        });
                        continue;
                    }
                    Outcome::PartialEffect(entry.effects)
                }
                ScriptKind::Delay => match entry.steps {
                    Some(n) => Outcome::DelaySteps(n),
                    None => {
                        errors.push(WorldError::BadScript {
                            action: id,
                            problem: "delay requires `steps`".to_string(),
                        });
                        continue;
                    }
                },
            };
            outcomes.insert(id, outcome);
        }
        if errors.is_empty() {
            Ok(Self { outcomes })
        } else {
            Err(errors)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecOutcome {
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub action: ActionId,
    pub outcome: ExecOutcome,
    /// Step at which the scripted effects are (or will be) in place.
    pub step_completed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Scheduled {
    due: u64,
    literals: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    values: BTreeMap<String, bool>,
    step: u64,
    scheduled: Vec<Scheduled>,
}

/// Builds the initial valuation: exactly the predicates in `plan.init` are true.
pub fn init_world(plan: &Plan) -> WorldState {
    let mut values: BTreeMap<String, bool> = plan.predicates.iter().map(|p| (p.clone(), false)).collect();
    for p in &plan.init {
        values.insert(p.clone(), true);
    }
    WorldState {
        values,
        step: 0,
        scheduled: Vec::new(),
    }
}

impl WorldState {
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn values(&self) -> &BTreeMap<String, bool> {
        &self.values
    }

    pub fn get_val(&self, predicate: &str) -> Result<bool, WorldError> {
        self.values
            .get(predicate)
            .copied()
            .ok_or_else(|| WorldError::UnknownPredicate(predicate.to_string()))
    }

    /// Reads several predicates at one step.
    pub fn snapshot(&self, predicates: &[String]) -> Result<BTreeMap<String, bool>, WorldError> {
        predicates
            .iter()
            .map(|p| self.get_val(p).map(|v| (p.clone(), v)))
            .collect()
    }

    pub fn literal_holds(&self, lit: &Literal) -> Result<bool, WorldError> {
        self.get_val(&lit.predicate).map(|v| lit.holds(v))
    }

    /// Invokes the device for `action` under the scripted `outcome`.
    /// The step always advances by one.
    pub fn execute_action(&mut self, action: &ActionSpec, outcome: &Outcome) -> Result<ExecResult, WorldError> {
        if let Some(lit) = action.effect.iter().find(|l| !self.values.contains_key(&l.predicate)) {
            return Err(WorldError::UnknownPredicate(lit.predicate.clone()));
        }
        self.advance();
        let (outcome, step_completed) = match outcome {
            Outcome::Nominal => {
                self.apply(&action.effect);
                (ExecOutcome::Succeeded, self.step)
            }
            Outcome::FailNoEffect => (ExecOutcome::Failed, self.step),
            Outcome::PartialEffect(subset) => {
                let applied: Vec<Literal> = subset.iter().filter(|l| action.effect.contains(l)).cloned().collect();
                self.apply(&applied);
                (ExecOutcome::Succeeded, self.step)
            }
            Outcome::DelaySteps(0) => {
                self.apply(&action.effect);
                (ExecOutcome::Succeeded, self.step)
            }
            Outcome::DelaySteps(n) => {
                let due = self.step + n;
                self.scheduled.push(Scheduled {
                    due,
                    literals: action.effect.clone(),
                });
                (ExecOutcome::Succeeded, due)
            }
        };
        Ok(ExecResult {
            action: action.id.clone(),
            outcome,
            step_completed,
        })
    }

    /// Moves time forward one step, landing any delayed effects that fall due.
    pub fn advance(&mut self) {
        self.step += 1;
        let now = self.step;
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.scheduled)
            .into_iter()
            .partition(|s| s.due <= now);
        self.scheduled = later;
        for s in due {
            self.apply(&s.literals);
        }
    }

    fn apply(&mut self, literals: &[Literal]) {
        for lit in literals {
            if let Some(v) = self.values.get_mut(&lit.predicate) {
                *v = lit.positive;
            }
        }
    }
}

/// The device layer for one scenario: world state plus the action catalog and
/// its fault script.
#[derive(Debug, Clone)]
pub struct Devices {
    pub state: WorldState,
    catalog: BTreeMap<ActionId, ActionSpec>,
    script: OutcomeScript,
    executed: BTreeSet<ActionId>,
}

impl Devices {
    pub fn new(plan: &Plan, script: OutcomeScript) -> Self {
        Self {
            state: init_world(plan),
            catalog: plan.actions.iter().map(|a| (a.id.clone(), a.clone())).collect(),
            script,
            executed: BTreeSet::new(),
        }
    }

    pub fn execute(&mut self, action: &ActionId) -> Result<ExecResult, WorldError> {
        let spec = self
            .catalog
            .get(action)
            .ok_or_else(|| WorldError::UnknownAction(action.clone()))?;
        let outcome = self.script.outcome(action);
        let result = self.state.execute_action(spec, outcome)?;
        self.executed.insert(action.clone());
        Ok(result)
    }

    pub fn executed(&self) -> &BTreeSet<ActionId> {
        &self.executed
    }

    pub fn precondition_holds(&self, action: &ActionId) -> Result<bool, WorldError> {
        let spec = self
            .catalog
            .get(action)
            .ok_or_else(|| WorldError::UnknownAction(action.clone()))?;
        for lit in &spec.precond {
            if !self.state.literal_holds(lit)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{parse_plan, AgentId};

    fn plan() -> Plan {
        parse_plan(
            r#"{
                "agents": ["r"],
                "predicates": ["atA", "atB", "atC"],
                "actions": [
                    {"id": "go", "agent": "r", "precond": ["atA"], "effect": ["atB", "!atA"]},
                    {"id": "both", "agent": "r", "effect": ["atB", "atC"]}
                ],
                "init": ["atA", "atA"]
            }"#,
        )
        .unwrap()
    }

    fn spec(plan: &Plan, id: &str) -> ActionSpec {
        plan.action(&id.into()).unwrap().clone()
    }

    #[test]
    fn init_marks_exactly_init_true() {
        let w = init_world(&plan());
        assert_eq!(w.get_val("atA"), Ok(true));
        assert_eq!(w.get_val("atB"), Ok(false));
        assert_eq!(w.values().len(), 3);
        assert_eq!(w.step(), 0);
        assert!(init_world(&Plan::default()).values().is_empty());
    }

    #[test]
    fn get_val_unknown_predicate() {
        let w = init_world(&plan());
        assert_eq!(w.get_val("atZ"), Err(WorldError::UnknownPredicate("atZ".into())));
    }

    #[test]
    fn nominal_sets_and_clears() {
        let p = plan();
        let mut w = init_world(&p);
        let r = w.execute_action(&spec(&p, "go"), &Outcome::Nominal).unwrap();
        assert_eq!(r.outcome, ExecOutcome::Succeeded);
        assert_eq!(w.get_val("atB"), Ok(true));
        assert_eq!(w.get_val("atA"), Ok(false));
        assert_eq!(w.step(), 1);
    }

    #[test]
    fn fail_leaves_world_unchanged() {
        let p = plan();
        let mut w = init_world(&p);
        let before = w.values().clone();
        let r = w.execute_action(&spec(&p, "go"), &Outcome::FailNoEffect).unwrap();
        assert_eq!(r.outcome, ExecOutcome::Failed);
        assert_eq!(w.values(), &before);
        assert_eq!(w.step(), 1);
    }

    #[test]
    fn partial_applies_only_subset() {
        let p = plan();
        let mut w = init_world(&p);
        let r = w
            .execute_action(&spec(&p, "both"), &Outcome::PartialEffect(vec![Literal::pos("atB")]))
            .unwrap();
        assert_eq!(r.outcome, ExecOutcome::Succeeded);
        assert_eq!(w.get_val("atB"), Ok(true));
        assert_eq!(w.get_val("atC"), Ok(false));
    }

    #[test]
    fn delay_lands_later() {
        let p = plan();
        let mut w = init_world(&p);
        let r = w.execute_action(&spec(&p, "both"), &Outcome::DelaySteps(2)).unwrap();
        assert_eq!(r.step_completed, 3);
        assert_eq!(w.get_val("atC"), Ok(false));
        w.advance();
        assert_eq!(w.get_val("atC"), Ok(false));
        w.advance();
        assert_eq!(w.get_val("atC"), Ok(true));
        assert_eq!(w.step(), 3);
    }

    #[test]
    fn devices_reject_unknown_action() {
        let mut d = Devices::new(&plan(), OutcomeScript::default());
        assert_eq!(
            d.execute(&"nope".into()).unwrap_err(),
            WorldError::UnknownAction("nope".into())
        );
        assert!(d.precondition_holds(&"go".into()).unwrap());
        d.execute(&"go".into()).unwrap();
        assert!(!d.precondition_holds(&"go".into()).unwrap());
    }

    #[test]
    fn script_validation_collects_every_problem() {
        let p = plan();
        let mut entries = BTreeMap::new();
        entries.insert(
            ActionId::from("ghost"),
            ScriptEntry {
                kind: ScriptKind::Fail,
                effects: vec![],
                steps: None,
            },
        );
        entries.insert(
            ActionId::from("go"),
            ScriptEntry {
                kind: ScriptKind::Partial,
                effects: vec![Literal::pos("atC")],
                steps: None,
            },
        );
        entries.insert(
            ActionId::from("both"),
            ScriptEntry {
                kind: ScriptKind::Delay,
                effects: vec![],
                steps: None,
            },
        );
        let errs = OutcomeScript::from_entries(entries, &p).unwrap_err();
        assert_eq!(errs.len(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn outcome() -> impl Strategy<Value = Outcome> {
            prop_oneof![
                Just(Outcome::Nominal),
                Just(Outcome::FailNoEffect),
                proptest::sample::subsequence(vec![Literal::pos("p1"), Literal::neg("p2"), Literal::pos("p3")], 0..=3)
                    .prop_map(Outcome::PartialEffect),
                (0u64..4).prop_map(Outcome::DelaySteps),
            ]
        }

        fn world_plan(init: Vec<bool>) -> Plan {
            let predicates: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
            Plan {
                agents: vec![AgentId::from("x")],
                init: predicates
                    .iter()
                    .zip(init)
                    .filter(|(_, v)| *v)
                    .map(|(p, _)| p.clone())
                    .collect(),
                predicates,
                actions: vec![ActionSpec {
                    id: "a".into(),
                    agent: "x".into(),
                    precond: vec![Literal::pos("p0")],
                    effect: vec![Literal::pos("p1"), Literal::neg("p2"), Literal::pos("p3")],
                }],
                ..Plan::default()
            }
        }

        proptest! {
            #[test]
            fn frame_property(init in proptest::collection::vec(any::<bool>(), 6), out in outcome(), extra in 0usize..5) {
                let p = world_plan(init);
                let mut w = init_world(&p);
                let before = w.values().clone();
                w.execute_action(&p.actions[0], &out).unwrap();
                for _ in 0..extra { w.advance(); }
                let touched: BTreeSet<&str> = p.actions[0].effect.iter().map(|l| l.predicate.as_str()).collect();
                for (k, v) in w.values() {
                    if !touched.contains(k.as_str()) {
                        prop_assert_eq!(before[k], *v);
                    }
                }
            }

            #[test]
            fn get_val_is_pure(init in proptest::collection::vec(any::<bool>(), 6), idx in 0usize..6) {
                let w = init_world(&world_plan(init));
                let name = format!("p{idx}");
                prop_assert_eq!(w.get_val(&name), w.get_val(&name));
            }

            #[test]
            fn nominal_establishes_effect(init in proptest::collection::vec(any::<bool>(), 6)) {
                let p = world_plan(init);
                let mut w = init_world(&p);
                w.execute_action(&p.actions[0], &Outcome::Nominal).unwrap();
                for lit in &p.actions[0].effect {
                    prop_assert!(w.literal_holds(lit).unwrap());
                }
            }
        }
    }
}
