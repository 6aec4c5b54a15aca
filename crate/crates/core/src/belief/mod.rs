//! Belief over hidden bike locations, determinization into a classical
//! problem, the replanning executor and bounded-deviation policies.

mod exec;
mod policy;

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::domain::{Act, TaskModel};
use crate::planning::{ActionLabel, Cost, Fluent, FluentId, GroundAction, Literal, PlanningProblem, State};

pub use exec::{
    compliant, physical_options, replan_loop, ExecError, Execution, ExecutionContext, Guidance, LoopSummary, Planner,
    ReplanCause, ReplanStats, StepReport,
};
pub use policy::{build_policy, Policy, PolicyConfig, PolicyError, PolicyHeader, PolicyNode, POLICY_FORMAT_VERSION};

/// Fires whenever every trigger fluent holds, revealing the truth value of
/// `observed`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensingRule {
    pub trigger: Vec<FluentId>,
    pub observed: FluentId,
    pub bike: usize,
    pub landmark: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BeliefError {
    #[error("bike `{0}` has no candidate location left")]
    NoCandidates(String),
    #[error("observation of bike `{bike}` at `{landmark}` contradicts the belief")]
    Contradiction { bike: String, landmark: String },
    #[error("{0} is not possible in the believed state")]
    Inapplicable(ActionLabel),
}

/// One revealed literal: whether `bike` sits at `landmark`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub bike: usize,
    pub landmark: usize,
    pub present: bool,
}

/// The agent's partial view of the world. Position, held bikes and visits are
/// always known; each bike's location is known up to its candidate set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BeliefState {
    pub position: usize,
    pub visited: BTreeSet<usize>,
    pub candidates: Vec<BTreeSet<usize>>,
    pub collected: BTreeSet<usize>,
}

/// Canonical rendering of the planning-relevant part of a belief. Visits are
/// left out since they never change what the agent should do.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefKey(pub String);

impl fmt::Display for BeliefKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl BeliefState {
    pub fn initial(task: &TaskModel) -> BeliefState {
        BeliefState {
            position: task.base,
            visited: BTreeSet::from([task.base]),
            candidates: task.candidates.clone(),
            collected: BTreeSet::new(),
        }
    }

    /// Where the agent knows an uncollected bike to be.
    pub fn located(&self, bike: usize) -> Option<usize> {
        if self.collected.contains(&bike) || self.candidates[bike].len() != 1 {
            return None;
        }
        self.candidates[bike].first().copied()
    }

    pub fn is_unknown(&self, bike: usize) -> bool {
        !self.collected.contains(&bike) && self.candidates[bike].len() > 1
    }

    pub fn goal_reached(&self, task: &TaskModel) -> bool {
        self.position == task.base && self.collected.len() == task.bike_count()
    }

    /// Sum of candidate-set sizes over uncollected bikes.
    pub fn uncertainty(&self) -> usize {
        self.candidates.iter().enumerate().filter(|(b, _)| !self.collected.contains(b)).map(|(_, c)| c.len()).sum()
    }

    pub fn key(&self, task: &TaskModel) -> BeliefKey {
        let mut s = format!("at={}", task.landmark_id(self.position));
        for b in 0..task.bike_count() {
            let _ = write!(s, ";{}=", task.bike_id(b));
            if self.collected.contains(&b) {
                s.push_str("held");
            } else {
                let ids: Vec<&str> = self.candidates[b].iter().map(|&l| task.landmark_id(l)).collect();
                s.push_str(&ids.join("|"));
            }
        }
        BeliefKey(s)
    }

    /// Signed literals the agent knows to hold.
    pub fn known_literals(&self, task: &TaskModel) -> Vec<Literal> {
        let pos = |fluent| Literal { fluent, positive: true };
        let neg = |fluent| Literal { fluent, positive: false };
        let mut out = vec![];
        for l in 0..task.landmark_count() {
            out.push(if l == self.position { pos(task.at[l]) } else { neg(task.at[l]) });
            if self.visited.contains(&l) {
                out.push(pos(task.visited[l]));
            }
        }
        for b in 0..task.bike_count() {
            if self.collected.contains(&b) {
                out.push(pos(task.holding[b]));
                out.extend((0..task.landmark_count()).map(|l| neg(task.bike_at[b][l])));
                continue;
            }
            out.push(neg(task.holding[b]));
            for l in 0..task.landmark_count() {
                if !self.candidates[b].contains(&l) {
                    out.push(neg(task.bike_at[b][l]));
                } else if self.candidates[b].len() == 1 {
                    out.push(pos(task.bike_at[b][l]));
                }
            }
        }
        out
    }

    /// Physical effect of an executed action on what the agent knows.
    pub fn apply(&mut self, task: &TaskModel, act: Act) -> Result<(), BeliefError> {
        match act {
            Act::Move { from, to } if from == self.position && task.adjacent(from, to) => {
                self.position = to;
                self.visited.insert(to);
                Ok(())
            }
            Act::Pickup { bike, at } if at == self.position && self.located(bike) == Some(at) => {
                self.collected.insert(bike);
                Ok(())
            }
            _ => Err(BeliefError::Inapplicable(task.label(act))),
        }
    }

    /// Fires every sensing rule whose trigger holds in the true `state`,
    /// pruning candidate sets by what is observed.
    pub fn sense_at(
        &mut self,
        task: &TaskModel,
        state: &State,
        rules: &[SensingRule],
    ) -> Result<Vec<Observation>, BeliefError> {
        let mut seen = Vec::new();
        for rule in rules {
            if self.collected.contains(&rule.bike) || !state.contains_all(&rule.trigger) {
                continue;
            }
            let present = state.contains(rule.observed);
            let cands = &mut self.candidates[rule.bike];
            let contradiction = || BeliefError::Contradiction {
                bike: task.bike_id(rule.bike).to_string(),
                landmark: task.landmark_id(rule.landmark).to_string(),
            };
            if present {
                if !cands.contains(&rule.landmark) {
                    return Err(contradiction());
                }
                if cands.len() > 1 {
                    *cands = BTreeSet::from([rule.landmark]);
                    seen.push(Observation { bike: rule.bike, landmark: rule.landmark, present });
                }
            } else if cands.contains(&rule.landmark) {
                if cands.len() == 1 {
                    return Err(contradiction());
                }
                cands.remove(&rule.landmark);
                seen.push(Observation { bike: rule.bike, landmark: rule.landmark, present });
            }
        }
        Ok(seen)
    }

    /// The true state this belief corresponds to under the map's ground truth.
    pub fn true_state(&self, task: &TaskModel) -> State {
        let mut fluents = vec![task.at[self.position]];
        fluents.extend(self.visited.iter().map(|&l| task.visited[l]));
        for b in 0..task.bike_count() {
            if self.collected.contains(&b) {
                fluents.push(task.holding[b]);
            } else {
                fluents.push(task.bike_at[b][task.truth[b]]);
            }
        }
        task.problem.state(fluents)
    }

    pub fn check(&self, task: &TaskModel) -> Result<(), BeliefError> {
        for b in 0..task.bike_count() {
            if !self.collected.contains(&b) && self.candidates[b].is_empty() {
                return Err(BeliefError::NoCandidates(task.bike_id(b).to_string()));
            }
        }
        Ok(())
    }
}

/// A classical problem in which the planner picks one optimistic location per
/// unlocated bike through zero-cost `find` actions.
#[derive(Clone, Debug)]
pub struct Determinized {
    pub problem: PlanningProblem,
    pub acts: Vec<Act>,
    index: HashMap<Act, usize>,
}

impl Determinized {
    pub fn start(&self) -> &State {
        &self.problem.initial
    }

    pub fn action_index(&self, act: Act) -> Option<usize> {
        self.index.get(&act).copied()
    }

    /// Whether `intention` is applicable from the start and reaches the goal.
    pub fn validates(&self, intention: &[Act]) -> bool {
        let mut state = self.problem.initial.clone();
        for &act in intention {
            let Some(i) = self.action_index(act) else { return false };
            let a = &self.problem.actions[i];
            if !state.contains_all(&a.pre) {
                return false;
            }
            for &f in &a.del {
                state.remove(f);
            }
            for &f in &a.add {
                state.insert(f);
            }
        }
        self.problem.goal_satisfied(&state)
    }
}

/// Compiles a belief into a classical problem.
///
/// Moves and pickups carry an `idle` precondition lock released only by the
/// pickup following a `find`, so an assumed bike is collected on the spot.
/// That is never worse than collecting it later and keeps the search small.
pub fn determinize(task: &TaskModel, belief: &BeliefState) -> Result<Determinized, BeliefError> {
    belief.check(task)?;
    let mut p = PlanningProblem::new();
    for f in task.problem.fluents() {
        p.intern(f.clone());
    }
    let unlocated: Vec<FluentId> =
        (0..task.bike_count()).map(|b| p.intern(Fluent::new("unlocated", [task.bike_id(b)]))).collect();
    let idle = p.intern(Fluent::new::<&str>("idle", []));

    let mut acts = Vec::new();
    for from in 0..task.landmark_count() {
        for &to in &task.adjacency[from] {
            p.add_action(GroundAction {
                name: "move".into(),
                params: vec![task.landmark_id(from).into(), task.landmark_id(to).into()],
                pre: vec![task.at[from], idle],
                add: vec![task.at[to], task.visited[to]],
                del: vec![task.at[from]],
                base_cost: task.move_cost(from, to).expect("adjacent"),
            });
            acts.push(Act::Move { from, to });
        }
    }
    let mut init = vec![task.at[belief.position], idle];
    init.extend(belief.visited.iter().map(|&l| task.visited[l]));
    for b in 0..task.bike_count() {
        if belief.collected.contains(&b) {
            init.push(task.holding[b]);
            continue;
        }
        let cands = &belief.candidates[b];
        let unknown = cands.len() > 1;
        if unknown {
            init.push(unlocated[b]);
        } else {
            init.push(task.bike_at[b][*cands.first().expect("checked")]);
        }
        for &l in cands {
            if unknown {
                p.add_action(GroundAction {
                    name: "find".into(),
                    params: vec![task.bike_id(b).into(), task.landmark_id(l).into()],
                    pre: vec![task.at[l], unlocated[b], idle],
                    add: vec![task.bike_at[b][l]],
                    del: vec![unlocated[b], idle],
                    base_cost: Cost::ZERO,
                });
                acts.push(Act::Find { bike: b, at: l });
            }
            p.add_action(GroundAction {
                name: "pickup".into(),
                params: vec![task.bike_id(b).into(), task.landmark_id(l).into()],
                pre: vec![task.at[l], task.bike_at[b][l]],
                add: vec![task.holding[b], idle],
                del: vec![task.bike_at[b][l]],
                base_cost: task.pickup_cost,
            });
            acts.push(Act::Pickup { bike: b, at: l });
        }
    }
    p.initial = p.state(init);
    p.known = belief.known_literals(task);
    p.goal = task.problem.goal.clone();
    let index = acts.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    Ok(Determinized { problem: p, acts, index })
}
