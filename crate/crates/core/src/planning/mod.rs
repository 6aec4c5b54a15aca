//! Deterministic classical planning: fluents, grounded STRIPS actions with
//! exact costs, and an optimal best-first search over them.
//!
//! Everything in the toolkit is compiled down to a [`PlanningProblem`]. The
//! problem is immutable once built and every operation here is a pure
//! function of its inputs.

mod cost;
mod search;

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cost::{BaseCost, Cost, CostFn, ParseCostError, ScaledCost};
pub use search::{search, search_with, Heuristic, SearchOptions, SearchOutcome, SearchStats};

use crate::belief::SensingRule;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanningError {
    #[error("action `{action}` is not applicable: missing precondition `{missing}`")]
    Inapplicable { action: String, missing: String },
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// A ground atom such as `at(tree)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fluent {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Fluent {
    pub fn new<S: Into<String>>(predicate: &str, args: impl IntoIterator<Item = S>) -> Fluent {
        Fluent { predicate: predicate.to_string(), args: args.into_iter().map(Into::into).collect() }
    }
}

impl fmt::Display for Fluent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.predicate, self.args.join(","))
    }
}

/// Index of a fluent in its problem's universe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FluentId(pub u32);

impl FluentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A signed fluent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub fluent: FluentId,
    pub positive: bool,
}

/// The name and arguments of a ground action, e.g. `move(tree,green_house)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionLabel {
    pub name: String,
    pub params: Vec<String>,
}

impl ActionLabel {
    pub fn new<S: Into<String>>(name: &str, params: impl IntoIterator<Item = S>) -> ActionLabel {
        ActionLabel { name: name.to_string(), params: params.into_iter().map(Into::into).collect() }
    }

    pub fn param(&self, i: usize) -> Option<&str> {
        self.params.get(i).map(String::as_str)
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.params.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse action label `{0}`")]
pub struct ParseLabelError(pub String);

impl FromStr for ActionLabel {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<ActionLabel, ParseLabelError> {
        let err = || ParseLabelError(s.to_string());
        let s = s.trim();
        let open = s.find('(').ok_or_else(err)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(err)?;
        let name = &s[..open];
        if name.is_empty() || inner.contains(['(', ')']) {
            return Err(err());
        }
        let params = if inner.is_empty() { Vec::new() } else { inner.split(',').map(|p| p.trim().to_string()).collect() };
        Ok(ActionLabel { name: name.to_string(), params })
    }
}

impl Serialize for ActionLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<ActionLabel, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundAction {
    pub name: String,
    pub params: Vec<String>,
    pub pre: Vec<FluentId>,
    pub add: Vec<FluentId>,
    pub del: Vec<FluentId>,
    pub base_cost: Cost,
}

impl GroundAction {
    pub fn label(&self) -> ActionLabel {
        ActionLabel { name: self.name.clone(), params: self.params.clone() }
    }

    pub fn matches(&self, label: &ActionLabel) -> bool {
        self.name == label.name && self.params == label.params
    }
}

/// A set of true fluents, stored as a bitset over the problem's universe.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct State {
    words: Vec<u64>,
}

impl State {
    pub fn empty(universe: usize) -> State {
        State { words: vec![0; universe.div_ceil(64)] }
    }

    pub fn from_fluents(universe: usize, fluents: impl IntoIterator<Item = FluentId>) -> State {
        let mut s = State::empty(universe);
        for f in fluents {
            s.insert(f);
        }
        s
    }

    pub fn contains(&self, f: FluentId) -> bool {
        let i = f.index();
        self.words.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    pub fn insert(&mut self, f: FluentId) {
        let i = f.index();
        if i / 64 >= self.words.len() {
            self.words.resize(i / 64 + 1, 0);
        }
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, f: FluentId) {
        let i = f.index();
        if let Some(w) = self.words.get_mut(i / 64) {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn contains_all(&self, fs: &[FluentId]) -> bool {
        fs.iter().all(|&f| self.contains(f))
    }

    pub fn iter(&self) -> impl Iterator<Item = FluentId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| FluentId((wi * 64 + b) as u32))
        })
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Keeps only the fluents set in `mask`.
    pub fn masked(&self, mask: &State) -> State {
        let words = self.words.iter().enumerate().map(|(i, w)| w & mask.words.get(i).copied().unwrap_or(0)).collect();
        State { words }
    }

    /// Extends the backing storage so that the bitset spans `universe` fluents.
    pub fn widen(&mut self, universe: usize) {
        let n = universe.div_ceil(64);
        if self.words.len() < n {
            self.words.resize(n, 0);
        }
    }
}

/// A sequence of ground actions of one problem, with its total cost under
/// the cost model it was found with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub steps: Vec<usize>,
    pub cost: Cost,
}

impl Plan {
    pub fn empty() -> Plan {
        Plan { steps: Vec::new(), cost: Cost::ZERO }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn labels(&self, problem: &PlanningProblem) -> Vec<ActionLabel> {
        self.steps.iter().map(|&i| problem.actions[i].label()).collect()
    }
}

/// Fluent universe, ground actions, sensing rules, the true initial state,
/// the agent's initially known literals and a goal.
#[derive(Clone, Debug)]
pub struct PlanningProblem {
    fluents: Vec<Fluent>,
    index: HashMap<Fluent, FluentId>,
    pub actions: Vec<GroundAction>,
    pub sensing: Vec<SensingRule>,
    pub initial: State,
    pub known: Vec<Literal>,
    pub goal: Vec<FluentId>,
}

impl Default for PlanningProblem {
    fn default() -> Self {
        PlanningProblem::new()
    }
}

impl PlanningProblem {
    pub fn new() -> PlanningProblem {
        PlanningProblem {
            fluents: Vec::new(),
            index: HashMap::new(),
            actions: Vec::new(),
            sensing: Vec::new(),
            initial: State::default(),
            known: Vec::new(),
            goal: Vec::new(),
        }
    }

    /// Interns a fluent, returning its id.
    pub fn intern(&mut self, fluent: Fluent) -> FluentId {
        if let Some(&id) = self.index.get(&fluent) {
            return id;
        }
        let id = FluentId(self.fluents.len() as u32);
        self.index.insert(fluent.clone(), id);
        self.fluents.push(fluent);
        id
    }

    pub fn fluent_id(&self, fluent: &Fluent) -> Option<FluentId> {
        self.index.get(fluent).copied()
    }

    pub fn fluent(&self, id: FluentId) -> &Fluent {
        &self.fluents[id.index()]
    }

    pub fn fluents(&self) -> &[Fluent] {
        &self.fluents
    }

    pub fn universe(&self) -> usize {
        self.fluents.len()
    }

    pub fn add_action(&mut self, action: GroundAction) -> usize {
        self.actions.push(action);
        self.actions.len() - 1
    }

    pub fn find_action(&self, label: &ActionLabel) -> Option<usize> {
        self.actions.iter().position(|a| a.matches(label))
    }

    pub fn state(&self, fluents: impl IntoIterator<Item = FluentId>) -> State {
        State::from_fluents(self.universe(), fluents)
    }

    pub fn goal_satisfied(&self, state: &State) -> bool {
        state.contains_all(&self.goal)
    }

    /// Fluents that some precondition or the goal mentions. States that agree
    /// on these have identical futures.
    pub fn relevant_mask(&self) -> State {
        let mut mask = State::empty(self.universe());
        for a in &self.actions {
            for &f in &a.pre {
                mask.insert(f);
            }
        }
        for &f in &self.goal {
            mask.insert(f);
        }
        mask
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        let n = self.universe() as u32;
        let in_range = |f: &FluentId| f.0 < n;
        let mut seen = HashMap::new();
        for a in &self.actions {
            if !(a.pre.iter().all(in_range) && a.add.iter().all(in_range) && a.del.iter().all(in_range)) {
                return Err(PlanningError::Malformed(format!("action {} mentions an unknown fluent", a.label())));
            }
            if a.add.iter().any(|f| a.del.contains(f)) {
                return Err(PlanningError::Malformed(format!("action {} adds and deletes the same fluent", a.label())));
            }
            if a.base_cost.is_negative() {
                return Err(PlanningError::Malformed(format!("action {} has negative cost", a.label())));
            }
            if seen.insert(a.label(), ()).is_some() {
                return Err(PlanningError::Malformed(format!("duplicate action {}", a.label())));
            }
        }
        if !self.goal.iter().all(in_range) || self.initial.iter().any(|f| f.0 >= n) {
            return Err(PlanningError::Malformed("goal or initial state mentions an unknown fluent".into()));
        }
        for lit in &self.known {
            if self.initial.contains(lit.fluent) != lit.positive {
                return Err(PlanningError::Malformed(format!(
                    "known literal {}{} contradicts the true initial state",
                    if lit.positive { "" } else { "not " },
                    self.fluent(lit.fluent)
                )));
            }
        }
        Ok(())
    }

    pub fn applicable(&self, state: &State, action: usize) -> bool {
        applicable(state, &self.actions[action])
    }

    /// Human-readable dump of the grounded problem, one item per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "; {} fluents, {} actions", self.universe(), self.actions.len());
        for f in &self.fluents {
            let _ = writeln!(out, "fluent {f}");
        }
        let names = |fs: &[FluentId]| fs.iter().map(|&f| self.fluent(f).to_string()).collect::<Vec<_>>().join(" ");
        for a in &self.actions {
            let _ = writeln!(
                out,
                "action {} cost={} pre=[{}] add=[{}] del=[{}]",
                a.label(),
                a.base_cost,
                names(&a.pre),
                names(&a.add),
                names(&a.del)
            );
        }
        for r in &self.sensing {
            let _ = writeln!(out, "sense [{}] -> {}", names(&r.trigger), self.fluent(r.observed));
        }
        let init: Vec<_> = self.initial.iter().collect();
        let _ = writeln!(out, "init {}", names(&init));
        for lit in &self.known {
            let _ = writeln!(out, "known {}{}", if lit.positive { "" } else { "not " }, self.fluent(lit.fluent));
        }
        let _ = writeln!(out, "goal {}", names(&self.goal));
        out
    }
}

pub fn applicable(state: &State, action: &GroundAction) -> bool {
    state.contains_all(&action.pre)
}

/// `(state \ del) ∪ add`, failing when a precondition is missing.
pub fn apply(problem: &PlanningProblem, state: &State, action: &GroundAction) -> Result<State, PlanningError> {
    if let Some(&missing) = action.pre.iter().find(|&&f| !state.contains(f)) {
        return Err(PlanningError::Inapplicable {
            action: action.label().to_string(),
            missing: problem.fluent(missing).to_string(),
        });
    }
    Ok(apply_unchecked(state, action))
}

pub(crate) fn apply_unchecked(state: &State, action: &GroundAction) -> State {
    let mut next = state.clone();
    for &f in &action.del {
        next.remove(f);
    }
    for &f in &action.add {
        next.insert(f);
    }
    next
}

/// True iff `plan` is sequentially applicable from `start` and ends in a
/// state containing `goal`.
pub fn validate(problem: &PlanningProblem, plan: &[usize], start: &State, goal: &[FluentId]) -> bool {
    let mut state = start.clone();
    for &i in plan {
        let Some(a) = problem.actions.get(i) else { return false };
        if !applicable(&state, a) {
            return false;
        }
        state = apply_unchecked(&state, a);
    }
    state.contains_all(goal)
}

/// Total cost of a sequence of actions under `costs`.
pub fn plan_cost(problem: &PlanningProblem, plan: &[usize], costs: &dyn CostFn) -> Cost {
    plan.iter().map(|&i| costs.cost(&problem.actions[i])).sum()
}
