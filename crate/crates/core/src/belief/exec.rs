use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use super::{determinize, BeliefError, BeliefKey, BeliefState, Observation, Policy};
use crate::domain::{Act, TaskModel};
use crate::planning::{search, ActionLabel, CostFn, PlanningError, State};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error("no plan reaches the goal from belief {0}")]
    Unsolvable(BeliefKey),
    #[error("gave up after {0} replans triggered by observations")]
    ReplanBudget(usize),
    #[error("{0} cannot be executed here")]
    Inapplicable(ActionLabel),
    #[error("episode did not finish within {0} steps")]
    StepLimit(usize),
}

/// Why the intention was replaced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplanCause {
    Initial,
    /// Sensing invalidated an optimistic assumption.
    Observation,
    /// The user did something other than what was asked.
    Recovery,
    /// A policy lookup handed over a different plan than the one in progress.
    PolicySwitch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplanStats {
    pub observation: usize,
    pub recovery: usize,
    pub policy_switch: usize,
    pub policy_hits: usize,
    pub policy_misses: usize,
}

impl ReplanStats {
    fn record(&mut self, cause: ReplanCause) {
        match cause {
            ReplanCause::Initial => {}
            ReplanCause::Observation => self.observation += 1,
            ReplanCause::Recovery => self.recovery += 1,
            ReplanCause::PolicySwitch => self.policy_switch += 1,
        }
    }
}

/// Determinize-and-search with results memoized per belief. Searches are
/// deterministic, so sharing one planner between threads never changes
/// results.
pub struct Planner {
    task: Arc<TaskModel>,
    costs: Arc<dyn CostFn>,
    cache: DashMap<BeliefKey, Arc<[Act]>>,
    searches: AtomicUsize,
}

impl Planner {
    pub fn new(task: Arc<TaskModel>, costs: Arc<dyn CostFn>) -> Planner {
        Planner { task, costs, cache: DashMap::new(), searches: AtomicUsize::new(0) }
    }

    pub fn task(&self) -> &Arc<TaskModel> {
        &self.task
    }

    pub fn costs(&self) -> &dyn CostFn {
        &*self.costs
    }

    /// Number of searches actually run (cache misses).
    pub fn searches(&self) -> usize {
        self.searches.load(Ordering::Relaxed)
    }

    pub fn plan(&self, belief: &BeliefState) -> Result<Arc<[Act]>, ExecError> {
        let key = belief.key(&self.task);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let det = determinize(&self.task, belief)?;
        self.searches.fetch_add(1, Ordering::Relaxed);
        let plan = search(&det.problem, det.start(), &*self.costs)?.plan().ok_or_else(|| ExecError::Unsolvable(key.clone()))?;
        let acts: Arc<[Act]> = plan.steps.iter().map(|&i| det.acts[i]).collect();
        self.cache.insert(key, acts.clone());
        Ok(acts)
    }
}

/// Where an agent is in carrying out its plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionContext {
    /// Executed physical actions.
    pub history: Vec<Act>,
    /// Remaining planned actions, including `find` assumptions.
    pub intention: Vec<Act>,
    pub belief: BeliefState,
    /// Length of `history` when the current intention was adopted.
    pub adopted_at: usize,
}

impl ExecutionContext {
    /// The pending physical action.
    pub fn next(&self) -> Option<Act> {
        self.intention.iter().copied().find(|a| a.is_physical())
    }

    /// Physical actions since the current plan was adopted.
    pub fn since_adoption(&self) -> &[Act] {
        &self.history[self.adopted_at..]
    }
}

#[derive(Clone)]
pub enum Guidance {
    Planner,
    Policy(Arc<Policy>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepReport {
    pub complied: bool,
    pub observations: Vec<Observation>,
    pub replan: Option<ReplanCause>,
    pub picked: Option<usize>,
}

/// Applicable physical actions in the true world: a move along every road
/// out of the current landmark and a pickup of any bike lying there.
pub fn physical_options(task: &TaskModel, belief: &BeliefState) -> Vec<Act> {
    let here = belief.position;
    let mut out: Vec<Act> = task.adjacency[here].iter().map(|&to| Act::Move { from: here, to }).collect();
    for b in 0..task.bike_count() {
        if !belief.collected.contains(&b) && task.truth[b] == here {
            out.push(Act::Pickup { bike: b, at: here });
        }
    }
    out
}

/// Executes `act` against the ground truth and senses. Returns the updated
/// belief, the observations made and the old intention minus what `act`
/// consumed and minus confirmed assumptions.
pub(crate) fn advance(
    task: &TaskModel,
    belief: &BeliefState,
    intention: &[Act],
    act: Act,
) -> Result<(BeliefState, Vec<Observation>, Vec<Act>, bool), ExecError> {
    if !physical_options(task, belief).contains(&act) {
        return Err(ExecError::Inapplicable(task.label(act)));
    }
    let mut next = belief.clone();
    next.apply(task, act)?;
    let observations = next.sense_at(task, &next.true_state(task), &task.problem.sensing)?;
    let complied = intention.iter().copied().find(|a| a.is_physical()) == Some(act);
    let mut rest: Vec<Act> = if complied {
        let at = intention.iter().position(|&a| a == act).expect("present");
        intention[..at].iter().chain(&intention[at + 1..]).copied().collect()
    } else {
        intention.to_vec()
    };
    rest.retain(|a| match *a {
        Act::Find { bike, at } => next.located(bike) != Some(at) && !next.collected.contains(&bike),
        _ => true,
    });
    Ok((next, observations, rest, complied))
}

/// Keeps `expected` unless the user deviated or an observation broke it.
pub(crate) fn decide(
    planner: &Planner,
    belief: &BeliefState,
    expected: Vec<Act>,
    complied: bool,
    observed: bool,
) -> Result<(Vec<Act>, Option<ReplanCause>), ExecError> {
    let task = planner.task();
    if belief.goal_reached(task) {
        return Ok((Vec::new(), None));
    }
    if !complied {
        return Ok((planner.plan(belief)?.to_vec(), Some(ReplanCause::Recovery)));
    }
    if observed || expected.is_empty() {
        let det = determinize(task, belief)?;
        if expected.is_empty() || !det.validates(&expected) {
            return Ok((planner.plan(belief)?.to_vec(), Some(ReplanCause::Observation)));
        }
    }
    Ok((expected, None))
}

/// One agent carrying out the task against the map's ground truth.
pub struct Execution {
    planner: Arc<Planner>,
    guidance: Guidance,
    pub ctx: ExecutionContext,
    pub stats: ReplanStats,
    /// Limit on observation-driven replans.
    pub max_replans: usize,
}

impl Execution {
    pub fn start(planner: Arc<Planner>, guidance: Guidance) -> Result<(Execution, Vec<Observation>), ExecError> {
        let task = planner.task().clone();
        let mut belief = BeliefState::initial(&task);
        let observations = belief.sense_at(&task, &belief.true_state(&task), &task.problem.sensing)?;
        let total: usize = task.candidates.iter().map(|c| c.len()).sum();
        let mut exec = Execution {
            planner,
            guidance,
            ctx: ExecutionContext { history: Vec::new(), intention: Vec::new(), belief, adopted_at: 0 },
            stats: ReplanStats::default(),
            max_replans: (4 * task.bike_count()).max(total),
        };
        let intention = match exec.lookup() {
            Some(i) => i,
            None if exec.ctx.belief.goal_reached(&task) => Vec::new(),
            None => exec.planner.plan(&exec.ctx.belief)?.to_vec(),
        };
        exec.ctx.intention = intention;
        Ok((exec, observations))
    }

    pub fn task(&self) -> &Arc<TaskModel> {
        self.planner.task()
    }

    pub fn planner(&self) -> &Arc<Planner> {
        &self.planner
    }

    pub fn belief(&self) -> &BeliefState {
        &self.ctx.belief
    }

    pub fn world(&self) -> State {
        self.ctx.belief.true_state(self.task())
    }

    pub fn next(&self) -> Option<Act> {
        self.ctx.next()
    }

    pub fn done(&self) -> bool {
        self.ctx.belief.goal_reached(self.task())
    }

    pub fn options(&self) -> Vec<Act> {
        physical_options(self.task(), &self.ctx.belief)
    }

    fn lookup(&mut self) -> Option<Vec<Act>> {
        let Guidance::Policy(policy) = &self.guidance else { return None };
        match policy.get(&self.ctx.belief.key(self.planner.task())) {
            Some(node) => {
                self.stats.policy_hits += 1;
                Some(node.intention.clone())
            }
            None => {
                self.stats.policy_misses += 1;
                None
            }
        }
    }

    /// The user performed `act`.
    pub fn step(&mut self, act: Act) -> Result<StepReport, ExecError> {
        let task = self.task().clone();
        let (belief, observations, expected, complied) = advance(&task, &self.ctx.belief, &self.ctx.intention, act)?;
        self.ctx.belief = belief;
        self.ctx.history.push(act);
        let (intention, replan) = match self.lookup() {
            Some(found) if found == expected => (found, None),
            Some(found) => {
                let cause = if !complied {
                    ReplanCause::Recovery
                } else if !observations.is_empty() {
                    ReplanCause::Observation
                } else {
                    ReplanCause::PolicySwitch
                };
                (found, Some(cause))
            }
            None => decide(&self.planner, &self.ctx.belief, expected, complied, !observations.is_empty())?,
        };
        if let Some(cause) = replan {
            self.stats.record(cause);
            self.ctx.adopted_at = self.ctx.history.len();
            if self.stats.observation > self.max_replans {
                return Err(ExecError::ReplanBudget(self.max_replans));
            }
        }
        self.ctx.intention = intention;
        let picked = match act {
            Act::Pickup { bike, .. } => Some(bike),
            _ => None,
        };
        Ok(StepReport { complied, observations, replan, picked })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopSummary {
    pub history: Vec<Act>,
    pub stats: ReplanStats,
}

/// Runs to the goal with `user` choosing every action.
pub fn replan_loop(
    mut exec: Execution,
    mut user: impl FnMut(&Execution) -> Act,
    max_steps: usize,
) -> Result<LoopSummary, ExecError> {
    let mut steps = 0;
    while !exec.done() {
        if steps == max_steps {
            return Err(ExecError::StepLimit(max_steps));
        }
        let act = user(&exec);
        exec.step(act)?;
        steps += 1;
    }
    Ok(LoopSummary { history: exec.ctx.history, stats: exec.stats })
}

/// Follows the agent's plan exactly.
pub fn compliant(exec: &Execution) -> Act {
    exec.next().expect("an unfinished episode always has a next action")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::bundled;
    use crate::planning::BaseCost;

    fn planner(map: &crate::domain::MapSpec) -> Arc<Planner> {
        Arc::new(Planner::new(Arc::new(TaskModel::compile(map)), Arc::new(BaseCost)))
    }

    #[test]
    fn wrong_guess_costs_exactly_one_replan() {
        // bike at Z; the tie-break sends the agent to Y first
        let p = planner(&bundled::fig1());
        let (exec, _) = Execution::start(p.clone(), Guidance::Planner).unwrap();
        let y = p.task().landmark("Y").unwrap();
        assert!(exec.ctx.intention.contains(&Act::Find { bike: 0, at: y }));
        let out = replan_loop(exec, compliant, 100).unwrap();
        assert_eq!(p.searches(), 2);
        assert_eq!(out.stats.observation, 1);
    }

    #[test]
    fn known_bikes_need_a_single_search() {
        let mut map = bundled::fig1();
        map.bikes[0].location = "Y".into();
        let p = planner(&map);
        let out = replan_loop(Execution::start(p.clone(), Guidance::Planner).unwrap().0, compliant, 100).unwrap();
        assert_eq!(p.searches(), 1);
        assert_eq!(out.stats, ReplanStats::default());
    }

    #[test]
    fn no_bikes_needs_one_search() {
        let mut map = bundled::fig3();
        map.bikes.clear();
        map.reports.clear();
        map.visibility.clear();
        let p = planner(&map);
        let (exec, _) = Execution::start(p.clone(), Guidance::Planner).unwrap();
        assert!(exec.done());
        assert!(exec.ctx.intention.is_empty());
    }

    #[test]
    fn compliant_user_executes_the_first_plan_verbatim() {
        let p = planner(&bundled::fig3());
        let (exec, _) = Execution::start(p.clone(), Guidance::Planner).unwrap();
        let first: Vec<Act> = exec.ctx.intention.iter().copied().filter(|a| a.is_physical()).collect();
        let out = replan_loop(exec, compliant, 100).unwrap();
        assert_eq!(out.history, first);
    }

    #[test]
    fn deviation_triggers_recovery() {
        let p = planner(&bundled::fig3());
        let task = p.task().clone();
        let (mut exec, _) = Execution::start(p, Guidance::Planner).unwrap();
        let wrong = exec.options().into_iter().find(|&a| Some(a) != exec.next()).unwrap();
        let report = exec.step(wrong).unwrap();
        assert!(!report.complied);
        assert_eq!(report.replan, Some(ReplanCause::Recovery));
        assert_eq!(exec.ctx.adopted_at, 1);
        let out = replan_loop(exec, compliant, 100).unwrap();
        assert!(out.history.len() > 1);
        assert!(task.bike_count() > 0);
    }

    #[test]
    fn inapplicable_actions_are_rejected() {
        let p = planner(&bundled::fig3());
        let (mut exec, _) = Execution::start(p.clone(), Guidance::Planner).unwrap();
        let far = p.task().landmark("D").unwrap();
        let err = exec.step(Act::Move { from: p.task().base, to: far }).unwrap_err();
        assert!(matches!(err, ExecError::Inapplicable(_)));
        assert!(exec.ctx.history.is_empty());
    }
}
