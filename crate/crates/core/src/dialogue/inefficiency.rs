use std::sync::Arc;

use dashmap::DashMap;

use crate::belief::ExecutionContext;
use crate::domain::{Act, TaskModel};
use crate::planning::{search_with, BaseCost, Cost, SearchOptions, State};

/// Window around the current step in which plan fragments are checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InefficiencyConfig {
    pub look_back: usize,
    pub look_ahead: usize,
}

impl Default for InefficiencyConfig {
    fn default() -> Self {
        InefficiencyConfig { look_back: 2, look_ahead: 2 }
    }
}

/// A fragment `trace[start..end]` and a strictly cheaper replacement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub start: usize,
    pub end: usize,
    pub original: Vec<Act>,
    pub original_cost: Cost,
    pub replacement: Vec<Act>,
    pub replacement_cost: Cost,
}

type Cheapest = Option<(Cost, Arc<[Act]>)>;

/// Finds fragments of a trace that could be done more cheaply under the
/// map's declared costs, regardless of the cost model the plan came from.
/// Optimal costs between state pairs are memoized.
pub struct InefficiencyAnalyzer {
    task: Arc<TaskModel>,
    mask: State,
    cache: DashMap<(State, State), Cheapest>,
}

impl InefficiencyAnalyzer {
    pub fn new(task: Arc<TaskModel>) -> InefficiencyAnalyzer {
        let mask = task.analysis.relevant_mask();
        InefficiencyAnalyzer { task, mask, cache: DashMap::new() }
    }

    pub fn task(&self) -> &Arc<TaskModel> {
        &self.task
    }

    /// Declared cost of a physical action.
    pub fn cost(&self, act: Act) -> Cost {
        match act {
            Act::Move { from, to } => self.task.move_cost(from, to).unwrap_or(Cost::MAX),
            Act::Pickup { .. } => self.task.pickup_cost,
            Act::Find { .. } => Cost::ZERO,
        }
    }

    /// States before and after every action of `trace`, or `None` if some
    /// action is inapplicable.
    pub fn states(&self, start: &State, trace: &[Act]) -> Option<Vec<State>> {
        let a = &self.task.analysis;
        let mut out = vec![start.masked(&self.mask)];
        for &act in trace {
            let idx = a.find_action(&self.task.label(act))?;
            let action = &a.actions[idx];
            let cur = out.last().expect("non-empty");
            if !cur.contains_all(&action.pre) {
                return None;
            }
            let mut next = cur.clone();
            for &f in &action.del {
                next.remove(f);
            }
            for &f in &action.add {
                next.insert(f);
            }
            out.push(next.masked(&self.mask));
        }
        Some(out)
    }

    /// Cheapest way from `from` to `to` under declared costs.
    pub fn cheapest(&self, from: &State, to: &State) -> Cheapest {
        let key = (from.masked(&self.mask), to.masked(&self.mask));
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let opts = SearchOptions { goal: Some(key.1.iter().collect()), ..Default::default() };
        let a = &self.task.analysis;
        let found = search_with(a, &key.0, &BaseCost, &opts).ok().and_then(|(o, _)| o.plan()).map(|p| {
            let acts: Arc<[Act]> =
                p.steps.iter().map(|&i| self.task.classify(&a.actions[i].label()).expect("domain action")).collect();
            (p.cost, acts)
        });
        self.cache.insert(key, found.clone());
        found
    }

    /// Checks every contiguous fragment inside the window around step `x`.
    pub fn detect(&self, start: &State, trace: &[Act], x: usize, config: InefficiencyConfig) -> Option<Witness> {
        let states = self.states(start, trace)?;
        let lo = x.saturating_sub(config.look_back).min(trace.len());
        let hi = x.saturating_add(config.look_ahead).min(trace.len());
        for i in lo..hi {
            let mut cost = Cost::ZERO;
            for j in i + 1..=hi {
                cost += self.cost(trace[j - 1]);
                if let Some((best, plan)) = self.cheapest(&states[i], &states[j]) {
                    if best < cost {
                        return Some(Witness {
                            start: i,
                            end: j,
                            original: trace[i..j].to_vec(),
                            original_cost: cost,
                            replacement: plan.to_vec(),
                            replacement_cost: best,
                        });
                    }
                }
            }
        }
        None
    }

    /// The agent's trace since it adopted its current plan, continued by the
    /// plan, with the current step in the middle. Bikes the plan assumes are
    /// placed where it assumes them.
    pub fn context_trace(&self, ctx: &ExecutionContext) -> (State, Vec<Act>, usize) {
        let task = &self.task;
        let belief = &ctx.belief;
        let mut now = vec![task.at[belief.position]];
        for b in 0..task.bike_count() {
            if belief.collected.contains(&b) {
                now.push(task.holding[b]);
            } else if let Some(l) = belief.located(b) {
                now.push(task.bike_at[b][l]);
            }
        }
        for &a in &ctx.intention {
            if let Act::Find { bike, at } = a {
                now.push(task.bike_at[bike][at]);
            }
        }
        let mut state = task.analysis.state(now);
        let past = ctx.since_adoption();
        for &a in past.iter().rev() {
            match a {
                Act::Move { from, to } => {
                    state.remove(task.at[to]);
                    state.insert(task.at[from]);
                }
                Act::Pickup { bike, at } => {
                    state.remove(task.holding[bike]);
                    state.insert(task.bike_at[bike][at]);
                }
                Act::Find { .. } => {}
            }
        }
        let mut trace = past.to_vec();
        trace.extend(ctx.intention.iter().copied().filter(|a| a.is_physical()));
        (state, trace, past.len())
    }

    pub fn detect_in_context(&self, ctx: &ExecutionContext, config: InefficiencyConfig) -> Option<Witness> {
        let (start, trace, x) = self.context_trace(ctx);
        self.detect(&start, &trace, x, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::bundled;

    fn fig3() -> (Arc<TaskModel>, InefficiencyAnalyzer) {
        let task = Arc::new(TaskModel::compile(&bundled::fig3()));
        (task.clone(), InefficiencyAnalyzer::new(task))
    }

    fn walk(task: &TaskModel, ids: &[&str]) -> Vec<Act> {
        ids.windows(2)
            .map(|w| Act::Move { from: task.landmark(w[0]).unwrap(), to: task.landmark(w[1]).unwrap() })
            .collect()
    }

    #[test]
    fn detour_through_c_is_flagged() {
        let (task, an) = fig3();
        let trace = walk(&task, &["A", "C", "F", "D"]);
        let start = task.analysis.state([task.at[task.base]]);
        let w = an.detect(&start, &trace, 1, InefficiencyConfig::default()).unwrap();
        assert_eq!((w.start, w.end), (0, 3));
        assert_eq!(w.replacement, walk(&task, &["A", "B", "D"]));
        assert_eq!(w.replacement_cost, Cost::units(2));
    }

    #[test]
    fn window_can_miss_the_detour() {
        let (task, an) = fig3();
        let trace = walk(&task, &["A", "C", "F", "D"]);
        let start = task.analysis.state([task.at[task.base]]);
        assert_eq!(an.detect(&start, &trace, 0, InefficiencyConfig::default()), None);
    }

    #[test]
    fn shortest_route_is_efficient() {
        let (task, an) = fig3();
        let trace = walk(&task, &["A", "B", "D"]);
        let start = task.analysis.state([task.at[task.base]]);
        for x in 0..trace.len() {
            assert_eq!(an.detect(&start, &trace, x, InefficiencyConfig::default()), None);
        }
        let one = InefficiencyConfig { look_back: 0, look_ahead: 1 };
        assert_eq!(an.detect(&start, &trace, 0, one), None);
    }
}
