use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use super::{apply_unchecked, Cost, CostFn, FluentId, Plan, PlanningError, PlanningProblem, State};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Heuristic {
    /// Max-cost delete relaxation. Admissible and consistent.
    #[default]
    HMax,
    /// Uniform-cost search.
    Blind,
}

#[derive(Clone, Debug, Default)]
pub struct SearchOptions {
    pub heuristic: Heuristic,
    /// Only plans strictly cheaper than this are returned.
    pub bound: Option<Cost>,
    /// Replaces the problem's goal.
    pub goal: Option<Vec<FluentId>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(Plan),
    Unsolvable,
}

impl SearchOutcome {
    pub fn plan(self) -> Option<Plan> {
        match self {
            SearchOutcome::Found(p) => Some(p),
            SearchOutcome::Unsolvable => None,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, SearchOutcome::Found(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
}

/// Optimal A* search from `start` to the problem's goal under `costs`.
pub fn search(problem: &PlanningProblem, start: &State, costs: &dyn CostFn) -> Result<SearchOutcome, PlanningError> {
    search_with(problem, start, costs, &SearchOptions::default()).map(|(o, _)| o)
}

struct Node {
    state: State,
    g: Cost,
    parent: u32,
    action: u32,
}

const ROOT: u32 = u32::MAX;

pub fn search_with(
    problem: &PlanningProblem,
    start: &State,
    costs: &dyn CostFn,
    opts: &SearchOptions,
) -> Result<(SearchOutcome, SearchStats), PlanningError> {
    let universe = problem.universe();
    if start.iter().any(|f| f.index() >= universe) {
        return Err(PlanningError::Malformed("start state mentions an unknown fluent".into()));
    }
    let goal: &[FluentId] = opts.goal.as_deref().unwrap_or(&problem.goal);
    if goal.iter().any(|f| f.index() >= universe) {
        return Err(PlanningError::Malformed("goal mentions an unknown fluent".into()));
    }
    let action_costs: Vec<Cost> = problem.actions.iter().map(|a| costs.cost(a)).collect();
    if let Some(a) = action_costs.iter().position(|c| c.is_negative()) {
        return Err(PlanningError::Malformed(format!("negative cost for {}", problem.actions[a].label())));
    }

    // successor generation order doubles as the tie-break rank
    let mut order: Vec<usize> = (0..problem.actions.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&problem.actions[a], &problem.actions[b]);
        (&x.name, &x.params).cmp(&(&y.name, &y.params))
    });

    let mut mask = problem.relevant_mask();
    for &f in goal {
        mask.insert(f);
    }
    let mut start = start.clone();
    start.widen(universe);

    let mut relax = Relaxation::new(problem, &action_costs, goal);
    let mut stats = SearchStats::default();
    let h_of = |relax: &mut Relaxation, s: &State| match opts.heuristic {
        Heuristic::Blind => Some(Cost::ZERO),
        Heuristic::HMax => relax.h_max(s),
    };

    let Some(h0) = h_of(&mut relax, &start) else {
        return Ok((SearchOutcome::Unsolvable, stats));
    };
    if opts.bound.is_some_and(|b| h0 >= b) {
        return Ok((SearchOutcome::Unsolvable, stats));
    }

    let mut nodes = vec![Node { state: start.clone(), g: Cost::ZERO, parent: ROOT, action: ROOT }];
    let mut best: HashMap<State, (Cost, Cost)> = HashMap::new();
    best.insert(start.masked(&mask), (Cost::ZERO, h0));
    let mut open = BinaryHeap::new();
    let mut counter = 0u64;
    open.push(Reverse((h0, 0u32, counter, 0u32)));

    while let Some(Reverse((_, _, _, idx))) = open.pop() {
        let (g, state) = {
            let n = &nodes[idx as usize];
            (n.g, n.state.clone())
        };
        let key = state.masked(&mask);
        if best.get(&key).is_some_and(|&(bg, _)| bg < g) {
            continue;
        }
        if state.contains_all(goal) {
            let mut steps = Vec::new();
            let mut cur = idx;
            while nodes[cur as usize].parent != ROOT {
                steps.push(nodes[cur as usize].action as usize);
                cur = nodes[cur as usize].parent;
            }
            steps.reverse();
            return Ok((SearchOutcome::Found(Plan { steps, cost: g }), stats));
        }
        stats.expanded += 1;
        for (rank, &ai) in order.iter().enumerate() {
            let action = &problem.actions[ai];
            if !state.contains_all(&action.pre) {
                continue;
            }
            let g2 = g + action_costs[ai];
            if opts.bound.is_some_and(|b| g2 >= b) {
                continue;
            }
            let child = apply_unchecked(&state, action);
            let ckey = child.masked(&mask);
            let h = match best.entry(ckey) {
                Entry::Occupied(mut e) => {
                    let (bg, h) = *e.get();
                    if bg <= g2 {
                        continue;
                    }
                    e.insert((g2, h));
                    h
                }
                Entry::Vacant(e) => {
                    let Some(h) = h_of(&mut relax, &child) else { continue };
                    e.insert((g2, h));
                    h
                }
            };
            let f = g2 + h;
            if opts.bound.is_some_and(|b| f >= b) {
                continue;
            }
            stats.generated += 1;
            counter += 1;
            nodes.push(Node { state: child, g: g2, parent: idx, action: ai as u32 });
            open.push(Reverse((f, rank as u32, counter, (nodes.len() - 1) as u32)));
        }
    }
    Ok((SearchOutcome::Unsolvable, stats))
}

/// Scratch space for the max-cost relaxation.
struct Relaxation<'a> {
    problem: &'a PlanningProblem,
    costs: &'a [Cost],
    goal: Vec<FluentId>,
    is_goal: Vec<bool>,
    consumers: Vec<Vec<u32>>,
    pre_len: Vec<u32>,
    free: Vec<u32>,
    dist: Vec<Cost>,
    remaining: Vec<u32>,
    reach: Vec<Cost>,
    done: Vec<bool>,
    heap: BinaryHeap<Reverse<(Cost, u32)>>,
}

impl<'a> Relaxation<'a> {
    fn new(problem: &'a PlanningProblem, costs: &'a [Cost], goal: &'a [FluentId]) -> Self {
        let n = problem.universe();
        let mut consumers = vec![Vec::new(); n];
        let mut pre_len = Vec::with_capacity(problem.actions.len());
        let mut free = Vec::new();
        for (ai, a) in problem.actions.iter().enumerate() {
            let mut pre = a.pre.clone();
            pre.sort();
            pre.dedup();
            for f in &pre {
                consumers[f.index()].push(ai as u32);
            }
            if pre.is_empty() {
                free.push(ai as u32);
            }
            pre_len.push(pre.len() as u32);
        }
        let mut goal = goal.to_vec();
        goal.sort();
        goal.dedup();
        let mut is_goal = vec![false; n];
        for f in &goal {
            is_goal[f.index()] = true;
        }
        Relaxation {
            problem,
            costs,
            goal,
            is_goal,
            consumers,
            pre_len,
            free,
            dist: vec![Cost::MAX; n],
            remaining: vec![0; problem.actions.len()],
            reach: vec![Cost::ZERO; problem.actions.len()],
            done: vec![false; n],
            heap: BinaryHeap::new(),
        }
    }

    fn h_max(&mut self, state: &State) -> Option<Cost> {
        self.dist.fill(Cost::MAX);
        self.remaining.copy_from_slice(&self.pre_len);
        self.reach.fill(Cost::ZERO);
        self.done.fill(false);
        self.heap.clear();
        for f in state.iter() {
            if f.index() < self.dist.len() {
                self.dist[f.index()] = Cost::ZERO;
                self.heap.push(Reverse((Cost::ZERO, f.0)));
            }
        }
        for i in 0..self.free.len() {
            let a = self.free[i] as usize;
            self.fire(a, Cost::ZERO);
        }
        let mut pending = self.goal.len();
        if pending == 0 {
            return Some(Cost::ZERO);
        }
        while let Some(Reverse((d, f))) = self.heap.pop() {
            if self.done[f as usize] || d > self.dist[f as usize] {
                continue;
            }
            self.done[f as usize] = true;
            if self.is_goal[f as usize] {
                pending -= 1;
                if pending == 0 {
                    break;
                }
            }
            for i in 0..self.consumers[f as usize].len() {
                let a = self.consumers[f as usize][i] as usize;
                self.remaining[a] -= 1;
                if d > self.reach[a] {
                    self.reach[a] = d;
                }
                if self.remaining[a] == 0 {
                    let r = self.reach[a];
                    self.fire(a, r);
                }
            }
        }
        let mut h = Cost::ZERO;
        for f in &self.goal {
            let d = self.dist[f.index()];
            if d == Cost::MAX {
                return None;
            }
            h = h.max(d);
        }
        Some(h)
    }

    fn fire(&mut self, a: usize, reach: Cost) {
        let nd = reach + self.costs[a];
        for &g in &self.problem.actions[a].add {
            if nd < self.dist[g.index()] {
                self.dist[g.index()] = nd;
                self.heap.push(Reverse((nd, g.0)));
            }
        }
    }
}
