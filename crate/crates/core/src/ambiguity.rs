//! Which instructions can be mistaken for one another, the cost penalty that
//! steers plans away from them and the resulting explicability score.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::domain::{Act, TaskModel};
use crate::planning::{Cost, CostFn, GroundAction};

/// The weights offered as presets.
pub const DELTA_PRESETS: [i64; 3] = [1, 2, 3];

/// Moves from the same landmark whose destination has the same type as that
/// of `act`, i.e. the moves a type-level instruction cannot tell apart from
/// it. Empty for anything but a move.
pub fn similar_moves(task: &TaskModel, act: Act) -> Vec<Act> {
    let Act::Move { from, to } = act else { return Vec::new() };
    task.adjacency[from]
        .iter()
        .filter(|&&n| n != to && task.kind_of(n) == task.kind_of(to))
        .map(|&n| Act::Move { from, to: n })
        .collect()
}

/// Indices of the ground actions similar to `action`: distinct moves with the
/// same preconditions whose level-1 rendering is the same.
pub fn similar_set(task: &TaskModel, action: &GroundAction) -> Vec<usize> {
    let Some(act @ Act::Move { .. }) = task.classify(&action.label()) else { return Vec::new() };
    let dest_kind = |a: Act| match a {
        Act::Move { to, .. } => Some(task.kind_of(to)),
        _ => None,
    };
    task.problem
        .actions
        .iter()
        .enumerate()
        .filter(|(_, b)| b.pre == action.pre && b.label() != action.label())
        .filter(|(_, b)| task.classify(&b.label()).and_then(dest_kind) == dest_kind(act))
        .map(|(i, _)| i)
        .collect()
}

/// cost'(a) = delta * |similar(a)| + cost(a)
#[derive(Clone, Debug)]
pub struct AmbiguityCost {
    delta: Cost,
    similar: HashMap<(String, String), i64>,
}

impl AmbiguityCost {
    pub fn new(task: &TaskModel, delta: Cost) -> AmbiguityCost {
        assert!(delta > Cost::ZERO, "delta must be positive");
        let mut similar = HashMap::new();
        for from in 0..task.landmark_count() {
            for &to in &task.adjacency[from] {
                let n = similar_moves(task, Act::Move { from, to }).len() as i64;
                similar.insert((task.landmark_id(from).to_string(), task.landmark_id(to).to_string()), n);
            }
        }
        AmbiguityCost { delta, similar }
    }

    pub fn delta(&self) -> Cost {
        self.delta
    }

    pub fn similar_count(&self, action: &GroundAction) -> i64 {
        if action.name != "move" || action.params.len() != 2 {
            return 0;
        }
        self.similar.get(&(action.params[0].clone(), action.params[1].clone())).copied().unwrap_or(0)
    }
}

impl CostFn for AmbiguityCost {
    fn cost(&self, action: &GroundAction) -> Cost {
        self.delta * self.similar_count(action) + action.base_cost
    }
}

/// U: the number of steps whose instruction is ambiguous.
pub fn inexplicability(task: &TaskModel, plan: &[Act]) -> usize {
    plan.iter().filter(|&&a| !similar_moves(task, a).is_empty()).count()
}

/// `p0` is less explicable than `p1`.
pub fn less_explicable(task: &TaskModel, p0: &[Act], p1: &[Act]) -> bool {
    inexplicability(task, p0) > inexplicability(task, p1)
}

/// One line per move: the move and the moves it could be mistaken for.
pub fn similar_audit(task: &TaskModel) -> String {
    let mut out = String::new();
    for from in 0..task.landmark_count() {
        for &to in &task.adjacency[from] {
            let act = Act::Move { from, to };
            let sims: Vec<String> = similar_moves(task, act).into_iter().map(|a| task.label(a).to_string()).collect();
            let _ = writeln!(out, "{} -> [{}]", task.label(act), sims.join(", "));
        }
    }
    out
}
