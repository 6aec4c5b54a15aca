use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::map::MapSpec;
use crate::belief::SensingRule;
use crate::planning::{ActionLabel, Cost, Fluent, FluentId, GroundAction, Literal, PlanningProblem, State};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveCost {
    /// Every road costs one.
    #[default]
    Unit,
    /// Roads cost the straight-line distance between their ends.
    Euclidean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CompileOptions {
    pub move_cost: MoveCost,
}

/// Typed view of a ground action of the bike domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Act {
    Move { from: usize, to: usize },
    Pickup { bike: usize, at: usize },
    /// Optimistic assumption that a bike sits at a candidate location.
    Find { bike: usize, at: usize },
}

impl Act {
    pub fn is_physical(self) -> bool {
        !matches!(self, Act::Find { .. })
    }
}

/// A map compiled into a planning problem plus the lookup tables the agents
/// need. Immutable; share it behind an `Arc`.
#[derive(Clone, Debug)]
pub struct TaskModel {
    pub map: MapSpec,
    /// Ground-truth problem: moves along roads and one pickup per bike at its
    /// true location.
    pub problem: PlanningProblem,
    /// Moves plus a pickup for every (bike, landmark) pair. Used to look for
    /// cheaper replacements of plan fragments.
    pub analysis: PlanningProblem,
    pub adjacency: Vec<Vec<usize>>,
    pub base: usize,
    /// True location of each bike, by bike index.
    pub truth: Vec<usize>,
    /// Initial candidate locations of each bike, from its district report.
    pub candidates: Vec<BTreeSet<usize>>,
    /// Bikes the user can see from each landmark.
    pub visible: Vec<Vec<usize>>,
    pub at: Vec<FluentId>,
    pub visited: Vec<FluentId>,
    pub holding: Vec<FluentId>,
    pub bike_at: Vec<Vec<FluentId>>,
    pub pickup_cost: Cost,
    move_costs: HashMap<(usize, usize), Cost>,
    landmark_index: HashMap<String, usize>,
    bike_index: HashMap<String, usize>,
}

impl TaskModel {
    pub fn compile(map: &MapSpec) -> TaskModel {
        TaskModel::compile_with(map, CompileOptions::default())
    }

    pub fn compile_with(map: &MapSpec, opts: CompileOptions) -> TaskModel {
        let n = map.landmarks.len();
        let landmark_index: HashMap<String, usize> =
            map.landmarks.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        let bike_index: HashMap<String, usize> = map.bikes.iter().enumerate().map(|(i, b)| (b.id.clone(), i)).collect();
        let adjacency = map.adjacency();
        let base = landmark_index[&map.base];
        let truth: Vec<usize> = map.bikes.iter().map(|b| landmark_index[&b.location]).collect();

        let mut p = PlanningProblem::new();
        let at: Vec<_> = map.landmarks.iter().map(|l| p.intern(Fluent::new("at", [l.id.as_str()]))).collect();
        let visited: Vec<_> = map.landmarks.iter().map(|l| p.intern(Fluent::new("visited", [l.id.as_str()]))).collect();
        let holding: Vec<_> = map.bikes.iter().map(|b| p.intern(Fluent::new("holding", [b.id.as_str()]))).collect();
        let bike_at: Vec<Vec<_>> = map
            .bikes
            .iter()
            .map(|b| map.landmarks.iter().map(|l| p.intern(Fluent::new("bike-at", [b.id.as_str(), l.id.as_str()]))).collect())
            .collect();

        let mut move_costs = HashMap::new();
        for i in 0..n {
            for &j in &adjacency[i] {
                let cost = match opts.move_cost {
                    MoveCost::Unit => Cost::units(1),
                    MoveCost::Euclidean => {
                        let (a, b) = (&map.landmarks[i], &map.landmarks[j]);
                        Cost::from_f64(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt())
                    }
                };
                move_costs.insert((i, j), cost);
                p.add_action(GroundAction {
                    name: "move".into(),
                    params: vec![map.landmarks[i].id.clone(), map.landmarks[j].id.clone()],
                    pre: vec![at[i]],
                    add: vec![at[j], visited[j]],
                    del: vec![at[i]],
                    base_cost: cost,
                });
            }
        }
        let pickup_cost = Cost::units(1);
        let pickup = |b: usize, l: usize| GroundAction {
            name: "pickup".into(),
            params: vec![map.bikes[b].id.clone(), map.landmarks[l].id.clone()],
            pre: vec![at[l], bike_at[b][l]],
            add: vec![holding[b]],
            del: vec![bike_at[b][l]],
            base_cost: pickup_cost,
        };
        let mut analysis = p.clone();
        for (b, &l) in truth.iter().enumerate() {
            p.add_action(pickup(b, l));
        }
        for b in 0..map.bikes.len() {
            for l in 0..n {
                analysis.add_action(pickup(b, l));
            }
        }

        let candidates: Vec<BTreeSet<usize>> = map
            .bikes
            .iter()
            .map(|b| match map.report_for(&b.id) {
                Some(r) => (0..n).filter(|&l| map.landmarks[l].district == r.district).collect(),
                None => (0..n).collect(),
            })
            .collect();
        for (b, cands) in candidates.iter().enumerate() {
            for &l in cands {
                p.sensing.push(SensingRule { trigger: vec![at[l]], observed: bike_at[b][l], bike: b, landmark: l });
            }
        }

        let mut initial = vec![at[base], visited[base]];
        initial.extend(truth.iter().enumerate().map(|(b, &l)| bike_at[b][l]));
        p.initial = p.state(initial);
        p.known = vec![Literal { fluent: at[base], positive: true }, Literal { fluent: visited[base], positive: true }];
        for (b, cands) in candidates.iter().enumerate() {
            for l in (0..n).filter(|l| !cands.contains(l)) {
                p.known.push(Literal { fluent: bike_at[b][l], positive: false });
            }
        }
        p.goal = holding.clone();
        p.goal.push(at[base]);
        analysis.initial = p.initial.clone();
        analysis.goal = p.goal.clone();

        let mut visible = vec![Vec::new(); n];
        for v in &map.visibility {
            visible[landmark_index[&v.from]].push(bike_index[&v.bike]);
        }
        for list in &mut visible {
            list.sort_unstable();
            list.dedup();
        }

        TaskModel {
            map: map.clone(),
            problem: p,
            analysis,
            adjacency,
            base,
            truth,
            candidates,
            visible,
            at,
            visited,
            holding,
            bike_at,
            pickup_cost,
            move_costs,
            landmark_index,
            bike_index,
        }
    }

    pub fn landmark_count(&self) -> usize {
        self.map.landmarks.len()
    }

    pub fn bike_count(&self) -> usize {
        self.map.bikes.len()
    }

    pub fn landmark_id(&self, l: usize) -> &str {
        &self.map.landmarks[l].id
    }

    pub fn bike_id(&self, b: usize) -> &str {
        &self.map.bikes[b].id
    }

    pub fn landmark(&self, id: &str) -> Option<usize> {
        self.landmark_index.get(id).copied()
    }

    pub fn bike(&self, id: &str) -> Option<usize> {
        self.bike_index.get(id).copied()
    }

    pub fn kind_of(&self, l: usize) -> &str {
        &self.map.landmarks[l].kind
    }

    pub fn color_of(&self, l: usize) -> &str {
        &self.map.landmarks[l].color
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn move_cost(&self, from: usize, to: usize) -> Option<Cost> {
        self.move_costs.get(&(from, to)).copied()
    }

    /// How utterances refer to a bike: the adjective of its reported
    /// district, or an ordinal when it has no report.
    pub fn bike_name(&self, b: usize) -> String {
        let id = self.bike_id(b);
        match self.map.report_for(id).and_then(|r| self.map.district(&r.district)) {
            Some(d) => d.name.clone(),
            None => ordinal(b + 1),
        }
    }

    pub fn move_label(&self, from: usize, to: usize) -> ActionLabel {
        ActionLabel::new("move", [self.landmark_id(from), self.landmark_id(to)])
    }

    pub fn pickup_label(&self, bike: usize, at: usize) -> ActionLabel {
        ActionLabel::new("pickup", [self.bike_id(bike), self.landmark_id(at)])
    }

    pub fn find_label(&self, bike: usize, at: usize) -> ActionLabel {
        ActionLabel::new("find", [self.bike_id(bike), self.landmark_id(at)])
    }

    pub fn label(&self, act: Act) -> ActionLabel {
        match act {
            Act::Move { from, to } => self.move_label(from, to),
            Act::Pickup { bike, at } => self.pickup_label(bike, at),
            Act::Find { bike, at } => self.find_label(bike, at),
        }
    }

    pub fn classify(&self, label: &ActionLabel) -> Option<Act> {
        if label.params.len() != 2 {
            return None;
        }
        match label.name.as_str() {
            "move" => Some(Act::Move { from: self.landmark(&label.params[0])?, to: self.landmark(&label.params[1])? }),
            "pickup" => Some(Act::Pickup { bike: self.bike(&label.params[0])?, at: self.landmark(&label.params[1])? }),
            "find" => Some(Act::Find { bike: self.bike(&label.params[0])?, at: self.landmark(&label.params[1])? }),
            _ => None,
        }
    }

    pub fn initial_state(&self) -> State {
        self.problem.initial.clone()
    }

    /// Landmark the true state puts the agent at.
    pub fn position(&self, state: &State) -> Option<usize> {
        self.at.iter().position(|&f| state.contains(f))
    }
}

fn ordinal(n: usize) -> String {
    const WORDS: [&str; 10] = ["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"];
    WORDS.get(n.wrapping_sub(1)).map(|w| w.to_string()).unwrap_or_else(|| format!("#{n}"))
}
