//! Trading route cost for instructions that cannot be confused with others.
//! Larger penalties push the planner off roads with look-alike neighbours.

use mapguide::ambiguity::{inexplicability, AmbiguityCost};
use mapguide::domain::{bundled, Act, TaskModel};
use mapguide::planning::{search, BaseCost, Cost, CostFn};

fn main() {
    let task = TaskModel::compile(&bundled::fig3());
    let models: Vec<(String, Box<dyn CostFn>)> = std::iter::once(("plain".to_string(), Box::new(BaseCost) as Box<dyn CostFn>))
        .chain(["0.5", "1", "3"].iter().map(|d| {
            let delta: Cost = d.parse().unwrap();
            (format!("penalty {d}"), Box::new(AmbiguityCost::new(&task, delta)) as Box<dyn CostFn>)
        }))
        .collect();
    for (name, costs) in models {
        let plan = search(&task.problem, &task.initial_state(), costs.as_ref()).unwrap().plan().unwrap();
        let acts: Vec<Act> = plan.labels(&task.problem).iter().filter_map(|l| task.classify(l)).collect();
        let length: Cost = acts.iter().map(|&a| task.problem.actions[task.problem.find_action(&task.label(a)).unwrap()].base_cost).sum();
        println!("{name:<12} steps {:>2}  route cost {length}  ambiguous steps {}", acts.len(), inexplicability(&task, &acts));
    }
}
