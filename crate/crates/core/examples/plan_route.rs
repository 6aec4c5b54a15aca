//! Optimal route on a bundled map when every bike location is known.

use mapguide::domain::{bundled, TaskModel};
use mapguide::planning::{search, BaseCost};

fn main() {
    let task = TaskModel::compile(&bundled::fig3());
    let plan = search(&task.problem, &task.initial_state(), &BaseCost).expect("well-formed").plan().expect("solvable");
    for (i, label) in plan.labels(&task.problem).iter().enumerate() {
        println!("{:>2}  {label}", i + 1);
    }
    println!("cost {}", plan.cost);
}
