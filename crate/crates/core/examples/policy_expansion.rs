//! Precomputing the agent's decisions for every belief reachable within a
//! number of user deviations.

use std::sync::Arc;

use mapguide::belief::{build_policy, Planner, PolicyConfig};
use mapguide::domain::{bundled, TaskModel};
use mapguide::planning::BaseCost;

fn main() {
    let task = Arc::new(TaskModel::compile(&bundled::by_name("map-3").unwrap()));
    let planner = Planner::new(task.clone(), Arc::new(BaseCost));
    for budget in 0..=2 {
        let t = std::time::Instant::now();
        let policy = build_policy(&planner, "responsive", PolicyConfig { budget, ..PolicyConfig::default() }).unwrap();
        println!("budget {budget}: {:>5} beliefs, {:>5} decisions, {:.2?}", policy.len(), policy.decision_count(), t.elapsed());
    }
    let small = build_policy(&planner, "responsive", PolicyConfig { budget: 0, ..PolicyConfig::default() }).unwrap();
    println!("\nfirst lines of the budget 0 policy file:");
    for line in small.to_ndjson(&task).lines().take(3) {
        println!("{line}");
    }
}
