//! Guiding a user who sometimes walks off the plan, with bike locations
//! only known up to a district.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mapguide::belief::{Execution, Guidance, Planner};
use mapguide::domain::{bundled, TaskModel};
use mapguide::planning::BaseCost;

fn main() {
    let task = Arc::new(TaskModel::compile(&bundled::by_name("map-1").unwrap()));
    let planner = Arc::new(Planner::new(task.clone(), Arc::new(BaseCost)));
    let (mut exec, _) = Execution::start(planner, Guidance::Planner).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    while !exec.done() {
        let planned = exec.next().unwrap();
        let act = if rng.gen_bool(0.85) { planned } else { *exec.options().choose(&mut rng).unwrap() };
        let report = exec.step(act).unwrap();
        let mut line = format!("{:<22}", task.label(act).to_string());
        if !report.complied {
            line += &format!(" (asked for {})", task.label(planned));
        }
        for o in &report.observations {
            line += &format!(" saw {}={}", task.bike_id(o.bike), if o.present { "here" } else { "absent" });
        }
        if let Some(cause) = report.replan {
            line += &format!(" replan:{cause:?}");
        }
        println!("{line}");
    }
    println!("{:?}", exec.stats);
}
