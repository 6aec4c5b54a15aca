//! Simulated users against both agents; a small version of the study table.

use std::sync::Arc;

use mapguide::dialogue::{AgentKind, Templates};
use mapguide::domain::{bundled, TaskModel};
use mapguide::planning::Cost;
use mapguide::session::{AgentProfile, AgentSettings};
use mapguide::simulation::{simulate_batch, Column, UserModel};

fn main() {
    let task = Arc::new(TaskModel::compile(&bundled::by_name("map-2").unwrap()));
    let columns: Vec<Column> = [AgentKind::Responsive, AgentKind::Predictive { delta: Cost::units(1) }]
        .into_iter()
        .map(|agent| {
            let profile = AgentProfile::new(task.clone(), AgentSettings::new(agent), Arc::new(Templates::default())).unwrap();
            Column { label: agent.name(), profile: Arc::new(profile) }
        })
        .collect();
    let out = simulate_batch(&columns, 200, &UserModel::default(), 7).unwrap();
    print!("{}", out.report.to_text());
}
