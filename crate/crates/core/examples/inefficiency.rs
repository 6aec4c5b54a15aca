//! Spotting a stretch of a walked route that a cheaper path could replace.

use std::sync::Arc;

use mapguide::dialogue::{InefficiencyAnalyzer, InefficiencyConfig};
use mapguide::domain::{bundled, Act, TaskModel};

fn main() {
    let task = Arc::new(TaskModel::compile(&bundled::fig3()));
    let l = |id: &str| task.landmark(id).unwrap();
    let route = [("A", "C"), ("C", "F"), ("F", "D")];
    let trace: Vec<Act> = route.iter().map(|&(a, b)| Act::Move { from: l(a), to: l(b) }).collect();
    let analyzer = InefficiencyAnalyzer::new(task.clone());
    let names = |acts: &[Act]| acts.iter().map(|&a| task.label(a).to_string()).collect::<Vec<_>>().join(" ");
    for x in 0..trace.len() {
        match analyzer.detect(&task.initial_state(), &trace, x, InefficiencyConfig::default()) {
            Some(w) => println!(
                "at step {}: {} (cost {}) could be {} (cost {})",
                x + 1,
                names(&w.original),
                w.original_cost,
                names(&w.replacement),
                w.replacement_cost
            ),
            None => println!("at step {}: nothing cheaper", x + 1),
        }
    }
}
