//! Seeded random maps with look-alike junctions and district reports.

use mapguide::domain::{generate_map, GenerateParams, TaskModel};
use mapguide::ambiguity::similar_audit;

fn main() {
    let params = GenerateParams { landmarks: 10, bikes: 2, ambiguity_quota: 2, visibility_quota: 1 };
    let map = generate_map(42, params).expect("feasible parameters");
    print!("{}", map.to_toml());
    println!("\n# junctions with look-alike neighbours: {:?}", map.ambiguity_sites());
    print!("{}", similar_audit(&TaskModel::compile(&map)));
}
