use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::map::{Bike, District, Landmark, MapSpec, PartialReport, Visibility, MAP_FORMAT_VERSION};
use super::TaskModel;
use crate::belief::{compliant, replan_loop, Execution, Guidance, Planner};
use crate::planning::BaseCost;

const TYPES: [&str; 8] = ["house", "tree", "cafe", "mountain", "church", "shop", "tower", "bridge"];
const COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "white", "purple"];
const DISTRICTS: [(&str, &str); 4] =
    [("north", "Northern"), ("east", "Eastern"), ("south", "Southern"), ("west", "Western")];
const MAX_ATTEMPTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenerateParams {
    pub landmarks: usize,
    pub bikes: usize,
    /// Minimum number of junctions next to two landmarks of one type.
    pub ambiguity_quota: usize,
    /// Minimum number of bikes the user can spot from a neighbouring landmark.
    pub visibility_quota: usize,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams { landmarks: 20, bikes: 5, ambiguity_quota: 4, visibility_quota: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("no map satisfied `{constraint}` within {attempts} attempts")]
    Exhausted { constraint: String, attempts: usize },
}

/// Seeded random map with at least the requested number of ambiguity sites
/// and visible bikes. The same seed and parameters always produce the same
/// document.
pub fn generate_map(seed: u64, params: GenerateParams) -> Result<MapSpec, GenerateError> {
    let n = params.landmarks;
    if n < DISTRICTS.len() + 1 {
        return Err(GenerateError::Infeasible(format!("need at least {} landmarks", DISTRICTS.len() + 1)));
    }
    if n > TYPES.len() * COLORS.len() {
        return Err(GenerateError::Infeasible(format!("at most {} landmarks", TYPES.len() * COLORS.len())));
    }
    if params.ambiguity_quota > n / 2 {
        return Err(GenerateError::Infeasible(format!(
            "ambiguity quota {} exceeds half the landmark count",
            params.ambiguity_quota
        )));
    }
    if params.visibility_quota > params.bikes {
        return Err(GenerateError::Infeasible(format!(
            "visibility quota {} exceeds the bike count {}",
            params.visibility_quota, params.bikes
        )));
    }
    if params.bikes >= n {
        return Err(GenerateError::Infeasible("every bike needs its own landmark away from the base".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for _ in 0..MAX_ATTEMPTS {
        match attempt(&mut rng, seed, params) {
            Ok(map) => return Ok(map),
            Err(constraint) => last = constraint,
        }
    }
    Err(GenerateError::Exhausted { constraint: last, attempts: MAX_ATTEMPTS })
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn attempt(rng: &mut ChaCha8Rng, seed: u64, params: GenerateParams) -> Result<MapSpec, String> {
    let n = params.landmarks;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let mut cells: Vec<usize> = (0..cols * rows).collect();
    cells.shuffle(rng);
    cells.truncate(n);
    cells.sort_unstable();
    let pos: Vec<(f64, f64)> = cells
        .iter()
        .map(|&c| {
            let jx: f64 = rng.gen_range(-0.3..0.3);
            let jy: f64 = rng.gen_range(-0.3..0.3);
            let round = |v: f64| (v * 100.0).round() / 10.0;
            (round((c % cols) as f64 + jx), round((c / cols) as f64 + jy))
        })
        .collect();

    // spanning tree first so the graph is connected, then some short extras
    let mut edges = BTreeSet::new();
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    for _ in 1..n {
        let (a, b) = (0..n)
            .filter(|&i| in_tree[i])
            .flat_map(|i| (0..n).filter(|&j| !in_tree[j]).map(move |j| (i, j)))
            .min_by(|&(a, b), &(c, d)| dist(pos[a], pos[b]).total_cmp(&dist(pos[c], pos[d])))
            .expect("a vertex is left");
        in_tree[b] = true;
        edges.insert((a.min(b), a.max(b)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist(pos[i], pos[j]) < 15.0 && rng.gen_bool(0.3) {
                edges.insert((i, j));
            }
        }
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &edges {
        adj[a].push(b);
        adj[b].push(a);
    }

    let cx = pos.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let cy = pos.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let district: Vec<usize> = pos
        .iter()
        .map(|&(x, y)| {
            // y grows southwards, as on screen
            let (dx, dy) = (x - cx, cy - y);
            if dy.abs() >= dx.abs() {
                if dy >= 0.0 {
                    0
                } else {
                    2
                }
            } else if dx >= 0.0 {
                1
            } else {
                3
            }
        })
        .collect();
    if (0..DISTRICTS.len()).any(|d| !district.contains(&d)) {
        return Err("every district holds a landmark".into());
    }

    let mut kinds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..TYPES.len())).collect();
    let sites = |kinds: &[usize]| {
        (0..n)
            .filter(|&i| {
                let mut seen = BTreeSet::new();
                adj[i].iter().any(|&j| !seen.insert(kinds[j]))
            })
            .count()
    };
    let mut junctions: Vec<usize> = (0..n).filter(|&i| adj[i].len() >= 2).collect();
    junctions.shuffle(rng);
    for &j in &junctions {
        if sites(&kinds) >= params.ambiguity_quota {
            break;
        }
        let mut nb = adj[j].clone();
        nb.shuffle(rng);
        let (a, b) = (nb[0], nb[1]);
        if kinds.iter().filter(|&&k| k == kinds[a]).count() < COLORS.len() {
            kinds[b] = kinds[a];
        }
    }
    if sites(&kinds) < params.ambiguity_quota {
        return Err(format!("ambiguity quota {}", params.ambiguity_quota));
    }
    let mut colors = vec![0usize; n];
    let mut used = BTreeSet::new();
    for i in 0..n {
        let free: Vec<usize> = (0..COLORS.len()).filter(|c| !used.contains(&(kinds[i], *c))).collect();
        let Some(&c) = free.choose(rng) else { return Err("distinct colors per type".into()) };
        colors[i] = c;
        used.insert((kinds[i], c));
    }

    let base = (0..n).min_by(|&a, &b| dist(pos[a], (cx, cy)).total_cmp(&dist(pos[b], (cx, cy)))).expect("non-empty");
    let mut order: Vec<usize> = (0..DISTRICTS.len()).collect();
    order.shuffle(rng);
    let mut taken = BTreeSet::from([base]);
    let mut bike_at = Vec::new();
    for b in 0..params.bikes {
        let d = order[b % order.len()];
        let mut spots: Vec<usize> = (0..n).filter(|&l| district[l] == d && !taken.contains(&l)).collect();
        if spots.is_empty() {
            spots = (0..n).filter(|l| !taken.contains(l)).collect();
        }
        let &l = spots.choose(rng).ok_or("room for every bike")?;
        taken.insert(l);
        bike_at.push(l);
    }
    let mut seen_from = Vec::new();
    let mut chosen: Vec<usize> = (0..params.bikes).collect();
    chosen.shuffle(rng);
    for &b in chosen.iter().take(params.visibility_quota) {
        for &l in &adj[bike_at[b]] {
            seen_from.push((l, b));
        }
    }
    seen_from.sort_unstable();

    let ids: Vec<String> = (0..n).map(|i| format!("{}_{}", COLORS[colors[i]], TYPES[kinds[i]])).collect();
    let bike_id = |b: usize| format!("bike{}", b + 1);
    let map = MapSpec {
        version: MAP_FORMAT_VERSION,
        name: format!("generated-{seed}"),
        base: ids[base].clone(),
        roads: edges.iter().map(|&(a, b)| (ids[a].clone(), ids[b].clone())).collect(),
        districts: DISTRICTS.iter().map(|&(id, name)| District { id: id.into(), name: name.into() }).collect(),
        landmarks: (0..n)
            .map(|i| Landmark {
                id: ids[i].clone(),
                kind: TYPES[kinds[i]].into(),
                color: COLORS[colors[i]].into(),
                x: pos[i].0,
                y: pos[i].1,
                district: DISTRICTS[district[i]].0.into(),
            })
            .collect(),
        bikes: (0..params.bikes).map(|b| Bike { id: bike_id(b), location: ids[bike_at[b]].clone() }).collect(),
        reports: (0..params.bikes)
            .map(|b| PartialReport { bike: bike_id(b), district: DISTRICTS[district[bike_at[b]]].0.into() })
            .collect(),
        visibility: seen_from.iter().map(|&(l, b)| Visibility { from: ids[l].clone(), bike: bike_id(b) }).collect(),
    };
    map.validate().map_err(|e| e.to_string())?;
    if map.ambiguity_sites().len() < params.ambiguity_quota {
        return Err(format!("ambiguity quota {}", params.ambiguity_quota));
    }
    if map.visible_bikes().len() < params.visibility_quota {
        return Err(format!("visibility quota {}", params.visibility_quota));
    }
    let planner = Arc::new(Planner::new(Arc::new(TaskModel::compile(&map)), Arc::new(BaseCost)));
    let (exec, _) = Execution::start(planner, Guidance::Planner).map_err(|e| e.to_string())?;
    replan_loop(exec, compliant, 10 * n * (params.bikes + 1)).map_err(|e| format!("solvable: {e}"))?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meets_quotas() {
        let params = GenerateParams { ambiguity_quota: 3, ..Default::default() };
        for seed in 0..5 {
            let map = generate_map(seed, params).unwrap();
            assert_eq!(map.landmarks.len(), 20);
            assert_eq!(map.bikes.len(), 5);
            assert!(map.ambiguity_sites().len() >= 3);
            assert!(!map.visible_bikes().is_empty());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_map(7, GenerateParams::default()).unwrap().to_toml();
        let b = generate_map(7, GenerateParams::default()).unwrap().to_toml();
        assert_eq!(a, b);
        assert_ne!(a, generate_map(8, GenerateParams::default()).unwrap().to_toml());
    }

    #[test]
    fn infeasible_quotas_fail_fast() {
        let all = GenerateParams { ambiguity_quota: 20, ..Default::default() };
        assert!(matches!(generate_map(1, all), Err(GenerateError::Infeasible(_))));
        let eyes = GenerateParams { visibility_quota: 6, ..Default::default() };
        assert!(matches!(generate_map(1, eyes), Err(GenerateError::Infeasible(_))));
    }

    #[test]
    fn small_maps() {
        let params = GenerateParams { landmarks: 8, bikes: 2, ambiguity_quota: 1, visibility_quota: 1 };
        for seed in 0..10 {
            let map = generate_map(seed, params).unwrap();
            assert_eq!(map.landmarks.len(), 8);
        }
    }
}
