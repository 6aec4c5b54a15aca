//! Reference computations that work on map documents directly, without the
//! crate's planning encoding.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use mapguide::domain::{generate_map, GenerateParams, MapSpec};

pub struct Graph {
    pub ids: Vec<String>,
    pub kind: Vec<String>,
    pub adj: Vec<Vec<usize>>,
    pub base: usize,
    pub bike_at: Vec<usize>,
}

impl Graph {
    pub fn new(map: &MapSpec) -> Graph {
        let ids: Vec<String> = map.landmarks.iter().map(|l| l.id.clone()).collect();
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for (a, b) in &map.roads {
            adj[index[a.as_str()]].push(index[b.as_str()]);
            adj[index[b.as_str()]].push(index[a.as_str()]);
        }
        Graph {
            kind: map.landmarks.iter().map(|l| l.kind.clone()).collect(),
            adj,
            base: index[map.base.as_str()],
            bike_at: map.bikes.iter().map(|b| index[b.location.as_str()]).collect(),
            ids,
        }
    }

    pub fn index(&self, id: &str) -> usize {
        self.ids.iter().position(|x| x == id).unwrap()
    }

    /// Other neighbours of `from` of the same type as `to`.
    pub fn similar(&self, from: usize, to: usize) -> usize {
        self.adj[from].iter().filter(|&&n| n != to && self.kind[n] == self.kind[to]).count()
    }

    /// Cheapest way, in thousandths, from `from` with `held` to `to` holding
    /// `want`, where a move costs one plus `delta` per similar alternative
    /// and a pickup costs one.
    pub fn cheapest(&self, from: usize, held: u32, to: usize, want: u32, delta_milli: i64) -> Option<i64> {
        if held & !want != 0 {
            return None;
        }
        let mut dist: HashMap<(usize, u32), i64> = HashMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert((from, held), 0);
        heap.push(Reverse((0i64, from, held)));
        while let Some(Reverse((d, at, h))) = heap.pop() {
            if dist.get(&(at, h)).is_some_and(|&best| best < d) {
                continue;
            }
            if (at, h) == (to, want) {
                return Some(d);
            }
            let mut next = Vec::new();
            for &n in &self.adj[at] {
                next.push((n, h, 1000 + delta_milli * self.similar(at, n) as i64));
            }
            for (b, &loc) in self.bike_at.iter().enumerate() {
                let bit = 1 << b;
                if loc == at && h & bit == 0 && want & bit != 0 {
                    next.push((at, h | bit, 1000));
                }
            }
            for (n, nh, c) in next {
                let nd = d + c;
                if dist.get(&(n, nh)).is_none_or(|&best| nd < best) {
                    dist.insert((n, nh), nd);
                    heap.push(Reverse((nd, n, nh)));
                }
            }
        }
        None
    }

    /// Optimal cost of collecting every bike and returning to base.
    pub fn optimal(&self, delta_milli: i64) -> Option<i64> {
        let all = (1u32 << self.bike_at.len()) - 1;
        self.cheapest(self.base, 0, self.base, all, delta_milli)
    }
}

/// `move(A,B)` to `("A", "B")`.
pub fn move_ends(label: &str) -> Option<(&str, &str)> {
    label.strip_prefix("move(")?.strip_suffix(')')?.split_once(',')
}

/// Small generated maps for exhaustive checks: up to 8 landmarks and 2 bikes.
pub fn small_maps(count: usize, seed: u64) -> Vec<MapSpec> {
    let mut out = Vec::new();
    let mut s = seed;
    while out.len() < count {
        s += 1;
        let params = GenerateParams {
            landmarks: 5 + (s % 4) as usize,
            bikes: (s % 3) as usize,
            ambiguity_quota: (s % 2) as usize,
            visibility_quota: 0,
        };
        if let Ok(m) = generate_map(s, params) {
            out.push(m);
        }
    }
    out
}

pub fn set(ids: &[usize]) -> BTreeSet<usize> {
    ids.iter().copied().collect()
}
