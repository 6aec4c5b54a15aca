use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

pub const MAP_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct District {
    pub id: String,
    /// Adjective used in utterances, e.g. "Western".
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub color: String,
    pub x: f64,
    pub y: f64,
    pub district: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bike {
    pub id: String,
    /// True location. Hidden from the agent.
    pub location: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialReport {
    pub bike: String,
    pub district: String,
}

/// The user can see `bike` while standing at `from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    pub from: String,
    pub bike: String,
}

/// A bike-collection map document.
///
/// Field order matters for the TOML encoding: plain values and the road list
/// must precede the arrays of tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub version: u32,
    pub name: String,
    pub base: String,
    pub roads: Vec<(String, String)>,
    pub districts: Vec<District>,
    pub landmarks: Vec<Landmark>,
    #[serde(default)]
    pub bikes: Vec<Bike>,
    #[serde(default)]
    pub reports: Vec<PartialReport>,
    #[serde(default)]
    pub visibility: Vec<Visibility>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("map document is not valid TOML for the map schema: {0}")]
    Schema(String),
    #[error("unsupported map format version {0} (expected {MAP_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{context} refers to unknown landmark `{id}`")]
    UnknownLandmark { context: String, id: String },
    #[error("{context} refers to unknown district `{id}`")]
    UnknownDistrict { context: String, id: String },
    #[error("{context} refers to unknown bike `{id}`")]
    UnknownBike { context: String, id: String },
    #[error("road from `{0}` to itself")]
    SelfLoop(String),
    #[error("road between `{0}` and `{1}` listed twice")]
    DuplicateRoad(String, String),
    #[error("road graph is disconnected: {} unreachable from the base ({})", .unreachable.len(), .unreachable.join(", "))]
    Disconnected { unreachable: Vec<String> },
    #[error("bike `{bike}` is reported in district `{reported}` but placed in `{actual}`")]
    ReportContradiction { bike: String, reported: String, actual: String },
    #[error("district `{0}` has no landmarks")]
    EmptyDistrict(String),
    #[error("landmarks `{a}` and `{b}` next to `{junction}` share type and color, so an elaboration could not tell them apart")]
    IndistinctNeighbours { junction: String, a: String, b: String },
}

impl MapSpec {
    pub fn from_toml(document: &str) -> Result<MapSpec, MapError> {
        let map: MapSpec = toml::from_str(document).map_err(|e| MapError::Schema(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_toml(&self) -> String {
        let doc = toml::to_string(self).expect("map documents always serialize");
        // one road per line reads better than the encoder's single line
        let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
        let roads: String = self.roads.iter().map(|(a, b)| format!("    [{}, {}],\n", quote(a), quote(b))).collect();
        doc.lines()
            .map(|l| if l.starts_with("roads = ") { format!("roads = [\n{roads}]\n") } else { format!("{l}\n") })
            .collect()
    }

    pub fn landmark_index(&self, id: &str) -> Option<usize> {
        self.landmarks.iter().position(|l| l.id == id)
    }

    pub fn district(&self, id: &str) -> Option<&District> {
        self.districts.iter().find(|d| d.id == id)
    }

    pub fn report_for(&self, bike: &str) -> Option<&PartialReport> {
        self.reports.iter().find(|r| r.bike == bike)
    }

    /// Adjacency lists by landmark index, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let idx: HashMap<&str, usize> = self.landmarks.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
        let mut adj = vec![Vec::new(); self.landmarks.len()];
        for (a, b) in &self.roads {
            if let (Some(&i), Some(&j)) = (idx.get(a.as_str()), idx.get(b.as_str())) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Landmarks whose neighbourhood holds two or more landmarks of one type.
    pub fn ambiguity_sites(&self) -> Vec<usize> {
        let adj = self.adjacency();
        (0..self.landmarks.len())
            .filter(|&i| {
                let mut seen = HashSet::new();
                adj[i].iter().any(|&j| !seen.insert(self.landmarks[j].kind.as_str()))
            })
            .collect()
    }

    /// Bikes that the user can see from at least one landmark.
    pub fn visible_bikes(&self) -> BTreeSet<&str> {
        self.visibility.iter().map(|v| v.bike.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.version != MAP_FORMAT_VERSION {
            return Err(MapError::UnsupportedVersion(self.version));
        }
        let mut districts = HashSet::new();
        for d in &self.districts {
            if !districts.insert(d.id.as_str()) {
                return Err(MapError::DuplicateId { kind: "district", id: d.id.clone() });
            }
        }
        let mut landmarks = HashMap::new();
        for (i, l) in self.landmarks.iter().enumerate() {
            if landmarks.insert(l.id.as_str(), i).is_some() {
                return Err(MapError::DuplicateId { kind: "landmark", id: l.id.clone() });
            }
            if !districts.contains(l.district.as_str()) {
                return Err(MapError::UnknownDistrict { context: format!("landmark `{}`", l.id), id: l.district.clone() });
            }
        }
        for d in &self.districts {
            if !self.landmarks.iter().any(|l| l.district == d.id) {
                return Err(MapError::EmptyDistrict(d.id.clone()));
            }
        }
        if !landmarks.contains_key(self.base.as_str()) {
            return Err(MapError::UnknownLandmark { context: "base".into(), id: self.base.clone() });
        }
        let mut roads = HashSet::new();
        for (a, b) in &self.roads {
            for end in [a, b] {
                if !landmarks.contains_key(end.as_str()) {
                    return Err(MapError::UnknownLandmark { context: format!("road {a}-{b}"), id: end.clone() });
                }
            }
            if a == b {
                return Err(MapError::SelfLoop(a.clone()));
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if !roads.insert(key) {
                return Err(MapError::DuplicateRoad(key.0.clone(), key.1.clone()));
            }
        }
        let mut bikes = HashMap::new();
        for b in &self.bikes {
            if bikes.insert(b.id.as_str(), b).is_some() {
                return Err(MapError::DuplicateId { kind: "bike", id: b.id.clone() });
            }
            if !landmarks.contains_key(b.location.as_str()) {
                return Err(MapError::UnknownLandmark { context: format!("bike `{}`", b.id), id: b.location.clone() });
            }
        }
        let mut reported = HashSet::new();
        for r in &self.reports {
            let Some(bike) = bikes.get(r.bike.as_str()) else {
                return Err(MapError::UnknownBike { context: "report".into(), id: r.bike.clone() });
            };
            if !reported.insert(r.bike.as_str()) {
                return Err(MapError::DuplicateId { kind: "report", id: r.bike.clone() });
            }
            if !districts.contains(r.district.as_str()) {
                return Err(MapError::UnknownDistrict { context: format!("report for `{}`", r.bike), id: r.district.clone() });
            }
            let actual = &self.landmarks[landmarks[bike.location.as_str()]].district;
            if actual != &r.district {
                return Err(MapError::ReportContradiction {
                    bike: r.bike.clone(),
                    reported: r.district.clone(),
                    actual: actual.clone(),
                });
            }
        }
        for v in &self.visibility {
            if !landmarks.contains_key(v.from.as_str()) {
                return Err(MapError::UnknownLandmark { context: "visibility".into(), id: v.from.clone() });
            }
            if !bikes.contains_key(v.bike.as_str()) {
                return Err(MapError::UnknownBike { context: "visibility".into(), id: v.bike.clone() });
            }
        }

        let adj = self.adjacency();
        let base = landmarks[self.base.as_str()];
        let mut seen = vec![false; self.landmarks.len()];
        seen[base] = true;
        let mut queue = VecDeque::from([base]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let unreachable: Vec<String> =
            seen.iter().enumerate().filter(|(_, &s)| !s).map(|(i, _)| self.landmarks[i].id.clone()).collect();
        if !unreachable.is_empty() {
            return Err(MapError::Disconnected { unreachable });
        }

        for (i, nbrs) in adj.iter().enumerate() {
            let mut by_look: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for &j in nbrs {
                let l = &self.landmarks[j];
                if let Some(&k) = by_look.get(&(l.kind.as_str(), l.color.as_str())) {
                    return Err(MapError::IndistinctNeighbours {
                        junction: self.landmarks[i].id.clone(),
                        a: self.landmarks[k].id.clone(),
                        b: l.id.clone(),
                    });
                }
                by_look.insert((l.kind.as_str(), l.color.as_str()), j);
            }
        }
        Ok(())
    }
}
