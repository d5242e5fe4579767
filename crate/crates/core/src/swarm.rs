//! The substrate swarm: sensor placement, geometric connectivity and
//! capacities.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gossip::ContactGraph;
use crate::rng::sim_rng;

/// A participatory sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub id: usize,
    /// Location in the unit square.
    pub position: [f64; 2],
    pub capacity: f64,
}

impl Sensor {
    pub fn distance_to(&self, point: [f64; 2]) -> f64 {
        distance(self.position, point)
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Random geometric graph over the sensors: `i` and `j` are linked iff they
/// are distinct and at most `radius` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SwarmDoc", into = "SwarmDoc")]
pub struct Swarm {
    sensors: Vec<Sensor>,
    radius: f64,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwarmDoc {
    radius: f64,
    sensors: Vec<Sensor>,
}

impl TryFrom<SwarmDoc> for Swarm {
    type Error = Error;

    fn try_from(doc: SwarmDoc) -> Result<Self> {
        Swarm::from_sensors(doc.sensors, doc.radius)
    }
}

impl From<Swarm> for SwarmDoc {
    fn from(s: Swarm) -> Self {
        SwarmDoc {
            radius: s.radius,
            sensors: s.sensors,
        }
    }
}

/// Row of the gossip transition matrix: `1/(deg+1)` on the owner and on
/// each of its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub owner: usize,
    pub entries: BTreeMap<usize, f64>,
}

impl TransitionRow {
    pub fn probability(&self, j: usize) -> f64 {
        self.entries.get(&j).copied().unwrap_or(0.0)
    }
}

/// Builds the transition row of `owner` given its neighbour list.
pub fn transition_row_for(owner: usize, neighbors: &[usize]) -> TransitionRow {
    let p = 1.0 / (neighbors.len() as f64 + 1.0);
    let mut entries = BTreeMap::new();
    entries.insert(owner, p);
    for &j in neighbors {
        entries.insert(j, p);
    }
    TransitionRow { owner, entries }
}

/// Places `count` sensors uniformly on the unit square with capacities drawn
/// uniformly from `[capacity_low, capacity_high]`.
pub fn generate_swarm(
    count: usize,
    radius: f64,
    capacity_low: f64,
    capacity_high: f64,
    seed: u64,
) -> Result<Swarm> {
    if count == 0 {
        return Err(Error::invalid("swarm needs at least one sensor"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !(capacity_low > 0.0) || !(capacity_low <= capacity_high) || !capacity_high.is_finite() {
        return Err(Error::invalid(format!(
            "capacity range must satisfy 0 < low <= high, got [{capacity_low}, {capacity_high}]"
        )));
    }
    let mut rng = sim_rng(seed);
    let sensors = (0..count)
        .map(|id| {
            let position = [rng.random::<f64>(), rng.random::<f64>()];
            let capacity = if capacity_low < capacity_high {
                rng.random_range(capacity_low..=capacity_high)
            } else {
                capacity_low
            };
            Sensor {
                id,
                position,
                capacity,
            }
        })
        .collect();
    Swarm::from_sensors(sensors, radius)
}

impl Swarm {
    /// Builds a swarm from explicit sensors. Ids must be `0..len` in order.
    pub fn from_sensors(sensors: Vec<Sensor>, radius: f64) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::invalid("swarm needs at least one sensor"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!(
                "radius must be positive, got {radius}"
            )));
        }
        for (idx, s) in sensors.iter().enumerate() {
            if s.id != idx {
                return Err(Error::invalid(format!(
                    "sensor at index {idx} has id {}",
                    s.id
                )));
            }
            if !s.position.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::invalid(format!(
                    "sensor {idx} lies outside the unit square"
                )));
            }
            if !(s.capacity > 0.0) || !s.capacity.is_finite() {
                return Err(Error::invalid(format!(
                    "sensor {idx} has non-positive capacity"
                )));
            }
        }
        let n = sensors.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if distance(sensors[i].position, sensors[j].position) <= radius {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        Ok(Swarm {
            sensors,
            radius,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn sensor(&self, id: usize) -> Result<&Sensor> {
        self.sensors
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown sensor id {id}")))
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn degree(&self, id: usize) -> usize {
        self.adjacency[id].len()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency
            .get(i)
            .is_some_and(|row| row.binary_search(&j).is_ok())
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn max_capacity(&self) -> f64 {
        self.sensors
            .iter()
            .map(|s| s.capacity)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn transition_row(&self, i: usize) -> Result<TransitionRow> {
        self.sensor(i)?;
        Ok(transition_row_for(i, &self.adjacency[i]))
    }

    /// Breadth-first hop distances from `source` to every sensor.
    pub fn hops_from(&self, source: usize) -> Result<Vec<Option<usize>>> {
        self.sensor(source)?;
        let mut dist = vec![None; self.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Shortest path length in hops; `None` if `i` and `j` are disconnected.
    pub fn shortest_hops(&self, i: usize, j: usize) -> Result<Option<usize>> {
        self.sensor(j)?;
        Ok(self.hops_from(i)?[j])
    }

    pub fn is_connected(&self) -> bool {
        self.hops_from(0)
            .map(|d| d.iter().all(Option::is_some))
            .unwrap_or(false)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl ContactGraph for Swarm {
    fn node_count(&self) -> usize {
        self.len()
    }

    fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(points: &[[f64; 2]], radius: f64) -> Swarm {
        let sensors = points
            .iter()
            .enumerate()
            .map(|(id, &position)| Sensor {
                id,
                position,
                capacity: 60.0,
            })
            .collect();
        Swarm::from_sensors(sensors, radius).unwrap()
    }

    #[test]
    fn distance_rule() {
        let near = line(&[[0.5, 0.5], [0.55, 0.5]], 0.1);
        assert!(near.is_adjacent(0, 1));
        let far = line(&[[0.5, 0.5], [0.65, 0.5]], 0.1);
        assert!(!far.is_adjacent(0, 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_swarm(100, 0.1, 50.0, 100.0, 7).unwrap();
        let b = generate_swarm(100, 0.1, 50.0, 100.0, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_swarm(100, 0.1, 50.0, 100.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generation_rejects_bad_arguments() {
        assert!(generate_swarm(0, 0.1, 50.0, 100.0, 1).is_err());
        assert!(generate_swarm(10, 0.0, 50.0, 100.0, 1).is_err());
        assert!(generate_swarm(10, -1.0, 50.0, 100.0, 1).is_err());
        assert!(generate_swarm(10, 0.1, 100.0, 50.0, 1).is_err());
    }

    #[test]
    fn transition_rows() {
        // star: 0 in the middle with three leaves
        let s = line(&[[0.5, 0.5], [0.55, 0.5], [0.45, 0.5], [0.5, 0.55]], 0.06);
        let row = s.transition_row(0).unwrap();
        assert_eq!(row.entries.len(), 4);
        assert!(row.entries.values().all(|&p| p == 0.25));

        let isolated = line(&[[0.1, 0.1], [0.9, 0.9]], 0.1);
        let row = isolated.transition_row(0).unwrap();
        assert_eq!(row.entries.len(), 1);
        assert_eq!(row.probability(0), 1.0);

        let path = line(&[[0.1, 0.5], [0.15, 0.5], [0.2, 0.5]], 0.06);
        let row = path.transition_row(1).unwrap();
        for j in 0..3 {
            assert!((row.probability(j) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(path.transition_row(3).is_err());
    }

    #[test]
    fn hops() {
        let path = line(&[[0.1, 0.5], [0.15, 0.5], [0.2, 0.5], [0.9, 0.9]], 0.06);
        assert_eq!(path.shortest_hops(0, 1).unwrap(), Some(1));
        assert_eq!(path.shortest_hops(0, 2).unwrap(), Some(2));
        assert_eq!(path.shortest_hops(2, 2).unwrap(), Some(0));
        assert_eq!(path.shortest_hops(0, 3).unwrap(), None);
        assert!(path.shortest_hops(0, 9).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = generate_swarm(30, 0.2, 50.0, 100.0, 3).unwrap();
        let back = Swarm::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
        assert!(Swarm::from_json(r#"{"radius":0.1,"sensors":[],"extra":1}"#).is_err());
    }

    /// Length of the shortest simple path by exhaustive DFS.
    fn brute_hops(s: &Swarm, i: usize, j: usize) -> Option<usize> {
        fn dfs(
            s: &Swarm,
            u: usize,
            target: usize,
            seen: &mut Vec<bool>,
            depth: usize,
            best: &mut Option<usize>,
        ) {
            if u == target {
                *best = Some(best.map_or(depth, |b| b.min(depth)));
                return;
            }
            for &v in s.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    dfs(s, v, target, seen, depth + 1, best);
                    seen[v] = false;
                }
            }
        }
        let mut seen = vec![false; s.len()];
        seen[i] = true;
        let mut best = None;
        dfs(s, i, j, &mut seen, 0, &mut best);
        best
    }

    proptest! {
        #[test]
        fn adjacency_is_exactly_the_distance_rule(seed in any::<u64>(), count in 1usize..25, radius in 0.05f64..0.6) {
            let s = generate_swarm(count, radius, 50.0, 100.0, seed).unwrap();
            for i in 0..count {
                prop_assert!(!s.is_adjacent(i, i));
                for j in 0..count {
                    let within = i != j && distance(s.sensors()[i].position, s.sensors()[j].position) <= radius;
                    prop_assert_eq!(s.is_adjacent(i, j), within);
                    prop_assert_eq!(s.is_adjacent(i, j), s.is_adjacent(j, i));
                }
                let row = s.transition_row(i).unwrap();
                let total: f64 = row.entries.values().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                for &j in row.entries.keys() {
                    prop_assert!(j == i || s.is_adjacent(i, j));
                }
            }
        }

        #[test]
        fn bfs_matches_path_enumeration(seed in any::<u64>(), count in 1usize..=8, radius in 0.2f64..0.7) {
            let s = generate_swarm(count, radius, 50.0, 100.0, seed).unwrap();
            for i in 0..count {
                for j in 0..count {
                    prop_assert_eq!(s.shortest_hops(i, j).unwrap(), brute_hops(&s, i, j));
                }
            }
        }
    }
}
