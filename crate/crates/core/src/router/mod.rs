//! Crowd-aware path search.
//!
//! The search settles one label per door. A label is popped in
//! (primary cost, distance, node index) order; its arrival time is aligned
//! down to the latest model-wide update timestamp and every outgoing segment
//! is costed with the populations at that instant.

pub mod adaptive;
mod cost;
pub mod gtg;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Serialize, Serializer};
use thiserror::Error;

use cost::segment_cost_at;
pub use cost::{
    door_passing_contact, door_passing_time, lagging, passing_contact, passing_time, segment_cost, CostVector,
    QueryType, RoutingConfig,
};

use crate::clock::UpdateClock;
use crate::estimator::{EstimatorError, PopulationSource, Session};
use crate::model::{DoorId, IndoorCrowdModel, IndoorPoint, ModelError, PartitionId, Path, Timestamp, Waypoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("no path")]
    NoPath,
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(#[from] ModelError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("replanning did not reach the target within {steps} steps")]
    Livelock { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathNode {
    Source,
    Door(DoorId),
    Target,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryResult {
    pub path: Path,
    pub segments: Vec<CostVector>,
    pub totals: CostVector,
    pub expanded_nodes: usize,
    pub expanded_edges: usize,
    pub derivation_calls: usize,
    pub memory_entries: usize,
    #[serde(rename = "wallTimeMs", serialize_with = "millis")]
    pub wall_time: Duration,
}

fn millis<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

/// Labels settled by a search, in settling order.
#[derive(Debug, Clone, Default)]
pub struct SearchTrace {
    pub settled: Vec<(PathNode, PartitionId, CostVector)>,
}

/// Where a search starts: a point, or a door already crossed out of `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchOrigin {
    Point(IndoorPoint),
    Door { door: DoorId, from: PartitionId },
}

#[derive(Clone, Copy)]
pub(crate) enum Topology<'a> {
    Indoor,
    Gtg(&'a gtg::Gtg<'a>),
}

pub(crate) struct Route {
    /// Nodes after the origin, each with the partition crossed to reach it.
    pub hops: Vec<(PathNode, PartitionId, CostVector)>,
    pub totals: CostVector,
    pub expanded_nodes: usize,
    pub expanded_edges: usize,
    pub derivation_calls: usize,
}

#[derive(Clone, Copy)]
struct Label {
    cost: CostVector,
    prev: usize,
    via: PartitionId,
    seg: CostVector,
}

#[derive(PartialEq)]
struct Key {
    primary: f64,
    distance: f64,
    node: usize,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.primary
            .total_cmp(&other.primary)
            .then(self.distance.total_cmp(&other.distance))
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: usize = usize::MAX;

/// Counts population lookups made through it.
struct Counting<'s> {
    inner: &'s mut dyn PopulationSource,
    calls: usize,
}

impl PopulationSource for Counting<'_> {
    fn prepare(&mut self, t_a: Timestamp) -> Result<(), EstimatorError> {
        self.calls += 1;
        self.inner.prepare(t_a)
    }

    fn population(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        self.calls += 1;
        self.inner.population(v, t)
    }
}

/// Arrival time aligned down to a model-wide update timestamp.
pub fn arrival_timestamp(clock: &mut UpdateClock, start: f64, elapsed: f64) -> Timestamp {
    let t = (start + elapsed).floor() as Timestamp;
    clock.align(t).unwrap_or(t)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_search(
    model: &IndoorCrowdModel,
    topology: Topology<'_>,
    source: &mut dyn PopulationSource,
    clock: &mut UpdateClock,
    origin: SearchOrigin,
    target: &IndoorPoint,
    start: f64,
    qt: QueryType,
    cfg: &RoutingConfig,
    mut trace: Option<&mut SearchTrace>,
) -> Result<Route, RouterError> {
    let n = model.door_count();
    let (src, tgt) = (n, n + 1);
    let host_t = target.partition;
    let waypoint = |i: usize| -> Waypoint {
        if i < n {
            Waypoint::Door(DoorId(i as u32))
        } else if i == tgt {
            Waypoint::Point(target.position())
        } else {
            match origin {
                SearchOrigin::Point(p) => Waypoint::Point(p.position()),
                SearchOrigin::Door { door, .. } => Waypoint::Door(door),
            }
        }
    };

    let mut labels: Vec<Option<Label>> = vec![None; n + 2];
    let mut visited = vec![false; n + 2];
    let mut heap = BinaryHeap::new();
    let (start_node, start_via) = match origin {
        SearchOrigin::Point(p) => (src, p.partition),
        SearchOrigin::Door { door, from } => (door.index(), from),
    };
    labels[start_node] =
        Some(Label { cost: CostVector::ZERO, prev: NONE, via: start_via, seg: CostVector::ZERO });
    heap.push(Reverse(Key { primary: 0.0, distance: 0.0, node: start_node }));

    let mut counting = Counting { inner: source, calls: 0 };
    let mut latest: Option<Timestamp> = None;
    let (mut expanded_nodes, mut expanded_edges) = (0usize, 0usize);
    let mut successors: Vec<(usize, PartitionId)> = Vec::new();

    while let Some(Reverse(key)) = heap.pop() {
        let node = key.node;
        if visited[node] {
            continue;
        }
        let label = labels[node].expect("queued nodes carry labels");
        if label.cost.primary(qt) != key.primary || label.cost.distance != key.distance {
            continue;
        }
        visited[node] = true;
        if let Some(t) = trace.as_deref_mut() {
            let pn = to_path_node(node, n);
            t.settled.push((pn, label.via, label.cost));
        }
        if node == tgt {
            let mut hops = Vec::new();
            let mut cur = node;
            while cur != start_node {
                let l = labels[cur].unwrap();
                hops.push((to_path_node(cur, n), l.via, l.seg));
                cur = l.prev;
            }
            hops.reverse();
            return Ok(Route {
                hops,
                totals: label.cost,
                expanded_nodes,
                expanded_edges,
                derivation_calls: counting.calls,
            });
        }
        expanded_nodes += 1;

        let t_a = arrival_timestamp(clock, start, label.cost.time);
        if latest.is_none_or(|l| t_a > l) {
            counting.prepare(t_a)?;
            latest = Some(t_a);
        }

        successors.clear();
        match (node == src && matches!(origin, SearchOrigin::Point(_)), topology) {
            (true, _) => {
                let host = label.via;
                if host == host_t {
                    successors.push((tgt, host));
                }
                successors.extend(model.p2d_leave(host).iter().map(|d| (d.index(), host)));
            }
            (false, Topology::Indoor) => {
                let door = DoorId(node as u32);
                for w in model.next_partitions(label.via, door) {
                    if w == host_t {
                        successors.push((tgt, w));
                    }
                    successors.extend(model.p2d_leave(w).iter().map(|d| (d.index(), w)));
                }
            }
            (false, Topology::Gtg(g)) => {
                // Every edge leaving the door vertex is scanned, but an edge
                // back into the partition the label came from does not cross
                // the door and is dropped.
                let door = DoorId(node as u32);
                if model.next_partitions(label.via, door).any(|w| w == host_t) {
                    successors.push((tgt, host_t));
                }
                for e in g.out_edges(door) {
                    if model.next_partitions(label.via, door).any(|w| w == e.partition) {
                        successors.push((e.to.index(), e.partition));
                    } else {
                        expanded_edges += 1;
                    }
                }
            }
        }

        // Successors reached through the same partition share one population
        // lookup. Door-graph edges carry their own weight and are priced one
        // by one.
        let grouped = node == src || matches!(topology, Topology::Indoor);
        let mut population: Option<(PartitionId, f64)> = None;
        for &(next, via) in &successors {
            if visited[next] {
                continue;
            }
            expanded_edges += 1;
            let seg = if grouped {
                let p = match population {
                    Some((v, p)) if v == via => p,
                    _ => {
                        let p = counting.population(via, t_a)?;
                        population = Some((via, p));
                        p
                    }
                };
                segment_cost_at(model, p, waypoint(node), waypoint(next), via, cfg)?
            } else {
                segment_cost(model, &mut counting, waypoint(node), waypoint(next), via, t_a, cfg)?
            };
            let cand = label.cost.add(&seg);
            let better = match &labels[next] {
                None => true,
                Some(old) => cand.compare(&old.cost, qt) == Ordering::Less,
            };
            if better {
                labels[next] = Some(Label { cost: cand, prev: node, via, seg });
                heap.push(Reverse(Key { primary: cand.primary(qt), distance: cand.distance, node: next }));
            }
        }
    }
    Err(RouterError::NoPath)
}

fn to_path_node(i: usize, n: usize) -> PathNode {
    if i < n {
        PathNode::Door(DoorId(i as u32))
    } else if i == n {
        PathNode::Source
    } else {
        PathNode::Target
    }
}

pub(crate) fn check_query(
    model: &IndoorCrowdModel,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    cfg: &RoutingConfig,
) -> Result<(), RouterError> {
    cfg.validate()?;
    model.check_point(p_s)?;
    model.check_point(p_t)?;
    let earliest = (0..model.partition_count())
        .map(|v| model.record(PartitionId(v as u32)).timestamp)
        .min()
        .unwrap_or(0);
    if t_q < earliest {
        return Err(RouterError::InvalidQuery(format!(
            "query time {t_q} precedes the earliest recorded population at {earliest}"
        )));
    }
    Ok(())
}

pub(crate) fn finish(
    p_s: IndoorPoint,
    p_t: IndoorPoint,
    route: Route,
    memory_entries: usize,
    began: Instant,
) -> QueryResult {
    let doors: Vec<DoorId> = route
        .hops
        .iter()
        .filter_map(|h| match h.0 {
            PathNode::Door(d) => Some(d),
            _ => None,
        })
        .collect();
    let partitions: Vec<PartitionId> = route.hops.iter().map(|h| h.1).collect();
    QueryResult {
        path: Path { source: p_s, doors, target: p_t, partitions },
        segments: route.hops.iter().map(|h| h.2).collect(),
        totals: route.totals,
        expanded_nodes: route.expanded_nodes,
        expanded_edges: route.expanded_edges,
        derivation_calls: route.derivation_calls,
        memory_entries,
        wall_time: began.elapsed(),
    }
}

/// Best path from `p_s` to `p_t` departing at `t_q`, with populations from a
/// fresh session using the configured estimator.
pub fn search(
    model: &IndoorCrowdModel,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    let mut session = Session::with_nt(model, cfg.estimator, cfg.nt);
    search_with(model, &mut session, p_s, p_t, t_q, qt, cfg)
}

/// As [`search`], reading populations from `source`.
pub fn search_with(
    model: &IndoorCrowdModel,
    source: &mut dyn PopulationSource,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    search_traced(model, source, p_s, p_t, t_q, qt, cfg).map(|r| r.0)
}

/// As [`search_with`], also returning every settled label.
pub fn search_traced(
    model: &IndoorCrowdModel,
    source: &mut dyn PopulationSource,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<(QueryResult, SearchTrace), RouterError> {
    let began = Instant::now();
    check_query(model, p_s, p_t, t_q, cfg)?;
    let mut clock = UpdateClock::new(model);
    let mut trace = SearchTrace::default();
    let route = run_search(
        model,
        Topology::Indoor,
        source,
        &mut clock,
        SearchOrigin::Point(*p_s),
        p_t,
        t_q as f64,
        qt,
        cfg,
        Some(&mut trace),
    )?;
    let memory = source.memory_entries();
    Ok((finish(*p_s, *p_t, route, memory, began), trace))
}

/// Recomputes segment costs along `path` with the search's arrival-time
/// semantics.
pub fn replay(
    model: &IndoorCrowdModel,
    source: &mut dyn PopulationSource,
    path: &Path,
    t_q: Timestamp,
    cfg: &RoutingConfig,
) -> Result<(Vec<CostVector>, CostVector), RouterError> {
    let partitions = if path.partitions.len() == path.doors.len() + 1 {
        path.partitions.clone()
    } else {
        Path::infer_partitions(model, &path.source, &path.doors, &path.target)?
    };
    let mut clock = UpdateClock::new(model);
    let mut nodes = vec![Waypoint::Point(path.source.position())];
    nodes.extend(path.doors.iter().map(|&d| Waypoint::Door(d)));
    nodes.push(Waypoint::Point(path.target.position()));
    let mut total = CostVector::ZERO;
    let mut segments = Vec::with_capacity(partitions.len());
    let mut latest: Option<Timestamp> = None;
    for (k, pair) in nodes.windows(2).enumerate() {
        let t_a = arrival_timestamp(&mut clock, t_q as f64, total.time);
        if latest.is_none_or(|l| t_a > l) {
            source.prepare(t_a)?;
            latest = Some(t_a);
        }
        let seg = segment_cost(model, source, pair[0], pair[1], partitions[k], t_a, cfg)?;
        total = total.add(&seg);
        segments.push(seg);
    }
    Ok((segments, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EstimatorKind;

    fn chain() -> IndoorCrowdModel {
        IndoorCrowdModel::from_json(
            r#"{
              "partitions": [
                {"id": 0, "kind": "R", "area": 40, "maxDensity": 1, "bbox": [0, 0, 10, 4]},
                {"id": 1, "kind": "R", "area": 40, "maxDensity": 1, "bbox": [10, 0, 20, 4]}
              ],
              "doors": [
                {"id": 0, "x": 10, "y": 2, "reportPeriodSec": 10, "directedPairs": [[0, 1], [1, 0]]}
              ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_chain_costs_twice_the_walk() {
        let m = chain();
        let cfg = RoutingConfig::default();
        let s = IndoorPoint::new(PartitionId(0), 4.0, 2.0);
        let t = IndoorPoint::new(PartitionId(1), 16.0, 2.0);
        let r = search(&m, &s, &t, 0, QueryType::Fpq, &cfg).unwrap();
        assert_eq!(r.path.doors, vec![DoorId(0)]);
        assert!((r.totals.distance - 12.0).abs() < 1e-12);
        assert!((r.totals.time - 2.0 * 12.0 / 1.2).abs() < 1e-9);
        assert_eq!(r.totals.contact, 0.0);
        let mut session = Session::new(&m, EstimatorKind::Local);
        let (segs, total) = replay(&m, &mut session, &r.path, 0, &cfg).unwrap();
        assert_eq!(total, r.totals);
        assert_eq!(segs, r.segments);
    }

    #[test]
    fn same_partition_direct_segment() {
        let m = chain();
        let s = IndoorPoint::new(PartitionId(0), 1.0, 2.0);
        let t = IndoorPoint::new(PartitionId(0), 4.0, 2.0);
        let r = search(&m, &s, &t, 0, QueryType::Lcpq, &RoutingConfig::default()).unwrap();
        assert!(r.path.doors.is_empty());
        assert_eq!(r.totals.distance, 3.0);
    }

    #[test]
    fn unreachable_and_invalid() {
        let m = IndoorCrowdModel::from_json(
            r#"{
              "partitions": [
                {"id": 0, "kind": "R", "area": 40, "maxDensity": 1, "bbox": [0, 0, 10, 4]},
                {"id": 1, "kind": "R", "area": 40, "maxDensity": 1, "bbox": [10, 0, 20, 4]}
              ],
              "doors": [
                {"id": 0, "x": 10, "y": 2, "reportPeriodSec": 10, "directedPairs": [[1, 0]]}
              ]
            }"#,
        )
        .unwrap();
        let cfg = RoutingConfig::default();
        let s = IndoorPoint::new(PartitionId(0), 4.0, 2.0);
        let t = IndoorPoint::new(PartitionId(1), 16.0, 2.0);
        assert_eq!(search(&m, &s, &t, 0, QueryType::Fpq, &cfg).unwrap_err(), RouterError::NoPath);
        let outside = IndoorPoint::new(PartitionId(1), 4.0, 2.0);
        assert!(matches!(search(&m, &s, &outside, 0, QueryType::Fpq, &cfg), Err(RouterError::InvalidEndpoint(_))));
        let slow = RoutingConfig { speed: 0.0, ..cfg };
        assert!(matches!(search(&m, &t, &s, 0, QueryType::Fpq, &slow), Err(RouterError::InvalidQuery(_))));
    }
}
