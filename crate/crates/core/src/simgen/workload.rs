use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::model::{IndoorCrowdModel, IndoorPoint, PartitionId};

use super::{rng_stream, SimgenError, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryInstance {
    pub id: usize,
    pub source: IndoorPoint,
    pub target: IndoorPoint,
    /// Shortest indoor distance between the two points.
    pub distance: f64,
}

struct Dist(f64);

impl PartialEq for Dist {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Shortest walking distance from `p` to every door, with the partition the
/// door was reached through. Door labels follow the same settling rule as
/// the path search.
pub fn door_distances(model: &IndoorCrowdModel, p: &IndoorPoint) -> Vec<Option<(f64, PartitionId)>> {
    let n = model.door_count();
    let mut labels: Vec<Option<(f64, PartitionId)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let pos = p.position();
    for &d in model.p2d_leave(p.partition) {
        let len = pos.distance(&model.door(d).position);
        if labels[d.index()].is_none_or(|(old, _)| len < old) {
            labels[d.index()] = Some((len, p.partition));
            heap.push(Reverse((Dist(len), d.index())));
        }
    }
    while let Some(Reverse((Dist(dist), i))) = heap.pop() {
        if done[i] {
            continue;
        }
        done[i] = true;
        let door = model.doors()[i].id;
        let via = labels[i].unwrap().1;
        for w in model.next_partitions(via, door) {
            let part = model.partition(w);
            for &next in model.p2d_leave(w) {
                let cand = dist + part.d2d.get(door, next);
                if !done[next.index()] && cand.is_finite() && labels[next.index()].is_none_or(|(old, _)| cand < old) {
                    labels[next.index()] = Some((cand, w));
                    heap.push(Reverse((Dist(cand), next.index())));
                }
            }
        }
    }
    labels
}

/// Shortest walking distance between two points, `None` when unreachable.
pub fn shortest_distance(model: &IndoorCrowdModel, p_s: &IndoorPoint, p_t: &IndoorPoint) -> Option<f64> {
    let mut best = if p_s.partition == p_t.partition { p_s.position().distance(&p_t.position()) } else { f64::INFINITY };
    let target = p_t.position();
    for (i, label) in door_distances(model, p_s).into_iter().enumerate() {
        if let Some((dist, via)) = label {
            let door = model.doors()[i].id;
            if model.next_partitions(via, door).any(|w| w == p_t.partition) {
                best = best.min(dist + model.door(door).position.distance(&target));
            }
        }
    }
    best.is_finite().then_some(best)
}

fn random_point(model: &IndoorCrowdModel, v: PartitionId, rng: &mut ChaCha8Rng) -> IndoorPoint {
    let part = model.partition(v);
    let [x0, y0, x1, y1] = part.shape.bounds();
    loop {
        let p = Point::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
        if part.contains(&p) {
            return IndoorPoint::new(v, p.x, p.y);
        }
    }
}

const TOLERANCE: f64 = 0.05;
const POINT_TRIES: usize = 64;

/// Seeded source/target pairs whose shortest indoor distance is within 5% of
/// `s2t`. Sources are uniform over a uniformly drawn partition; the target
/// sits in a partition entered through a door whose distance from the source
/// falls just short of `s2t`.
pub fn generate_workload(model: &IndoorCrowdModel, spec: &WorkloadSpec) -> Result<Vec<QueryInstance>, SimgenError> {
    spec.validate()?;
    let mut rng = rng_stream(spec.seed, 2);
    let s2t = spec.s2t;
    let (lo, hi) = (s2t * (1.0 - TOLERANCE), s2t * (1.0 + TOLERANCE));
    let max_attempts = 50 * spec.instances + 200;
    let mut max_realizable: f64 = 0.0;
    let mut out = Vec::with_capacity(spec.instances);
    let mut attempts = 0;
    while out.len() < spec.instances {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SimgenError::Unrealizable { requested: s2t, max_realizable });
        }
        let v = PartitionId(rng.random_range(0..model.partition_count() as u32));
        let source = random_point(model, v, &mut rng);
        let labels = door_distances(model, &source);
        let mut candidates = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            let Some((dist, via)) = *label else { continue };
            let door = model.doors()[i].id;
            for w in model.next_partitions(via, door) {
                let [x0, y0, x1, y1] = model.partition(w).shape.bounds();
                let pos = model.door(door).position;
                let reach = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
                    .iter()
                    .map(|&(x, y)| pos.distance(&Point::new(x, y)))
                    .fold(0.0, f64::max);
                max_realizable = max_realizable.max(dist + reach);
                if dist <= s2t && dist + reach >= lo {
                    candidates.push((door, dist, w));
                }
            }
        }
        let Some(&(door, dist, w)) = candidates.choose(&mut rng) else { continue };
        let pos = model.door(door).position;
        for _ in 0..POINT_TRIES {
            let target = random_point(model, w, &mut rng);
            let walk = dist + pos.distance(&target.position());
            if walk < lo || walk > hi {
                continue;
            }
            if let Some(d) = shortest_distance(model, &source, &target) {
                if (lo..=hi).contains(&d) {
                    out.push(QueryInstance { id: out.len(), source, target, distance: d });
                    break;
                }
            }
        }
    }
    Ok(out)
}
