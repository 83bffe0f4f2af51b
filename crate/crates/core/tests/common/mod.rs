//! Reference implementations used as test oracles. They are written from the
//! model definitions directly and share no code with the library beyond the
//! model accessors.

#![allow(dead_code)]

use std::collections::BTreeSet;

use crowdroute::model::{DoorId, IndoorCrowdModel, IndoorPoint, PartitionId, PartitionKind};

pub fn reports(model: &IndoorCrowdModel, d: usize, t: i64) -> bool {
    let s = model.doors()[d].schedule;
    t >= s.origin && (t - s.origin) % s.period == 0
}

pub fn any_report(model: &IndoorCrowdModel, t: i64) -> bool {
    (0..model.door_count()).any(|d| reports(model, d, t))
}

/// Latest instant at or before `t` where some door reports, scanning back one
/// second at a time; `t` itself when no door has reported yet.
pub fn align(model: &IndoorCrowdModel, t: i64) -> i64 {
    let longest = model.doors().iter().map(|d| d.schedule.period).max().unwrap_or(1);
    let earliest = model.doors().iter().map(|d| d.schedule.origin).min().unwrap_or(t);
    let mut s = t;
    while s >= earliest && t - s <= longest {
        if any_report(model, s) {
            return s;
        }
        s -= 1;
    }
    t
}

pub fn start(model: &IndoorCrowdModel) -> i64 {
    (0..model.partition_count()).map(|v| model.record(PartitionId(v as u32)).timestamp).min().unwrap()
}

/// Second-by-second sweep of the whole model.
pub struct Reference<'m> {
    model: &'m IndoorCrowdModel,
    current: Vec<f64>,
    /// Per partition, `(timestamp, population)` after each update.
    pub history: Vec<Vec<(i64, f64)>>,
    through: i64,
    /// Smallest `population - expected outflow` seen before rectification.
    pub min_slack: f64,
    pub min_flow: f64,
    /// Total population after each update timestamp.
    pub totals: Vec<f64>,
}

impl<'m> Reference<'m> {
    pub fn new(model: &'m IndoorCrowdModel) -> Self {
        let n = model.partition_count();
        let current: Vec<f64> = (0..n).map(|v| model.record(PartitionId(v as u32)).population).collect();
        Self {
            model,
            history: vec![Vec::new(); n],
            through: start(model),
            min_slack: f64::INFINITY,
            min_flow: f64::INFINITY,
            totals: vec![current.iter().sum()],
            current,
        }
    }

    pub fn extend_to(&mut self, t: i64) {
        let m = self.model;
        let n = m.partition_count();
        while self.through < t {
            self.through += 1;
            let now = self.through;
            if !any_report(m, now) {
                continue;
            }
            let mut expected = vec![0.0; n];
            for e in m.edges() {
                if reports(m, e.door.index(), now) {
                    expected[e.from.index()] += e.lambda;
                }
            }
            let scale: Vec<f64> = (0..n)
                .map(|v| if expected[v] > self.current[v] { self.current[v] / expected[v] } else { 1.0 })
                .collect();
            self.min_slack = (0..n).map(|v| self.current[v] - expected[v]).fold(self.min_slack, f64::min);
            let mut next = self.current.clone();
            for e in m.edges() {
                if !reports(m, e.door.index(), now) {
                    continue;
                }
                let flow = e.lambda * scale[e.from.index()];
                self.min_flow = self.min_flow.min(flow);
                if now > m.record(e.from).timestamp {
                    next[e.from.index()] -= flow;
                }
                if now > m.record(e.to).timestamp {
                    next[e.to.index()] += flow;
                }
            }
            for (v, &p) in next.iter().enumerate() {
                if now > m.record(PartitionId(v as u32)).timestamp {
                    self.history[v].push((now, p));
                }
            }
            self.current = next;
            self.totals.push(self.current.iter().sum());
        }
    }

    pub fn at(&mut self, v: PartitionId, t: i64) -> f64 {
        self.extend_to(t);
        let h = &self.history[v.index()];
        match h.iter().rev().find(|(s, _)| *s <= t) {
            Some(&(_, p)) => p,
            None => self.model.record(v).population,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Time,
    Contact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cost {
    pub distance: f64,
    pub time: f64,
    pub contact: f64,
}

impl Cost {
    pub fn primary(&self, o: Objective) -> f64 {
        match o {
            Objective::Time => self.time,
            Objective::Contact => self.contact,
        }
    }

    pub fn better(&self, other: &Cost, o: Objective) -> bool {
        (self.primary(o), self.distance) < (other.primary(o), other.distance)
    }
}

pub fn rho(kind: PartitionKind, ratio: f64) -> f64 {
    match kind {
        PartitionKind::Queue => 1.0 + ratio.exp(),
        PartitionKind::Random => 1.0 + (ratio * ratio).exp(),
    }
}

/// Cost of walking `len` meters through `v` holding `population` objects.
pub fn segment(model: &IndoorCrowdModel, v: PartitionId, len: f64, population: f64, speed: f64, width: f64) -> Cost {
    let p = model.partition(v);
    let density = population / p.area;
    let time = if len == 0.0 { 0.0 } else { len / speed * rho(p.kind, density / p.max_density) };
    let contact = match p.kind {
        PartitionKind::Random => len * width * density,
        PartitionKind::Queue if len == 0.0 => 0.0,
        PartitionKind::Queue => width / len * population,
    };
    Cost { distance: len, time, contact }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Place {
    Source,
    Door(usize),
}

fn position(model: &IndoorCrowdModel, s: &IndoorPoint, at: Place) -> (f64, f64) {
    match at {
        Place::Source => (s.x, s.y),
        Place::Door(d) => (model.doors()[d].position.x, model.doors()[d].position.y),
    }
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Partitions entered by crossing door `d` out of `from`.
fn crossings(model: &IndoorCrowdModel, from: PartitionId, d: usize) -> Vec<PartitionId> {
    model.edges().iter().filter(|e| e.from == from && e.door.index() == d).map(|e| e.to).collect()
}

/// Doors through which some edge leaves `v`.
fn exits(model: &IndoorCrowdModel, v: PartitionId) -> BTreeSet<usize> {
    model.edges().iter().filter(|e| e.from == v).map(|e| e.door.index()).collect()
}

#[derive(Debug, Clone)]
pub struct Enumerated {
    pub cost: Cost,
    pub doors: Vec<DoorId>,
    /// Cost accumulated on reaching each door of `doors`.
    pub prefixes: Vec<Cost>,
    pub paths: usize,
}

pub struct Query<'a> {
    pub source: &'a IndoorPoint,
    pub target: &'a IndoorPoint,
    pub t_q: i64,
    pub objective: Objective,
    pub speed: f64,
    pub width: f64,
}

/// Exhaustive enumeration of loop-free door sequences. Populations are read
/// at the aligned arrival time at the start of each segment. Door-to-door
/// lengths are straight lines, which holds for the convex cells of random
/// models.
pub fn brute_force<'m>(model: &'m IndoorCrowdModel, reference: &mut Reference<'m>, q: &Query<'_>) -> Option<Enumerated> {
    struct Walk<'q, 'r, 'm> {
        model: &'m IndoorCrowdModel,
        reference: &'r mut Reference<'m>,
        q: &'q Query<'q>,
        used: Vec<bool>,
        doors: Vec<DoorId>,
        prefixes: Vec<Cost>,
        best: Option<Enumerated>,
        paths: usize,
    }

    impl Walk<'_, '_, '_> {
        fn go(&mut self, at: Place, inside: &[PartitionId], cost: Cost) {
            let m = self.model;
            let t_a = align(m, (self.q.t_q as f64 + cost.time).floor() as i64);
            let here = position(m, self.q.source, at);
            for &w in inside {
                let population = self.reference.at(w, t_a);
                if w == self.q.target.partition {
                    let len = euclid(here, (self.q.target.x, self.q.target.y));
                    let seg = segment(m, w, len, population, self.q.speed, self.q.width);
                    let total = add(cost, seg);
                    self.paths += 1;
                    if self.best.as_ref().is_none_or(|b| total.better(&b.cost, self.q.objective)) {
                        self.best = Some(Enumerated {
                            cost: total,
                            doors: self.doors.clone(),
                            prefixes: self.prefixes.clone(),
                            paths: 0,
                        });
                    }
                }
                for d in exits(m, w) {
                    if self.used[d] {
                        continue;
                    }
                    let len = euclid(here, position(m, self.q.source, Place::Door(d)));
                    let seg = segment(m, w, len, population, self.q.speed, self.q.width);
                    let total = add(cost, seg);
                    self.used[d] = true;
                    self.doors.push(DoorId(d as u32));
                    self.prefixes.push(total);
                    let next = crossings(m, w, d);
                    self.go(Place::Door(d), &next, total);
                    self.prefixes.pop();
                    self.doors.pop();
                    self.used[d] = false;
                }
            }
        }
    }

    let mut walk = Walk {
        model,
        reference,
        q,
        used: vec![false; model.door_count()],
        doors: Vec::new(),
        prefixes: Vec::new(),
        best: None,
        paths: 0,
    };
    walk.go(Place::Source, &[q.source.partition], Cost::default());
    let paths = walk.paths;
    walk.best.map(|mut b| {
        b.paths = paths;
        b
    })
}

fn add(a: Cost, b: Cost) -> Cost {
    Cost { distance: a.distance + b.distance, time: a.time + b.time, contact: a.contact + b.contact }
}

/// Plain Dijkstra on distance over `(door, partition entered)` states.
/// Returns the distance and door sequence of the shortest path.
pub fn distance_dijkstra(model: &IndoorCrowdModel, s: &IndoorPoint, t: &IndoorPoint) -> Option<(f64, Vec<DoorId>)> {
    let np = model.partition_count();
    let nd = model.door_count();
    // State index: door * np + partition the walker is in after crossing.
    let target_state = nd * np;
    let source_state = target_state + 1;
    let count = source_state + 1;
    let mut dist = vec![f64::INFINITY; count];
    let mut prev = vec![usize::MAX; count];
    let mut done = vec![false; count];
    dist[source_state] = 0.0;
    loop {
        let u = (0..count).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
        done[u] = true;
        if u == target_state {
            break;
        }
        let (here, inside) = if u == source_state {
            ((s.x, s.y), s.partition)
        } else {
            let d = u / np;
            ((model.doors()[d].position.x, model.doors()[d].position.y), PartitionId((u % np) as u32))
        };
        let relax = |v: usize, len: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
            if dist[u] + len < dist[v] {
                dist[v] = dist[u] + len;
                prev[v] = u;
            }
        };
        if inside == t.partition {
            relax(target_state, euclid(here, (t.x, t.y)), &mut dist, &mut prev);
        }
        for d in exits(model, inside) {
            let p = &model.doors()[d].position;
            for w in crossings(model, inside, d) {
                relax(d * np + w.index(), euclid(here, (p.x, p.y)), &mut dist, &mut prev);
            }
        }
    }
    let mut doors = Vec::new();
    let mut cur = prev[target_state];
    while cur != source_state {
        doors.push(DoorId((cur / np) as u32));
        cur = prev[cur];
    }
    doors.reverse();
    Some((dist[target_state], doors))
}

/// A point drawn inside partition `v`'s bounding box, away from its walls.
pub fn interior_point(model: &IndoorCrowdModel, v: PartitionId, fx: f64, fy: f64) -> IndoorPoint {
    let [x0, y0, x1, y1] = model.partition(v).shape.bounds();
    let fx = 0.05 + 0.9 * fx;
    let fy = 0.05 + 0.9 * fy;
    IndoorPoint::new(v, x0 + (x1 - x0) * fx, y0 + (y1 - y0) * fy)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
