//! Object-level crowd simulation.
//!
//! Individual objects are moved across doors at the model-wide update
//! timestamps. Every directed edge whose door reports draws a Poisson count
//! with the edge's rate; the draws are granted in a random edge order and
//! capped by what is left of the source partition's occupancy at the start
//! of the step. All departures of a step happen before any arrival. Queue
//! partitions release objects in arrival order; the others release uniformly
//! at random.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::clock::UpdateClock;
use crate::estimator::{EstimatorError, PopulationSource};
use crate::flows::{FlowSample, Trajectory};
use crate::geometry::Point;
use crate::model::{EdgeId, IndoorCrowdModel, IndoorPoint, PartitionId, PartitionKind, Timestamp};
use crate::router::{search_with, QueryResult, QueryType, RouterError, RoutingConfig};

use super::{rng_stream, QueryInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: Timestamp,
    pub seed: u64,
    pub trajectories: bool,
    pub record_flows: bool,
}

impl SimConfig {
    pub fn new(horizon: Timestamp, seed: u64) -> Self {
        Self { horizon, seed, trajectories: false, record_flows: false }
    }
}

/// One object joining or leaving a queue partition. `seq` orders events
/// that share a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueEvent {
    pub object: u32,
    pub time: Timestamp,
    pub seq: u64,
}

#[derive(Debug, Clone, Default)]
pub struct QueueLog {
    pub joins: Vec<QueueEvent>,
    pub leaves: Vec<QueueEvent>,
}

impl QueueLog {
    /// Whether objects left in exactly the order they joined.
    pub fn is_fifo(&self) -> bool {
        self.leaves.len() <= self.joins.len()
            && self.leaves.iter().zip(&self.joins).all(|(l, j)| l.object == j.object && (j.time, j.seq) < (l.time, l.seq))
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub start: Timestamp,
    pub horizon: Timestamp,
    pub objects: usize,
    pub initial: Vec<u32>,
    /// Model-wide update timestamps in `(start, horizon]`.
    pub stamps: Vec<Timestamp>,
    /// Populations right after each stamp, indexed like `stamps`.
    pub populations: Vec<Vec<u32>>,
    /// Per-edge crossing counts at every report of the edge's door.
    pub flows: Vec<Vec<FlowSample>>,
    /// Join and leave logs of every queue partition, indexed by partition.
    pub queues: Vec<Option<QueueLog>>,
    pub trajectories: Vec<Trajectory>,
    /// Largest single-step outflow of a partition divided by its occupancy at
    /// the step's start; never above 1.
    pub max_outflow_share: f64,
}

impl SimState {
    pub fn population(&self, v: PartitionId, t: Timestamp) -> Result<u32, EstimatorError> {
        if t > self.horizon {
            return Err(EstimatorError::HorizonExceeded { requested: t, horizon: self.horizon });
        }
        let idx = self.stamps.partition_point(|&s| s <= t);
        Ok(if idx == 0 { self.initial[v.index()] } else { self.populations[idx - 1][v.index()] })
    }

    pub fn total_at(&self, idx: usize) -> u64 {
        self.populations[idx].iter().map(|&p| p as u64).sum()
    }
}

/// Reads the simulated populations.
pub struct TruePopulations<'s>(pub &'s SimState);

impl PopulationSource for TruePopulations<'_> {
    fn population(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        self.0.population(v, t).map(f64::from)
    }
}

fn random_point(model: &IndoorCrowdModel, v: PartitionId, rng: &mut impl Rng) -> IndoorPoint {
    let part = model.partition(v);
    let [x0, y0, x1, y1] = part.shape.bounds();
    loop {
        let p = Point::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
        if part.contains(&p) {
            return IndoorPoint::new(v, p.x, p.y);
        }
    }
}

/// Runs the simulation from the earliest recorded population to `horizon`.
/// Recorded populations are rounded to whole objects.
pub fn simulate(model: &IndoorCrowdModel, cfg: &SimConfig) -> SimState {
    let mut rng = rng_stream(cfg.seed, 3);
    let mut clock = UpdateClock::new(model);
    let start = clock.start();
    let np = model.partition_count();

    let initial: Vec<u32> = (0..np)
        .map(|v| model.record(PartitionId(v as u32)).population.round().max(0.0) as u32)
        .collect();
    let mut occupants: Vec<VecDeque<u32>> = Vec::with_capacity(np);
    let mut queues: Vec<Option<QueueLog>> = model
        .partitions()
        .iter()
        .map(|p| (p.kind == PartitionKind::Queue).then(QueueLog::default))
        .collect();
    let mut trajectories = Vec::new();
    let mut seq = 0u64;
    let mut next_id = 0u32;
    for (v, &count) in initial.iter().enumerate() {
        let ids: VecDeque<u32> = (next_id..next_id + count).collect();
        next_id += count;
        if let Some(log) = &mut queues[v] {
            for &o in &ids {
                log.joins.push(QueueEvent { object: o, time: start, seq });
                seq += 1;
            }
        }
        if cfg.trajectories {
            for &o in &ids {
                let p = random_point(model, PartitionId(v as u32), &mut rng);
                trajectories.push(Trajectory { object: o as u64, points: vec![(start, p)] });
            }
        }
        occupants.push(ids);
    }

    let poisson: Vec<Option<Poisson<f64>>> =
        model.edges().iter().map(|e| (e.lambda > 0.0).then(|| Poisson::new(e.lambda).unwrap())).collect();
    let stamps = if cfg.horizon > start { clock.global_between(start, cfg.horizon) } else { Vec::new() };
    let mut populations = Vec::with_capacity(stamps.len());
    let mut flows = vec![Vec::new(); if cfg.record_flows { model.edges().len() } else { 0 }];
    let mut max_outflow_share: f64 = 0.0;
    let mut reporting: Vec<EdgeId> = Vec::new();
    let mut granted: Vec<(EdgeId, u32)> = Vec::new();
    let mut moving: Vec<(u32, PartitionId)> = Vec::new();

    for &t in &stamps {
        reporting.clear();
        for d in model.doors() {
            if d.schedule.reports_at(t) {
                reporting.extend_from_slice(model.door_edges(d.id));
            }
        }
        reporting.sort_unstable();
        reporting.shuffle(&mut rng);

        let occupancy: Vec<u32> = occupants.iter().map(|o| o.len() as u32).collect();
        let mut left = occupancy.clone();
        granted.clear();
        for &e in &reporting {
            let edge = model.edge(e);
            let drawn = poisson[e.index()].map_or(0, |p| p.sample(&mut rng) as u64);
            let n = drawn.min(left[edge.from.index()] as u64) as u32;
            left[edge.from.index()] -= n;
            granted.push((e, n));
            if cfg.record_flows {
                flows[e.index()].push(FlowSample { timestamp: t, flow: n as f64 });
            }
        }
        for (v, (&had, &rest)) in occupancy.iter().zip(&left).enumerate() {
            if had > 0 {
                max_outflow_share = max_outflow_share.max((had - rest) as f64 / had as f64);
            }
            debug_assert!(rest <= had, "partition {v} released more than it held");
        }

        moving.clear();
        for &(e, n) in &granted {
            let edge = model.edge(e);
            let from = edge.from.index();
            for _ in 0..n {
                let o = match model.partition(edge.from).kind {
                    PartitionKind::Queue => occupants[from].pop_front(),
                    PartitionKind::Random => {
                        let k = rng.random_range(0..occupants[from].len());
                        occupants[from].swap_remove_back(k)
                    }
                }
                .expect("grants never exceed occupancy");
                if let Some(log) = &mut queues[from] {
                    log.leaves.push(QueueEvent { object: o, time: t, seq });
                    seq += 1;
                }
                if cfg.trajectories {
                    let pos = model.door(edge.door).position;
                    trajectories[o as usize].points.push((t, IndoorPoint::new(edge.to, pos.x, pos.y)));
                }
                moving.push((o, edge.to));
            }
        }
        for &(o, to) in &moving {
            occupants[to.index()].push_back(o);
            if let Some(log) = &mut queues[to.index()] {
                log.joins.push(QueueEvent { object: o, time: t, seq });
                seq += 1;
            }
        }
        populations.push(occupants.iter().map(|o| o.len() as u32).collect());
    }

    SimState {
        start,
        horizon: cfg.horizon,
        objects: next_id as usize,
        initial,
        stamps,
        populations,
        flows,
        queues,
        trajectories,
        max_outflow_share,
    }
}

/// The path search run against simulated populations.
pub fn gold_search(
    model: &IndoorCrowdModel,
    sim: &SimState,
    instance: &QueryInstance,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    let mut truth = TruePopulations(sim);
    search_with(model, &mut truth, &instance.source, &instance.target, t_q, qt, cfg)
}
