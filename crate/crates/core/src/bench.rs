//! Benchmark runner: every algorithm over a batch of query instances, scored
//! against answers computed on simulated populations.

use std::io;
use std::time::Duration;

use serde::Serialize;

use crate::estimator::{EstimatorError, EstimatorKind};
use crate::model::{IndoorCrowdModel, Timestamp};
use crate::parallel::{map_ordered, Execution};
use crate::router::adaptive::search_adaptive;
use crate::router::gtg::{search_gtg, Gtg};
use crate::router::{search, QueryResult, QueryType, RouterError, RoutingConfig};
use crate::simgen::{evaluate, gold_search, simulate, InstanceOutcome, QueryInstance, SimConfig, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    ExactLocal,
    ExactGlobal,
    Pp,
    Nt,
    Gtg,
    Adaptive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] =
        [Self::ExactLocal, Self::ExactGlobal, Self::Pp, Self::Nt, Self::Gtg, Self::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            Self::ExactLocal => "exact-local",
            Self::ExactGlobal => "exact-global",
            Self::Pp => "pp",
            Self::Nt => "nt",
            Self::Gtg => "gtg",
            Self::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn estimator(self) -> EstimatorKind {
        match self {
            Self::ExactGlobal => EstimatorKind::Global,
            Self::Pp => EstimatorKind::PartialPartitions,
            Self::Nt => EstimatorKind::NecessaryTimestamps,
            _ => EstimatorKind::Local,
        }
    }
}

/// Runs one query with the algorithm's search and estimator.
pub fn run_algorithm(
    model: &IndoorCrowdModel,
    gtg: &Gtg<'_>,
    algorithm: Algorithm,
    instance: &QueryInstance,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    let cfg = cfg.with_estimator(algorithm.estimator());
    let (s, t) = (&instance.source, &instance.target);
    match algorithm {
        Algorithm::Gtg => search_gtg(gtg, s, t, t_q, qt, &cfg),
        Algorithm::Adaptive => search_adaptive(model, s, t, t_q, qt, &cfg),
        _ => search(model, s, t, t_q, qt, &cfg),
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub algorithms: Vec<Algorithm>,
    pub repeats: usize,
    pub query_type: QueryType,
    pub routing: RoutingConfig,
    pub execution: Execution,
    pub sim_seed: u64,
    /// Label of the varied parameter and its value, copied into every row.
    pub parameter: String,
    pub parameter_value: String,
}

/// One row per algorithm and parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchRow {
    pub algorithm: String,
    pub query_type: String,
    pub parameter: String,
    pub parameter_value: String,
    pub instances: usize,
    pub repeats: usize,
    pub mean_wall_time_ms: f64,
    pub mean_memory_entries: f64,
    pub hit_rate: f64,
    pub mean_gamma: f64,
    pub median_gamma: f64,
    pub infinite_gamma: usize,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub rows: Vec<BenchRow>,
    /// Per-instance outcomes, in the order of `rows`.
    pub outcomes: Vec<Vec<InstanceOutcome>>,
}

/// Simulates until every gold search fits inside the horizon.
fn gold_answers(
    model: &IndoorCrowdModel,
    instances: &[QueryInstance],
    t_q: Timestamp,
    cfg: &BenchConfig,
) -> Result<Vec<QueryResult>, RouterError> {
    let longest = instances.iter().map(|i| i.distance).fold(0.0, f64::max);
    let e = std::f64::consts::E;
    let mut span = (2.2 * (1.0 + e) * longest / cfg.routing.speed).ceil() as Timestamp + 100;
    let routing = cfg.routing.with_estimator(EstimatorKind::Local);
    loop {
        let sim: SimState = simulate(model, &SimConfig::new(t_q + span, cfg.sim_seed));
        let golds: Result<Vec<_>, _> = map_ordered(instances, cfg.execution, |inst| {
            gold_search(model, &sim, inst, t_q, cfg.query_type, &routing)
        })
        .into_iter()
        .collect();
        match golds {
            Err(RouterError::Estimator(EstimatorError::HorizonExceeded { .. })) => span *= 2,
            other => return other,
        }
    }
}

pub fn run_bench(
    model: &IndoorCrowdModel,
    instances: &[QueryInstance],
    t_q: Timestamp,
    cfg: &BenchConfig,
) -> Result<BenchOutput, RouterError> {
    let repeats = cfg.repeats.max(1);
    let golds = gold_answers(model, instances, t_q, cfg)?;
    let gtg = model.to_gtg();
    // Algorithms are interleaved within each instance and repeat so that
    // drift in machine load affects them alike.
    let per_instance: Vec<Result<Vec<QueryResult>, RouterError>> = map_ordered(instances, cfg.execution, |inst| {
        let mut totals = vec![Duration::ZERO; cfg.algorithms.len()];
        let mut last: Vec<Option<QueryResult>> = vec![None; cfg.algorithms.len()];
        for _ in 0..repeats {
            for (k, &alg) in cfg.algorithms.iter().enumerate() {
                let r = run_algorithm(model, &gtg, alg, inst, t_q, cfg.query_type, &cfg.routing)?;
                totals[k] += r.wall_time;
                last[k] = Some(r);
            }
        }
        Ok(last
            .into_iter()
            .zip(totals)
            .map(|(r, total)| {
                let mut r = r.expect("at least one repeat");
                r.wall_time = total / repeats as u32;
                r
            })
            .collect())
    });
    let mut by_algorithm: Vec<Vec<QueryResult>> = vec![Vec::with_capacity(instances.len()); cfg.algorithms.len()];
    for runs in per_instance {
        for (k, r) in runs?.into_iter().enumerate() {
            by_algorithm[k].push(r);
        }
    }
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (&alg, results) in cfg.algorithms.iter().zip(by_algorithm) {
        let (per_instance, metrics) = evaluate(&results, &golds, cfg.query_type);
        let n = results.len().max(1) as f64;
        rows.push(BenchRow {
            algorithm: alg.name().to_string(),
            query_type: cfg.query_type.name().to_string(),
            parameter: cfg.parameter.clone(),
            parameter_value: cfg.parameter_value.clone(),
            instances: results.len(),
            repeats,
            mean_wall_time_ms: per_instance.iter().map(|o| o.wall_time_ms).sum::<f64>() / n,
            mean_memory_entries: results.iter().map(|r| r.memory_entries as f64).sum::<f64>() / n,
            hit_rate: metrics.hit_rate,
            mean_gamma: metrics.mean_gamma,
            median_gamma: metrics.median_gamma,
            infinite_gamma: metrics.infinite_gamma,
        });
        outcomes.push(per_instance);
    }
    Ok(BenchOutput { rows, outcomes })
}

pub fn write_rows_csv<W: io::Write>(writer: W, rows: &[BenchRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outcomes_csv<W: io::Write>(writer: W, outcomes: &[InstanceOutcome]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for o in outcomes {
        w.serialize(o)?;
    }
    w.flush()?;
    Ok(())
}
