//! Replanning baseline: recompute the best route at every reached node and
//! walk only its first segment.

use std::time::Instant;

use crate::clock::UpdateClock;
use crate::estimator::{PopulationSource, Session};
use crate::model::{IndoorCrowdModel, IndoorPoint, Timestamp};

use super::{
    check_query, finish, run_search, CostVector, PathNode, QueryResult, QueryType, Route, RouterError, RoutingConfig,
    SearchOrigin, Topology,
};

pub fn search_adaptive(
    model: &IndoorCrowdModel,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    let mut session = Session::with_nt(model, cfg.estimator, cfg.nt);
    search_adaptive_with(model, &mut session, p_s, p_t, t_q, qt, cfg)
}

/// Totals accumulate the cost of each walked segment as priced when it was
/// chosen. Aborts after `10 * |doors|` steps.
pub fn search_adaptive_with(
    model: &IndoorCrowdModel,
    source: &mut dyn PopulationSource,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    let began = Instant::now();
    check_query(model, p_s, p_t, t_q, cfg)?;
    let mut clock = UpdateClock::new(model);
    let guard = 10 * model.door_count().max(1);
    let mut origin = SearchOrigin::Point(*p_s);
    let mut walked = Route {
        hops: Vec::new(),
        totals: CostVector::ZERO,
        expanded_nodes: 0,
        expanded_edges: 0,
        derivation_calls: 0,
    };
    for _ in 0..guard {
        let start = t_q as f64 + walked.totals.time;
        let plan = run_search(model, Topology::Indoor, source, &mut clock, origin, p_t, start, qt, cfg, None)?;
        walked.expanded_nodes += plan.expanded_nodes;
        walked.expanded_edges += plan.expanded_edges;
        walked.derivation_calls += plan.derivation_calls;
        let (node, via, seg) = plan.hops[0];
        walked.totals = walked.totals.add(&seg);
        walked.hops.push((node, via, seg));
        match node {
            PathNode::Target => {
                let memory = source.memory_entries();
                return Ok(finish(*p_s, *p_t, walked, memory, began));
            }
            PathNode::Door(door) => origin = SearchOrigin::Door { door, from: via },
            PathNode::Source => unreachable!("plans never return to the source"),
        }
    }
    Err(RouterError::Livelock { steps: guard })
}
