//! Door-graph baseline: doors are vertices and every traversable ordered door
//! pair through a partition is an edge.

use std::time::Instant;

use crate::clock::UpdateClock;
use crate::estimator::{PopulationSource, Session};
use crate::model::{DoorId, IndoorCrowdModel, IndoorPoint, PartitionId, Timestamp};

use super::{check_query, finish, run_search, QueryResult, QueryType, RouterError, RoutingConfig, SearchOrigin, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtgEdge {
    pub from: DoorId,
    pub to: DoorId,
    pub partition: PartitionId,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct Gtg<'m> {
    model: &'m IndoorCrowdModel,
    edges: Vec<GtgEdge>,
    adjacency: Vec<Vec<usize>>,
}

impl<'m> Gtg<'m> {
    pub fn from_model(model: &'m IndoorCrowdModel) -> Self {
        let mut edges = Vec::new();
        let mut adjacency = vec![Vec::new(); model.door_count()];
        for part in model.partitions() {
            for &from in &part.enterable {
                for &to in &part.leaveable {
                    if from == to {
                        continue;
                    }
                    adjacency[from.index()].push(edges.len());
                    edges.push(GtgEdge { from, to, partition: part.id, length: part.d2d.get(from, to) });
                }
            }
        }
        Self { model, edges, adjacency }
    }

    pub fn model(&self) -> &'m IndoorCrowdModel {
        self.model
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self) -> &[GtgEdge] {
        &self.edges
    }

    pub fn out_edges(&self, d: DoorId) -> impl Iterator<Item = &GtgEdge> + '_ {
        self.adjacency[d.index()].iter().map(move |&i| &self.edges[i])
    }
}

/// Label-setting search over door vertices with the same segment costs as
/// [`super::search`]; a door's label does not remember the partition it was
/// reached through, so every edge leaving the door is scanned.
pub fn search_gtg(
    gtg: &Gtg<'_>,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    let mut session = Session::with_nt(gtg.model, cfg.estimator, cfg.nt);
    search_gtg_with(gtg, &mut session, p_s, p_t, t_q, qt, cfg)
}

pub fn search_gtg_with(
    gtg: &Gtg<'_>,
    source: &mut dyn PopulationSource,
    p_s: &IndoorPoint,
    p_t: &IndoorPoint,
    t_q: Timestamp,
    qt: QueryType,
    cfg: &RoutingConfig,
) -> Result<QueryResult, RouterError> {
    let began = Instant::now();
    let model = gtg.model;
    check_query(model, p_s, p_t, t_q, cfg)?;
    let mut clock = UpdateClock::new(model);
    let route = run_search(
        model,
        Topology::Gtg(gtg),
        source,
        &mut clock,
        SearchOrigin::Point(*p_s),
        p_t,
        t_q as f64,
        qt,
        cfg,
        None,
    )?;
    let memory = source.memory_entries();
    Ok(finish(*p_s, *p_t, route, memory, began))
}
