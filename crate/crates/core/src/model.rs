//! Indoor crowd model: partitions, doors, the directed door edges between
//! partitions, and the JSON document they are loaded from.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flows::{FlowSample, ReportSchedule};
use crate::geometry::{Point, Shape};

/// Integer seconds from epoch 0.
pub type Timestamp = i64;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(PartitionId, "v");
id_type!(DoorId, "d");
id_type!(EdgeId, "e");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartitionKind {
    /// Occupants enter and leave first-in-first-out.
    #[serde(rename = "Q")]
    Queue,
    #[serde(rename = "R")]
    Random,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("dangling id: {0}")]
    DanglingId(String),
    #[error("duplicate entry: {0}")]
    Duplicate(String),
    #[error("partition {partition} has non-positive area {area}")]
    NonPositiveArea { partition: PartitionId, area: f64 },
    #[error("population {population} of partition {partition} exceeds capacity {capacity}")]
    OverCapacity { partition: PartitionId, population: f64, capacity: f64 },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("unknown door {0}")]
    UnknownDoor(DoorId),
    #[error("unknown partition {0}")]
    UnknownPartition(PartitionId),
    #[error("point ({x}, {y}) lies outside partition {partition}")]
    PointOutside { partition: PartitionId, x: f64, y: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

/// A location inside a partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndoorPoint {
    pub partition: PartitionId,
    pub x: f64,
    pub y: f64,
}

impl IndoorPoint {
    pub fn new(partition: PartitionId, x: f64, y: f64) -> Self {
        Self { partition, x, y }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Door {
    pub id: DoorId,
    pub position: Point,
    pub floor: i32,
    pub schedule: ReportSchedule,
    pub directed_pairs: Vec<(PartitionId, PartitionId)>,
}

/// Door-to-door distances inside one partition, indexed by the partition's
/// local door slots.
#[derive(Debug, Clone, PartialEq)]
pub struct D2dMatrix {
    doors: Vec<DoorId>,
    meters: Vec<f64>,
}

impl D2dMatrix {
    fn slot(&self, d: DoorId) -> Option<usize> {
        self.doors.binary_search(&d).ok()
    }

    /// Distance from `from` (entered) to `to` (left); infinite when the pair is
    /// not traversable inside this partition.
    pub fn get(&self, from: DoorId, to: DoorId) -> f64 {
        match (self.slot(from), self.slot(to)) {
            (Some(i), Some(j)) => self.meters[i * self.doors.len() + j],
            _ => f64::INFINITY,
        }
    }

    pub fn doors(&self) -> &[DoorId] {
        &self.doors
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub id: PartitionId,
    pub kind: PartitionKind,
    pub area: f64,
    pub max_density: f64,
    pub floor: i32,
    pub shape: Shape,
    pub enterable: Vec<DoorId>,
    pub leaveable: Vec<DoorId>,
    pub d2d: D2dMatrix,
    /// Explicit door-pair lengths, keyed by the ordered pair `(min, max)`.
    pub overrides: BTreeMap<(DoorId, DoorId), f64>,
}

impl Partition {
    pub fn capacity(&self) -> f64 {
        self.area * self.max_density
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.shape.contains(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: PartitionId,
    pub to: PartitionId,
    pub door: DoorId,
    /// Expected objects crossing per report interval.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub population: f64,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndoorCrowdModel {
    partitions: Vec<Partition>,
    doors: Vec<Door>,
    edges: Vec<Edge>,
    records: Vec<PopulationRecord>,
    observed: Vec<Vec<FlowSample>>,
    d2p_enter: Vec<Vec<PartitionId>>,
    d2p_leave: Vec<Vec<PartitionId>>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
    door_edges: Vec<Vec<EdgeId>>,
    edge_index: HashMap<(PartitionId, PartitionId, DoorId), EdgeId>,
}

/// One endpoint of a path segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waypoint {
    Point(Point),
    Door(DoorId),
}

impl IndoorCrowdModel {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn doors(&self) -> &[Door] {
        &self.doors
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn door_count(&self) -> usize {
        self.doors.len()
    }

    pub fn partition(&self, v: PartitionId) -> &Partition {
        &self.partitions[v.index()]
    }

    pub fn try_partition(&self, v: PartitionId) -> Result<&Partition, ModelError> {
        self.partitions.get(v.index()).ok_or(ModelError::UnknownPartition(v))
    }

    pub fn door(&self, d: DoorId) -> &Door {
        &self.doors[d.index()]
    }

    pub fn try_door(&self, d: DoorId) -> Result<&Door, ModelError> {
        self.doors.get(d.index()).ok_or(ModelError::UnknownDoor(d))
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.index()]
    }

    pub fn find_edge(&self, from: PartitionId, to: PartitionId, door: DoorId) -> Option<EdgeId> {
        self.edge_index.get(&(from, to, door)).copied()
    }

    pub fn record(&self, v: PartitionId) -> PopulationRecord {
        self.records[v.index()]
    }

    pub fn capacity(&self, v: PartitionId) -> f64 {
        self.partition(v).capacity()
    }

    /// Observed flow samples attached to an edge; empty when none were loaded.
    pub fn observed_flows(&self, e: EdgeId) -> &[FlowSample] {
        &self.observed[e.index()]
    }

    /// Partitions that can be entered through `d`.
    pub fn d2p_enter(&self, d: DoorId) -> &[PartitionId] {
        &self.d2p_enter[d.index()]
    }

    /// Partitions that can be left through `d`.
    pub fn d2p_leave(&self, d: DoorId) -> &[PartitionId] {
        &self.d2p_leave[d.index()]
    }

    pub fn p2d_enter(&self, v: PartitionId) -> &[DoorId] {
        &self.partition(v).enterable
    }

    pub fn p2d_leave(&self, v: PartitionId) -> &[DoorId] {
        &self.partition(v).leaveable
    }

    /// Every door of `v`, sorted.
    pub fn p2d(&self, v: PartitionId) -> &[DoorId] {
        self.partition(v).d2d.doors()
    }

    pub fn out_edges(&self, v: PartitionId) -> &[EdgeId] {
        &self.out_edges[v.index()]
    }

    pub fn in_edges(&self, v: PartitionId) -> &[EdgeId] {
        &self.in_edges[v.index()]
    }

    pub fn door_edges(&self, d: DoorId) -> &[EdgeId] {
        &self.door_edges[d.index()]
    }

    /// Partitions reachable by crossing `door` out of `from`.
    pub fn next_partitions(
        &self,
        from: PartitionId,
        door: DoorId,
    ) -> impl Iterator<Item = PartitionId> + '_ {
        self.door_edges[door.index()]
            .iter()
            .map(move |&e| &self.edges[e.index()])
            .filter(move |e| e.from == from)
            .map(|e| e.to)
    }

    /// Shortest distance from `d_i` to `d_j` through any partition entered via
    /// `d_i` and left via `d_j`.
    pub fn d2d(&self, d_i: DoorId, d_j: DoorId) -> Result<f64, ModelError> {
        self.try_door(d_i)?;
        self.try_door(d_j)?;
        Ok(self.d2p_enter(d_i)
            .iter()
            .map(|&v| self.partition(v).d2d.get(d_i, d_j))
            .fold(f64::INFINITY, f64::min))
    }

    /// Length of the segment between two waypoints crossing partition `via`.
    /// Infinite when the segment is not traversable.
    pub fn segment_length(&self, from: Waypoint, to: Waypoint, via: PartitionId) -> f64 {
        match (from, to) {
            (Waypoint::Door(a), Waypoint::Door(b)) => self.partition(via).d2d.get(a, b),
            (Waypoint::Point(p), Waypoint::Door(d)) | (Waypoint::Door(d), Waypoint::Point(p)) => {
                p.distance(&self.door(d).position)
            }
            (Waypoint::Point(p), Waypoint::Point(q)) => p.distance(&q),
        }
    }

    pub fn check_point(&self, p: &IndoorPoint) -> Result<(), ModelError> {
        let part = self.try_partition(p.partition)?;
        if p.x.is_finite() && p.y.is_finite() && part.contains(&p.position()) {
            Ok(())
        } else {
            Err(ModelError::PointOutside { partition: p.partition, x: p.x, y: p.y })
        }
    }

    /// The first partition whose footprint on `floor` contains `(x, y)`.
    pub fn locate(&self, floor: i32, p: &Point) -> Option<PartitionId> {
        self.partitions.iter().find(|v| v.floor == floor && v.contains(p)).map(|v| v.id)
    }

    /// Source-to-first-door Euclidean plus the d2d lengths plus
    /// last-door-to-target Euclidean.
    pub fn path_distance(&self, path: &Path) -> Result<f64, ModelError> {
        let inferred = Path::infer_partitions(self, &path.source, &path.doors, &path.target)?;
        let mut nodes = Vec::with_capacity(path.doors.len() + 2);
        nodes.push(Waypoint::Point(path.source.position()));
        nodes.extend(path.doors.iter().map(|&d| Waypoint::Door(d)));
        nodes.push(Waypoint::Point(path.target.position()));
        let mut total = 0.0;
        for (k, pair) in nodes.windows(2).enumerate() {
            let len = self.segment_length(pair[0], pair[1], inferred[k]);
            if !len.is_finite() {
                return Err(ModelError::InvalidPath(format!("segment {k} is not traversable")));
            }
            total += len;
        }
        Ok(total)
    }

    pub fn to_gtg(&self) -> crate::router::gtg::Gtg<'_> {
        crate::router::gtg::Gtg::from_model(self)
    }

    /// Replaces the flow label of every edge; missing entries become 0.
    pub fn with_lambdas(mut self, lambdas: &[(EdgeId, f64)]) -> Result<Self, ModelError> {
        for e in &mut self.edges {
            e.lambda = 0.0;
        }
        for &(e, l) in lambdas {
            if !(l.is_finite() && l >= 0.0) {
                return Err(ModelError::Invalid(format!("lambda {l} on edge {e}")));
            }
            self.edges
                .get_mut(e.index())
                .ok_or_else(|| ModelError::DanglingId(format!("edge {e}")))?
                .lambda = l;
        }
        Ok(self)
    }

    /// Replaces the recorded populations.
    pub fn with_records(mut self, records: Vec<PopulationRecord>) -> Result<Self, ModelError> {
        if records.len() != self.partitions.len() {
            return Err(ModelError::Invalid("one record per partition required".into()));
        }
        for (v, r) in records.iter().enumerate() {
            check_population(&self.partitions[v], r.population)?;
        }
        self.records = records;
        Ok(self)
    }

    /// Replaces the observed flow histories, one sample list per edge.
    pub fn with_observed(mut self, observed: Vec<Vec<FlowSample>>) -> Result<Self, ModelError> {
        if observed.len() != self.edges.len() {
            return Err(ModelError::Invalid("one history per edge required".into()));
        }
        self.observed = observed;
        Ok(self)
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            partitions: self
                .partitions
                .iter()
                .map(|v| {
                    let (bbox, polygon) = match &v.shape {
                        Shape::BBox(b) => (Some(*b), None),
                        Shape::Polygon(p) => (None, Some(p.iter().map(|q| [q.x, q.y]).collect())),
                    };
                    PartitionDoc {
                        id: v.id.0,
                        kind: v.kind,
                        area: v.area,
                        max_density: v.max_density,
                        floor: v.floor,
                        bbox,
                        polygon,
                        d2d_overrides: v.overrides.iter().map(|(&(a, b), &m)| (a.0, b.0, m)).collect(),
                    }
                })
                .collect(),
            doors: self
                .doors
                .iter()
                .map(|d| DoorDoc {
                    id: d.id.0,
                    x: d.position.x,
                    y: d.position.y,
                    floor: d.floor,
                    report_period_sec: d.schedule.period,
                    report_origin: d.schedule.origin,
                    directed_pairs: d.directed_pairs.iter().map(|(a, b)| (a.0, b.0)).collect(),
                })
                .collect(),
            initial_populations: self
                .records
                .iter()
                .enumerate()
                .map(|(v, r)| (v as u32, r.population, r.timestamp))
                .collect(),
            flow_lambdas: self
                .edges
                .iter()
                .filter(|e| e.lambda != 0.0)
                .map(|e| (e.from.0, e.to.0, e.door.0, e.lambda))
                .collect(),
            flow_history: self
                .edges
                .iter()
                .flat_map(|e| {
                    self.observed[e.id.index()]
                        .iter()
                        .map(move |s| (e.from.0, e.to.0, e.door.0, s.timestamp, s.flow))
                })
                .collect(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, ModelError> {
        let np = doc.partitions.len();
        let nd = doc.doors.len();
        let mut parts: Vec<Option<&PartitionDoc>> = vec![None; np];
        for p in &doc.partitions {
            let slot = parts
                .get_mut(p.id as usize)
                .ok_or_else(|| ModelError::Schema(format!("partition ids must be dense from 0, got {}", p.id)))?;
            if slot.replace(p).is_some() {
                return Err(ModelError::Duplicate(format!("partition v{}", p.id)));
            }
        }
        let mut door_docs: Vec<Option<&DoorDoc>> = vec![None; nd];
        for d in &doc.doors {
            let slot = door_docs
                .get_mut(d.id as usize)
                .ok_or_else(|| ModelError::Schema(format!("door ids must be dense from 0, got {}", d.id)))?;
            if slot.replace(d).is_some() {
                return Err(ModelError::Duplicate(format!("door d{}", d.id)));
            }
        }
        let parts: Vec<&PartitionDoc> = parts.into_iter().map(|p| p.unwrap()).collect();
        let door_docs: Vec<&DoorDoc> = door_docs.into_iter().map(|d| d.unwrap()).collect();

        let mut doors = Vec::with_capacity(nd);
        let mut enterable = vec![Vec::new(); np];
        let mut leaveable = vec![Vec::new(); np];
        let mut d2p_enter = vec![Vec::new(); nd];
        let mut d2p_leave = vec![Vec::new(); nd];
        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        for dd in &door_docs {
            let id = DoorId(dd.id);
            if !(dd.x.is_finite() && dd.y.is_finite()) {
                return Err(ModelError::Invalid(format!("door {id} position")));
            }
            let schedule = ReportSchedule::new(id, dd.report_period_sec, dd.report_origin)
                .map_err(|e| ModelError::Invalid(e.to_string()))?;
            if dd.directed_pairs.is_empty() {
                return Err(ModelError::Schema(format!("door {id} has no directed pairs")));
            }
            let mut pairs = Vec::with_capacity(dd.directed_pairs.len());
            for &(a, b) in &dd.directed_pairs {
                for x in [a, b] {
                    if x as usize >= np {
                        return Err(ModelError::DanglingId(format!("door {id} references partition v{x}")));
                    }
                }
                if a == b {
                    return Err(ModelError::Invalid(format!("door {id} pair leads from v{a} to itself")));
                }
                let (from, to) = (PartitionId(a), PartitionId(b));
                if edge_index.contains_key(&(from, to, id)) {
                    return Err(ModelError::Duplicate(format!("door {id} pair ({from}, {to})")));
                }
                let eid = EdgeId(edges.len() as u32);
                edge_index.insert((from, to, id), eid);
                edges.push(Edge { id: eid, from, to, door: id, lambda: 0.0 });
                push_unique(&mut leaveable[from.index()], id);
                push_unique(&mut enterable[to.index()], id);
                push_unique(&mut d2p_leave[id.index()], from);
                push_unique(&mut d2p_enter[id.index()], to);
                pairs.push((from, to));
            }
            doors.push(Door {
                id,
                position: Point::new(dd.x, dd.y),
                floor: dd.floor,
                schedule,
                directed_pairs: pairs,
            });
        }

        let mut partitions = Vec::with_capacity(np);
        for pd in &parts {
            let id = PartitionId(pd.id);
            if !(pd.area.is_finite() && pd.area > 0.0) {
                return Err(ModelError::NonPositiveArea { partition: id, area: pd.area });
            }
            if !(pd.max_density.is_finite() && pd.max_density > 0.0) {
                return Err(ModelError::Invalid(format!("partition {id} maxDensity {}", pd.max_density)));
            }
            let shape = match (&pd.bbox, &pd.polygon) {
                (Some(b), None) => Shape::BBox(*b),
                (None, Some(p)) => Shape::Polygon(p.iter().map(|q| Point::new(q[0], q[1])).collect()),
                _ => {
                    return Err(ModelError::Schema(format!("partition {id} needs exactly one of bbox or polygon")))
                }
            };
            if !shape.is_valid() {
                return Err(ModelError::Invalid(format!("partition {id} footprint")));
            }
            let mut overrides = BTreeMap::new();
            for &(a, b, m) in &pd.d2d_overrides {
                let (a, b) = (DoorId(a), DoorId(b));
                for x in [a, b] {
                    let known = enterable[id.index()].contains(&x) || leaveable[id.index()].contains(&x);
                    if !known {
                        return Err(ModelError::DanglingId(format!("d2d override of {id} references {x}")));
                    }
                }
                if !(m.is_finite() && m >= 0.0) {
                    return Err(ModelError::Invalid(format!("d2d override {a}-{b} of {id}: {m}")));
                }
                let key = (a.min(b), a.max(b));
                if overrides.insert(key, m).is_some() {
                    return Err(ModelError::Duplicate(format!("d2d override {a}-{b} of {id}")));
                }
            }
            let mut slots: Vec<DoorId> = enterable[id.index()]
                .iter()
                .chain(leaveable[id.index()].iter())
                .copied()
                .collect();
            slots.sort();
            slots.dedup();
            let n = slots.len();
            let mut meters = vec![f64::INFINITY; n * n];
            for &di in &enterable[id.index()] {
                for &dj in &leaveable[id.index()] {
                    let (i, j) = (slots.binary_search(&di).unwrap(), slots.binary_search(&dj).unwrap());
                    let m = if di == dj {
                        0.0
                    } else if let Some(&m) = overrides.get(&(di.min(dj), di.max(dj))) {
                        m
                    } else {
                        let (a, b) = (&doors[di.index()], &doors[dj.index()]);
                        if a.floor != b.floor {
                            return Err(ModelError::Invalid(format!(
                                "partition {id} joins {di} and {dj} on different floors without a d2d override"
                            )));
                        }
                        let m = a.position.distance(&b.position);
                        if m == 0.0 && pd.kind == PartitionKind::Queue {
                            return Err(ModelError::Invalid(format!(
                                "queue partition {id} has coincident doors {di} and {dj}"
                            )));
                        }
                        m
                    };
                    meters[i * n + j] = m;
                }
            }
            let mut enter = enterable[id.index()].clone();
            let mut leave = leaveable[id.index()].clone();
            enter.sort();
            leave.sort();
            partitions.push(Partition {
                id,
                kind: pd.kind,
                area: pd.area,
                max_density: pd.max_density,
                floor: pd.floor,
                shape,
                enterable: enter,
                leaveable: leave,
                d2d: D2dMatrix { doors: slots, meters },
                overrides,
            });
        }

        for &(from, to, door, lambda) in &doc.flow_lambdas {
            let key = (PartitionId(from), PartitionId(to), DoorId(door));
            let eid = *edge_index
                .get(&key)
                .ok_or_else(|| ModelError::DanglingId(format!("flow lambda for unknown edge ({from}, {to}, {door})")))?;
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(ModelError::Invalid(format!("lambda {lambda} on edge ({from}, {to}, {door})")));
            }
            let e: &mut Edge = &mut edges[eid.index()];
            if e.lambda != 0.0 {
                return Err(ModelError::Duplicate(format!("flow lambda for edge ({from}, {to}, {door})")));
            }
            e.lambda = lambda;
        }

        let mut records = vec![PopulationRecord { population: 0.0, timestamp: 0 }; np];
        let mut seen = vec![false; np];
        for &(v, population, timestamp) in &doc.initial_populations {
            let vi = v as usize;
            if vi >= np {
                return Err(ModelError::DanglingId(format!("initial population for partition v{v}")));
            }
            if std::mem::replace(&mut seen[vi], true) {
                return Err(ModelError::Duplicate(format!("initial population for partition v{v}")));
            }
            check_population(&partitions[vi], population)?;
            records[vi] = PopulationRecord { population, timestamp };
        }

        let mut observed = vec![Vec::<FlowSample>::new(); edges.len()];
        for &(from, to, door, timestamp, flow) in &doc.flow_history {
            let key = (PartitionId(from), PartitionId(to), DoorId(door));
            let eid = *edge_index
                .get(&key)
                .ok_or_else(|| ModelError::DanglingId(format!("flow history for unknown edge ({from}, {to}, {door})")))?;
            if !(flow.is_finite() && flow >= 0.0) {
                return Err(ModelError::Invalid(format!("observed flow {flow} on ({from}, {to}, {door})")));
            }
            if !doors[door as usize].schedule.reports_at(timestamp) {
                return Err(ModelError::Invalid(format!("flow sample at {timestamp} is off door d{door}'s schedule")));
            }
            let samples = &mut observed[eid.index()];
            if samples.last().is_some_and(|s| s.timestamp >= timestamp) {
                return Err(ModelError::Invalid(format!(
                    "flow history of ({from}, {to}, {door}) is not strictly increasing in time"
                )));
            }
            samples.push(FlowSample { timestamp, flow });
        }

        let mut out_edges = vec![Vec::new(); np];
        let mut in_edges = vec![Vec::new(); np];
        let mut door_edges = vec![Vec::new(); nd];
        for e in &edges {
            out_edges[e.from.index()].push(e.id);
            in_edges[e.to.index()].push(e.id);
            door_edges[e.door.index()].push(e.id);
        }
        for list in d2p_enter.iter_mut().chain(d2p_leave.iter_mut()) {
            list.sort();
        }

        Ok(Self {
            partitions,
            doors,
            edges,
            records,
            observed,
            d2p_enter,
            d2p_leave,
            out_edges,
            in_edges,
            door_edges,
            edge_index,
        })
    }
}

fn check_population(p: &Partition, population: f64) -> Result<(), ModelError> {
    if !(population.is_finite() && population >= 0.0) {
        return Err(ModelError::Invalid(format!("population {population} of {}", p.id)));
    }
    let capacity = p.capacity();
    if population > capacity * (1.0 + 1e-12) {
        return Err(ModelError::OverCapacity { partition: p.id, population, capacity });
    }
    Ok(())
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// Route from a source point through a door sequence to a target point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub source: IndoorPoint,
    pub doors: Vec<DoorId>,
    pub target: IndoorPoint,
    /// Partition crossed by each segment; one more entry than `doors`.
    pub partitions: Vec<PartitionId>,
}

impl Path {
    pub fn new(
        model: &IndoorCrowdModel,
        source: IndoorPoint,
        doors: Vec<DoorId>,
        target: IndoorPoint,
    ) -> Result<Self, ModelError> {
        let partitions = Self::infer_partitions(model, &source, &doors, &target)?;
        Ok(Self { source, doors, target, partitions })
    }

    /// Picks, for every crossing, the first partition that keeps the rest of
    /// the door sequence traversable.
    pub fn infer_partitions(
        model: &IndoorCrowdModel,
        source: &IndoorPoint,
        doors: &[DoorId],
        target: &IndoorPoint,
    ) -> Result<Vec<PartitionId>, ModelError> {
        model.try_partition(source.partition)?;
        model.try_partition(target.partition)?;
        for &d in doors {
            model.try_door(d)?;
        }
        // feasible[k]: partitions after crossing doors[k] from which the suffix works
        let n = doors.len();
        let mut feasible: Vec<Vec<PartitionId>> = vec![Vec::new(); n];
        for k in (0..n).rev() {
            let mut ok: Vec<PartitionId> = model.d2p_enter(doors[k]).to_vec();
            ok.retain(|&w| {
                if k + 1 == n {
                    w == target.partition
                } else {
                    model.next_partitions(w, doors[k + 1]).any(|x| feasible[k + 1].contains(&x))
                }
            });
            feasible[k] = ok;
        }
        let mut out = vec![source.partition];
        let mut cur = source.partition;
        for k in 0..n {
            let next = model.next_partitions(cur, doors[k]).find(|w| feasible[k].contains(w));
            match next {
                Some(w) => {
                    out.push(w);
                    cur = w;
                }
                None => {
                    return Err(ModelError::InvalidPath(format!(
                        "door {} cannot be crossed from {cur} towards the target",
                        doors[k]
                    )))
                }
            }
        }
        if n == 0 && source.partition != target.partition {
            return Err(ModelError::InvalidPath("door-free path between different partitions".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PartitionDoc {
    pub id: u32,
    pub kind: PartitionKind,
    pub area: f64,
    pub max_density: f64,
    #[serde(default)]
    pub floor: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    /// `[doorA, doorB, meters]`, applied in both directions.
    #[serde(default, rename = "d2d", skip_serializing_if = "Vec::is_empty")]
    pub d2d_overrides: Vec<(u32, u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DoorDoc {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub floor: i32,
    pub report_period_sec: i64,
    #[serde(default)]
    pub report_origin: Timestamp,
    pub directed_pairs: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelDocument {
    pub partitions: Vec<PartitionDoc>,
    pub doors: Vec<DoorDoc>,
    #[serde(default)]
    pub initial_populations: Vec<(u32, f64, Timestamp)>,
    #[serde(default)]
    pub flow_lambdas: Vec<(u32, u32, u32, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flow_history: Vec<(u32, u32, u32, Timestamp, f64)>,
}
