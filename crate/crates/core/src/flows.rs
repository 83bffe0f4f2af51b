//! Door report schedules, the Poisson door-flow function, rate fitting and
//! trajectory-to-flow ingestion.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DoorId, EdgeId, IndoorCrowdModel, IndoorPoint, PartitionId, Timestamp, Waypoint};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("report period must be positive, got {0}")]
    BadPeriod(i64),
    #[error("empty window [{0}, {1}]")]
    BadWindow(Timestamp, Timestamp),
    #[error("unknown partition {0}")]
    UnknownPartition(PartitionId),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad record: {0}")]
    BadRecord(String),
}

/// Counter reports at `origin + n * period` for n >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportSchedule {
    pub door: DoorId,
    pub period: i64,
    pub origin: Timestamp,
}

impl ReportSchedule {
    pub fn new(door: DoorId, period: i64, origin: Timestamp) -> Result<Self, FlowError> {
        if period <= 0 {
            return Err(FlowError::BadPeriod(period));
        }
        Ok(Self { door, period, origin })
    }

    #[inline]
    pub fn reports_at(&self, t: Timestamp) -> bool {
        t >= self.origin && (t - self.origin) % self.period == 0
    }

    pub fn first_at_or_after(&self, t: Timestamp) -> Timestamp {
        if t <= self.origin {
            self.origin
        } else {
            self.origin + (t - self.origin + self.period - 1) / self.period * self.period
        }
    }

    pub fn last_at_or_before(&self, t: Timestamp) -> Option<Timestamp> {
        (t >= self.origin).then(|| self.origin + (t - self.origin) / self.period * self.period)
    }

    /// Reports in the closed window `[a, b]`.
    pub fn within(&self, a: Timestamp, b: Timestamp) -> impl Iterator<Item = Timestamp> {
        let period = self.period;
        std::iter::successors(Some(self.first_at_or_after(a)), move |t| Some(t + period))
            .take_while(move |&t| t <= b)
    }

    /// Number of reports in the half-open window `(a, b]`.
    pub fn count_between(&self, a: Timestamp, b: Timestamp) -> i64 {
        if b <= a {
            return 0;
        }
        let upto = |t: Timestamp| {
            if t < self.origin {
                0
            } else {
                (t - self.origin) / self.period + 1
            }
        };
        upto(b) - upto(a)
    }
}

/// Sorted union of the report timestamps of `v`'s doors inside `[a, b]`.
pub fn update_timestamps(
    model: &IndoorCrowdModel,
    v: PartitionId,
    a: Timestamp,
    b: Timestamp,
) -> Result<Vec<Timestamp>, FlowError> {
    if a > b {
        return Err(FlowError::BadWindow(a, b));
    }
    model.try_partition(v).map_err(|_| FlowError::UnknownPartition(v))?;
    Ok(merge_schedules(model.p2d(v).iter().map(|&d| model.door(d).schedule), a, b))
}

/// Sorted union of every door's report timestamps inside `[a, b]`.
pub fn model_update_timestamps(model: &IndoorCrowdModel, a: Timestamp, b: Timestamp) -> Vec<Timestamp> {
    merge_schedules(model.doors().iter().map(|d| d.schedule), a, b)
}

pub(crate) fn merge_schedules(
    schedules: impl Iterator<Item = ReportSchedule>,
    a: Timestamp,
    b: Timestamp,
) -> Vec<Timestamp> {
    let schedules: Vec<ReportSchedule> = schedules.collect();
    if schedules.len() > 16 {
        let mut out: Vec<Timestamp> = schedules.iter().flat_map(|s| s.within(a, b)).collect();
        out.sort_unstable();
        out.dedup();
        return out;
    }
    let mut next: Vec<Timestamp> = schedules.iter().map(|s| s.first_at_or_after(a)).collect();
    let mut out = Vec::new();
    while let Some(&t) = next.iter().min() {
        if t > b {
            break;
        }
        out.push(t);
        for (n, s) in next.iter_mut().zip(&schedules) {
            if *n == t {
                *n += s.period;
            }
        }
    }
    out
}

/// The edge's flow label at `t`: λ when the door reports at `t`, else 0.
pub fn expected_flow(model: &IndoorCrowdModel, edge: EdgeId, t: Timestamp) -> f64 {
    let e = model.edge(edge);
    if model.door(e.door).schedule.reports_at(t) {
        e.lambda
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub timestamp: Timestamp,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowHistory {
    pub edge: EdgeId,
    pub samples: Vec<FlowSample>,
}

impl FlowHistory {
    pub fn new(edge: EdgeId) -> Self {
        Self { edge, samples: Vec::new() }
    }

    pub fn push(&mut self, timestamp: Timestamp, flow: f64) -> Result<(), FlowError> {
        if self.samples.last().is_some_and(|s| s.timestamp >= timestamp) {
            return Err(FlowError::BadRecord(format!(
                "sample at {timestamp} does not advance history of {}",
                self.edge
            )));
        }
        if !(flow.is_finite() && flow >= 0.0) {
            return Err(FlowError::BadRecord(format!("flow {flow}")));
        }
        self.samples.push(FlowSample { timestamp, flow });
        Ok(())
    }
}

/// Poisson maximum-likelihood rate: the mean of the most recent `window`
/// samples.
pub fn fit_lambda(samples: &[FlowSample], window: usize) -> Result<f64, FlowError> {
    if samples.is_empty() || window == 0 {
        return Err(FlowError::InsufficientData("no samples in window".into()));
    }
    let recent = &samples[samples.len().saturating_sub(window)..];
    Ok(recent.iter().map(|s| s.flow).sum::<f64>() / recent.len() as f64)
}

pub const DEFAULT_FIT_WINDOW: usize = 50;
pub const DEFAULT_SAMPLE_PERIOD: i64 = 10;
pub const MAX_SUBPATH_DOORS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub object: u64,
    pub points: Vec<(Timestamp, IndoorPoint)>,
}

/// Inverse-length weights normalized to sum to one.
pub fn subpath_probabilities(lengths: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = lengths.iter().map(|l| 1.0 / l.max(f64::MIN_POSITIVE)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub histories: Vec<FlowHistory>,
    pub skipped_points: usize,
    pub certain_hops: usize,
    pub uncertain_hops: usize,
    pub unresolved_hops: usize,
}

/// Credits door crossings between consecutive trajectory points to edges and
/// aggregates them into samples every `sample_period` seconds. A crossing
/// counts towards the sample ending at or after the later point's time.
pub fn ingest_trajectories(
    model: &IndoorCrowdModel,
    trajectories: &[Trajectory],
    sample_period: i64,
) -> Result<IngestReport, FlowError> {
    if sample_period <= 0 {
        return Err(FlowError::BadPeriod(sample_period));
    }
    let mut report = IngestReport::default();
    let mut credits: BTreeMap<(EdgeId, Timestamp), f64> = BTreeMap::new();
    let (mut first, mut last) = (Timestamp::MAX, Timestamp::MIN);
    let bucket = |t: Timestamp| t.div_euclid(sample_period) * sample_period
        + if t.rem_euclid(sample_period) == 0 { 0 } else { sample_period };

    for tr in trajectories {
        let mut prev: Option<(Timestamp, IndoorPoint)> = None;
        for &(t, p) in &tr.points {
            if model.check_point(&p).is_err() {
                report.skipped_points += 1;
                continue;
            }
            if let Some((t0, _)) = prev {
                if t <= t0 {
                    return Err(FlowError::BadRecord(format!(
                        "trajectory {} is not strictly increasing at {t}",
                        tr.object
                    )));
                }
            }
            let b = bucket(t);
            first = first.min(b);
            last = last.max(b);
            if let Some((_, p0)) = prev {
                if p0.partition != p.partition {
                    let direct: Vec<EdgeId> = model
                        .out_edges(p0.partition)
                        .iter()
                        .copied()
                        .filter(|&e| model.edge(e).to == p.partition)
                        .collect();
                    if direct.len() == 1 {
                        report.certain_hops += 1;
                        *credits.entry((direct[0], b)).or_default() += 1.0;
                    } else {
                        let subpaths = connecting_subpaths(model, &p0, &p, MAX_SUBPATH_DOORS);
                        if subpaths.is_empty() {
                            report.unresolved_hops += 1;
                        } else {
                            report.uncertain_hops += 1;
                            let lengths: Vec<f64> = subpaths.iter().map(|s| s.1).collect();
                            for (probability, (edges, _)) in
                                subpath_probabilities(&lengths).into_iter().zip(&subpaths)
                            {
                                for &e in edges {
                                    *credits.entry((e, b)).or_default() += probability;
                                }
                            }
                        }
                    }
                }
            }
            prev = Some((t, p));
        }
    }

    if first <= last {
        for e in model.edges() {
            let mut h = FlowHistory::new(e.id);
            let mut t = first;
            while t <= last {
                h.samples.push(FlowSample { timestamp: t, flow: credits.get(&(e.id, t)).copied().unwrap_or(0.0) });
                t += sample_period;
            }
            report.histories.push(h);
        }
    }
    Ok(report)
}

/// Loop-free edge sequences from `a` to `b` of at most `max_doors` crossings,
/// with their lengths, keeping those no longer than twice the shortest.
pub fn connecting_subpaths(
    model: &IndoorCrowdModel,
    a: &IndoorPoint,
    b: &IndoorPoint,
    max_doors: usize,
) -> Vec<(Vec<EdgeId>, f64)> {
    let mut found = Vec::new();
    let mut edges = Vec::new();
    let mut seen = vec![false; model.partition_count()];
    seen[a.partition.index()] = true;
    subpath_dfs(model, a.partition, Waypoint::Point(a.position()), 0.0, b, max_doors, &mut seen, &mut edges, &mut found);
    let Some(shortest) = found.iter().map(|f: &(Vec<EdgeId>, f64)| f.1).reduce(f64::min) else {
        return found;
    };
    found.retain(|f| f.1 <= 2.0 * shortest);
    found
}

#[allow(clippy::too_many_arguments)]
fn subpath_dfs(
    model: &IndoorCrowdModel,
    at: PartitionId,
    from: Waypoint,
    length: f64,
    target: &IndoorPoint,
    budget: usize,
    seen: &mut [bool],
    edges: &mut Vec<EdgeId>,
    found: &mut Vec<(Vec<EdgeId>, f64)>,
) {
    if at == target.partition && !edges.is_empty() {
        let total = length + model.segment_length(from, Waypoint::Point(target.position()), at);
        found.push((edges.clone(), total));
        return;
    }
    if budget == 0 {
        return;
    }
    for &e in model.out_edges(at) {
        let edge = model.edge(e);
        if seen[edge.to.index()] {
            continue;
        }
        let seg = model.segment_length(from, Waypoint::Door(edge.door), at);
        if !seg.is_finite() {
            continue;
        }
        seen[edge.to.index()] = true;
        edges.push(e);
        subpath_dfs(model, edge.to, Waypoint::Door(edge.door), length + seg, target, budget - 1, seen, edges, found);
        edges.pop();
        seen[edge.to.index()] = false;
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TrajectoryRow {
    object_id: u64,
    timestamp: Timestamp,
    partition_id: u32,
    x: f64,
    y: f64,
}

/// Reads `objectId,timestamp,partitionId,x,y` rows, grouping by object in
/// first-appearance order.
pub fn read_trajectories_csv<R: io::Read>(reader: R) -> Result<Vec<Trajectory>, FlowError> {
    let mut out: Vec<Trajectory> = Vec::new();
    let mut slot: BTreeMap<u64, usize> = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: TrajectoryRow = row?;
        let i = *slot.entry(row.object_id).or_insert_with(|| {
            out.push(Trajectory { object: row.object_id, points: Vec::new() });
            out.len() - 1
        });
        out[i].points.push((row.timestamp, IndoorPoint::new(PartitionId(row.partition_id), row.x, row.y)));
    }
    Ok(out)
}

pub fn write_trajectories_csv<W: io::Write>(writer: W, trajectories: &[Trajectory]) -> Result<(), FlowError> {
    let mut w = csv::Writer::from_writer(writer);
    for tr in trajectories {
        for &(timestamp, p) in &tr.points {
            w.serialize(TrajectoryRow {
                object_id: tr.object,
                timestamp,
                partition_id: p.partition.0,
                x: p.x,
                y: p.y,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct FlowRow {
    from_partition: u32,
    to_partition: u32,
    door: u32,
    timestamp: Timestamp,
    flow: f64,
}

pub fn read_flow_history_csv<R: io::Read>(
    model: &IndoorCrowdModel,
    reader: R,
) -> Result<Vec<FlowHistory>, FlowError> {
    let mut histories: Vec<FlowHistory> = model.edges().iter().map(|e| FlowHistory::new(e.id)).collect();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: FlowRow = row?;
        let e = model
            .find_edge(PartitionId(row.from_partition), PartitionId(row.to_partition), DoorId(row.door))
            .ok_or_else(|| {
                FlowError::BadRecord(format!(
                    "no edge ({}, {}, {})",
                    row.from_partition, row.to_partition, row.door
                ))
            })?;
        histories[e.index()].push(row.timestamp, row.flow)?;
    }
    histories.retain(|h| !h.samples.is_empty());
    Ok(histories)
}

pub fn write_flow_history_csv<W: io::Write>(
    model: &IndoorCrowdModel,
    writer: W,
    histories: &[FlowHistory],
) -> Result<(), FlowError> {
    let mut w = csv::Writer::from_writer(writer);
    for h in histories {
        let e = model.edge(h.edge);
        for s in &h.samples {
            w.serialize(FlowRow {
                from_partition: e.from.0,
                to_partition: e.to.0,
                door: e.door.0,
                timestamp: s.timestamp,
                flow: s.flow,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(flows: &[f64]) -> Vec<FlowSample> {
        flows.iter().enumerate().map(|(i, &flow)| FlowSample { timestamp: 10 * i as i64, flow }).collect()
    }

    #[test]
    fn schedule_arithmetic() {
        let s = ReportSchedule::new(DoorId(0), 10, 5).unwrap();
        assert!(s.reports_at(25));
        assert!(!s.reports_at(20));
        assert!(!s.reports_at(-5));
        assert_eq!(s.first_at_or_after(-100), 5);
        assert_eq!(s.first_at_or_after(6), 15);
        assert_eq!(s.last_at_or_before(14), Some(5));
        assert_eq!(s.last_at_or_before(4), None);
        assert_eq!(s.within(0, 30).collect::<Vec<_>>(), vec![5, 15, 25]);
        assert_eq!(s.count_between(5, 25), 2);
        assert_eq!(s.count_between(-10, 5), 1);
        assert!(ReportSchedule::new(DoorId(0), 0, 0).is_err());
    }

    #[test]
    fn merged_timestamps() {
        let a = ReportSchedule::new(DoorId(0), 10, 0).unwrap();
        let b = ReportSchedule::new(DoorId(1), 15, 0).unwrap();
        assert_eq!(merge_schedules([a].into_iter(), 0, 30), vec![0, 10, 20, 30]);
        assert_eq!(merge_schedules([a, b].into_iter(), 0, 30), vec![0, 10, 15, 20, 30]);
        assert!(merge_schedules([a].into_iter(), 7, 7).is_empty());
    }

    #[test]
    fn lambda_fits() {
        assert_eq!(fit_lambda(&samples(&[2.0, 2.0, 2.0]), 50).unwrap(), 2.0);
        assert_eq!(fit_lambda(&samples(&[0.0, 0.0, 0.0]), 50).unwrap(), 0.0);
        assert_eq!(fit_lambda(&samples(&[1.0, 2.0, 3.0, 6.0]), 4).unwrap(), 3.0);
        assert_eq!(fit_lambda(&samples(&[9.0, 1.0, 2.0, 3.0, 6.0]), 4).unwrap(), 3.0);
        assert!(matches!(fit_lambda(&[], 4), Err(FlowError::InsufficientData(_))));
    }

    #[test]
    fn inverse_length_weights() {
        let p = subpath_probabilities(&[20.0, 25.0]);
        assert!((p[0] - 0.5556).abs() < 1e-4 && (p[1] - 0.4444).abs() < 1e-4);
        assert!((1.0 + p[1] - 1.444).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(lengths in prop::collection::vec(0.1f64..500.0, 1..12)) {
            let total: f64 = subpath_probabilities(&lengths).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn fit_ignores_time_and_order(
            flows in prop::collection::vec(0.0f64..20.0, 1..30),
            shift in -1000i64..1000,
            seed in any::<u64>(),
        ) {
            let base = fit_lambda(&samples(&flows), flows.len()).unwrap();
            let shifted: Vec<FlowSample> = samples(&flows)
                .into_iter()
                .map(|s| FlowSample { timestamp: s.timestamp + shift, ..s })
                .collect();
            prop_assert_eq!(fit_lambda(&shifted, flows.len()).unwrap(), base);
            let mut permuted = flows.clone();
            let n = permuted.len();
            permuted.rotate_left((seed % n as u64) as usize);
            let again = fit_lambda(&samples(&permuted), flows.len()).unwrap();
            prop_assert!((again - base).abs() < 1e-9);
        }

        #[test]
        fn schedule_count_matches_enumeration(
            period in 1i64..40, origin in -50i64..50, a in -100i64..200, len in 0i64..300,
        ) {
            let s = ReportSchedule::new(DoorId(0), period, origin).unwrap();
            let listed = s.within(a + 1, a + len).count() as i64;
            prop_assert_eq!(s.count_between(a, a + len), listed);
        }
    }
}
