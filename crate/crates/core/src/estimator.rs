//! Population derivation over update timestamps.
//!
//! A [`Session`] owns every derived value for one query: the model stays
//! immutable. Populations are piecewise constant between a partition's update
//! timestamps. A recorded population `(P, t)` holds through `t` itself; flows
//! are applied at update timestamps strictly after the record.

use std::collections::HashMap;

use thiserror::Error;

use crate::clock::UpdateClock;
use crate::model::{EdgeId, IndoorCrowdModel, PartitionId, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("corrupt input: {0}")]
    Corrupt(String),
    #[error("outflow {out} exceeds population {population}: missing rectification")]
    MissingRectification { population: f64, out: f64 },
    #[error("population of {partition} at {at} has not been derived")]
    NotDerived { partition: PartitionId, at: Timestamp },
    #[error("requested time {requested} is beyond the simulated horizon {horizon}")]
    HorizonExceeded { requested: Timestamp, horizon: Timestamp },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Global,
    Local,
    PartialPartitions,
    NecessaryTimestamps,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Global => "global",
            EstimatorKind::Local => "local",
            EstimatorKind::PartialPartitions => "pp",
            EstimatorKind::NecessaryTimestamps => "nt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global" => Some(Self::Global),
            "local" => Some(Self::Local),
            "pp" => Some(Self::PartialPartitions),
            "nt" => Some(Self::NecessaryTimestamps),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtConfig {
    /// Threshold on the standard deviation of historical flow differences.
    pub eta: f64,
    /// Number of most recent update timestamps feeding μ and σ.
    pub history_window: usize,
}

impl Default for NtConfig {
    fn default() -> Self {
        Self { eta: 3.0, history_window: 20 }
    }
}

/// Anything that can report a partition's population at a time.
pub trait PopulationSource {
    /// Called whenever the search's aligned arrival time advances.
    fn prepare(&mut self, _t_a: Timestamp) -> Result<(), EstimatorError> {
        Ok(())
    }

    fn population(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError>;

    /// Structural memory proxy: stored ledger plus overlay entries.
    fn memory_entries(&self) -> usize {
        0
    }
}

/// Scales outflows down proportionally when their sum exceeds `population`.
pub fn rectify_outflows(population: f64, outflows: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    if population.is_nan() || population < 0.0 || outflows.iter().any(|f| f.is_nan() || *f < 0.0) {
        return Err(EstimatorError::Corrupt("negative population or outflow".into()));
    }
    let scale = rectification_scale(population, outflows.iter().sum());
    Ok(outflows.iter().map(|f| f * scale).collect())
}

#[inline]
fn rectification_scale(population: f64, expected_out: f64) -> f64 {
    if expected_out > population {
        population / expected_out
    } else {
        1.0
    }
}

/// Total outflow after rectification: the population itself when the
/// expectation exceeds it.
#[inline]
fn rectified_total(population: f64, expected_out: f64) -> f64 {
    if expected_out > population {
        population
    } else {
        expected_out
    }
}

/// `P_prev - out + in`.
pub fn step_population(prev: f64, out: f64, inflow: f64) -> Result<f64, EstimatorError> {
    if !(prev >= 0.0 && out >= 0.0 && inflow >= 0.0) {
        return Err(EstimatorError::Corrupt(format!("step ({prev}, {out}, {inflow})")));
    }
    if out > prev + 1e-9 * prev.max(1.0) {
        return Err(EstimatorError::MissingRectification { population: prev, out });
    }
    Ok((prev - out + inflow).max(0.0))
}

/// Mean and population standard deviation.
pub fn mean_and_deviation(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mu = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n;
    Some((mu, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Step {
    stamp: Timestamp,
    population: f64,
}

#[derive(Debug, Clone)]
struct Series {
    record: f64,
    /// Every update timestamp of the partition up to here has a step.
    through: Timestamp,
    steps: Vec<Step>,
    /// Rank of the partition's first update timestamp after `through`.
    cursor: Option<usize>,
}

impl Series {
    fn new(record: f64, at: Timestamp) -> Self {
        Self { record, through: at, steps: Vec::new(), cursor: None }
    }

    fn last(&self) -> f64 {
        self.steps.last().map_or(self.record, |s| s.population)
    }

    fn at(&self, t: Timestamp) -> f64 {
        match self.steps.last() {
            None => return self.record,
            Some(s) if s.stamp <= t => return s.population,
            _ => {}
        }
        let i = self.steps.partition_point(|s| s.stamp <= t);
        if i == 0 {
            self.record
        } else {
            self.steps[i - 1].population
        }
    }

    fn before(&self, t: Timestamp) -> f64 {
        self.at(t - 1)
    }

    fn next_stamp(&mut self, clock: &mut UpdateClock, v: PartitionId) -> Option<Timestamp> {
        let through = self.through;
        let k = *self.cursor.get_or_insert_with(|| clock.partition_rank(v, through));
        clock.partition_stamp(v, k)
    }

    fn push(&mut self, stamp: Timestamp, population: f64) {
        self.steps.push(Step { stamp, population });
        self.through = stamp;
        if let Some(k) = &mut self.cursor {
            *k += 1;
        }
    }
}

/// A directed edge flattened for the derivation loops.
#[derive(Debug, Clone, Copy)]
struct Flow {
    other: u32,
    lambda: f64,
    period: i64,
    origin: Timestamp,
}

impl Flow {
    #[inline]
    fn reports_at(&self, t: Timestamp) -> bool {
        let d = t.wrapping_sub(self.origin);
        if d < 0 {
            return false;
        }
        // 32-bit division is markedly cheaper and covers every realistic span.
        if d <= u32::MAX as i64 && self.period <= u32::MAX as i64 {
            (d as u32).is_multiple_of(self.period as u32)
        } else {
            d % self.period == 0
        }
    }
}

/// Out- and in-flows of every partition in compressed rows.
#[derive(Debug, Clone)]
struct FlowTable {
    out_start: Vec<usize>,
    out: Vec<Flow>,
    in_start: Vec<usize>,
    inflows: Vec<Flow>,
}

impl FlowTable {
    fn new(model: &IndoorCrowdModel) -> Self {
        let rows = |outgoing: bool| {
            let mut start = Vec::with_capacity(model.partition_count() + 1);
            let mut flows = Vec::with_capacity(model.edges().len());
            for v in 0..model.partition_count() {
                let v = PartitionId(v as u32);
                start.push(flows.len());
                let edges = if outgoing { model.out_edges(v) } else { model.in_edges(v) };
                for &e in edges {
                    let edge = model.edge(e);
                    let schedule = model.door(edge.door).schedule;
                    flows.push(Flow {
                        other: if outgoing { edge.to.0 } else { edge.from.0 },
                        lambda: edge.lambda,
                        period: schedule.period,
                        origin: schedule.origin,
                    });
                }
            }
            start.push(flows.len());
            (start, flows)
        };
        let (out_start, out) = rows(true);
        let (in_start, inflows) = rows(false);
        Self { out_start, out, in_start, inflows }
    }

    fn out(&self, v: PartitionId) -> &[Flow] {
        &self.out[self.out_start[v.index()]..self.out_start[v.index() + 1]]
    }

    fn inflows(&self, v: PartitionId) -> &[Flow] {
        &self.inflows[self.in_start[v.index()]..self.in_start[v.index() + 1]]
    }

    /// Sum of the expected outflows of `v` at `t` and how many edges report.
    fn expected_out(&self, v: PartitionId, t: Timestamp) -> (f64, usize) {
        let mut sum = 0.0;
        let mut reporting = 0;
        for f in self.out(v) {
            if f.reports_at(t) {
                sum += f.lambda;
                reporting += 1;
            }
        }
        (sum, reporting)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub ledger_entries: usize,
    pub overlay_entries: usize,
    pub ledger_writes: usize,
}

impl SessionStats {
    pub fn memory_entries(&self) -> usize {
        self.ledger_entries + self.overlay_entries
    }
}

/// Per-query derivation state over a shared model.
pub struct Session<'m> {
    model: &'m IndoorCrowdModel,
    kind: EstimatorKind,
    nt: NtConfig,
    clock: UpdateClock,
    flows: FlowTable,
    /// Last expected outflow computed per partition, keyed by timestamp.
    out_memo: Vec<(Timestamp, f64)>,
    /// Reporting in-flow offsets of the partition being stepped.
    reporting: Vec<usize>,
    global_through: Timestamp,
    global: Vec<Series>,
    local: Vec<Series>,
    pp: Vec<Series>,
    nt_moments: Vec<Option<Option<(f64, f64)>>>,
    nt_cache: HashMap<(PartitionId, usize), f64>,
    stats: SessionStats,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m IndoorCrowdModel, kind: EstimatorKind) -> Self {
        Self::with_nt(model, kind, NtConfig::default())
    }

    pub fn with_nt(model: &'m IndoorCrowdModel, kind: EstimatorKind, nt: NtConfig) -> Self {
        let clock = UpdateClock::new(model);
        let fresh: Vec<Series> = (0..model.partition_count())
            .map(|v| {
                let r = model.record(PartitionId(v as u32));
                Series::new(r.population, r.timestamp)
            })
            .collect();
        Self {
            model,
            kind,
            nt,
            global_through: clock.start(),
            clock,
            flows: FlowTable::new(model),
            out_memo: vec![(Timestamp::MIN, 0.0); model.partition_count()],
            reporting: Vec::new(),
            global: fresh.clone(),
            local: fresh.clone(),
            pp: fresh,
            nt_moments: vec![None; model.partition_count()],
            nt_cache: HashMap::new(),
            stats: SessionStats::default(),
        }
    }

    pub fn model(&self) -> &'m IndoorCrowdModel {
        self.model
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn clock(&mut self) -> &mut UpdateClock {
        &mut self.clock
    }

    /// Population of `v` at `t` using the session's estimator.
    pub fn population(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        match self.kind {
            EstimatorKind::Global => {
                self.population_global(t)?;
                Ok(self.global[v.index()].at(t))
            }
            EstimatorKind::Local => self.population_local(v, t),
            EstimatorKind::PartialPartitions => self.population_pp(v, t),
            EstimatorKind::NecessaryTimestamps => self.population_nt(v, t),
        }
    }

    /// Density over the unit interval covering `t`, read from the ledger
    /// without deriving anything.
    pub fn density(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        let not_derived = EstimatorError::NotDerived { partition: v, at: t };
        let record = self.model.record(v);
        let population = match self.kind {
            EstimatorKind::Global if t <= self.global_through => self.global[v.index()].at(t),
            EstimatorKind::Local if t <= self.local[v.index()].through => self.local[v.index()].at(t),
            EstimatorKind::PartialPartitions if t <= self.pp[v.index()].through => self.pp[v.index()].at(t),
            EstimatorKind::NecessaryTimestamps if t <= record.timestamp => record.population,
            EstimatorKind::NecessaryTimestamps => {
                let count = self.clock.partition_count_between(v, record.timestamp, t);
                *self.nt_cache.get(&(v, count)).ok_or(not_derived)?
            }
            _ => return Err(not_derived),
        };
        Ok(population / self.model.partition(v).area)
    }

    /// Sweeps every model-wide update timestamp up to `t_a`, filling the ledger
    /// for all partitions.
    pub fn population_global(&mut self, t_a: Timestamp) -> Result<(), EstimatorError> {
        if t_a <= self.global_through {
            return Ok(());
        }
        let model = self.model;
        let n = model.partition_count();
        let mut before = vec![0.0; n];
        let mut scale = vec![1.0; n];
        let mut expected = vec![0.0; n];
        let mut reporting_out = vec![0; n];
        for t in self.clock.global_between(self.global_through, t_a) {
            for v in 0..n {
                (expected[v], reporting_out[v]) = self.flows.expected_out(PartitionId(v as u32), t);
                before[v] = self.global[v].last();
                scale[v] = rectification_scale(before[v], expected[v]);
            }
            for v in 0..n {
                let vid = PartitionId(v as u32);
                if t <= model.record(vid).timestamp {
                    continue;
                }
                let out = rectified_total(before[v], expected[v]);
                let mut inflow = 0.0;
                let mut reporting_in = 0;
                for f in self.flows.inflows(vid) {
                    if f.reports_at(t) {
                        inflow += f.lambda * scale[f.other as usize];
                        reporting_in += 1;
                    }
                }
                let population = step_population(before[v], out, inflow)?;
                self.global[v].push(t, population);
                self.stats.ledger_entries += 1;
                self.stats.overlay_entries += reporting_out[v] + reporting_in;
                self.stats.ledger_writes += 1;
            }
        }
        self.global_through = t_a;
        for s in &mut self.global {
            s.through = s.through.max(t_a);
        }
        Ok(())
    }

    /// Rectification scale of `w`'s outflows at `t` given its population
    /// just before `t`.
    fn scale_at(&mut self, w: PartitionId, population: f64, t: Timestamp) -> f64 {
        let memo = &mut self.out_memo[w.index()];
        if memo.0 != t {
            *memo = (t, self.flows.expected_out(w, t).0);
        }
        rectification_scale(population, memo.1)
    }

    /// Exact population of `v` at `t`, deriving only `v`'s update timestamps
    /// and the upstream partitions they depend on.
    pub fn population_local(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        self.ensure_local(v, t)?;
        Ok(self.local[v.index()].at(t))
    }

    fn ensure_local(&mut self, v: PartitionId, t: Timestamp) -> Result<(), EstimatorError> {
        if self.local[v.index()].through >= t {
            return Ok(());
        }
        let mut stack = vec![(v, t)];
        while let Some(&(u, until)) = stack.last() {
            let series = &mut self.local[u.index()];
            if series.through >= until {
                stack.pop();
                continue;
            }
            let s = match series.next_stamp(&mut self.clock, u) {
                Some(s) if s <= until => s,
                _ => {
                    series.through = until;
                    stack.pop();
                    continue;
                }
            };
            self.reporting.clear();
            let mut pending = None;
            for (i, f) in self.flows.inflows(u).iter().enumerate() {
                if f.reports_at(s) {
                    if self.local[f.other as usize].through < s - 1 {
                        pending = Some(f.other);
                        break;
                    }
                    self.reporting.push(i);
                }
            }
            if let Some(w) = pending {
                stack.push((PartitionId(w), s - 1));
                continue;
            }
            self.local_step(u, s)?;
        }
        Ok(())
    }

    fn local_step(&mut self, u: PartitionId, s: Timestamp) -> Result<(), EstimatorError> {
        let before = self.local[u.index()].last();
        let (expected, reporting_out) = self.flows.expected_out(u, s);
        let out = rectified_total(before, expected);
        let mut inflow = 0.0;
        let lo = self.flows.in_start[u.index()];
        let reporting_in = self.reporting.len();
        for k in 0..reporting_in {
            let f = self.flows.inflows[lo + self.reporting[k]];
            let w = PartitionId(f.other);
            let upstream = self.local[w.index()].before(s);
            inflow += f.lambda * self.scale_at(w, upstream, s);
        }
        let population = step_population(before, out, inflow)?;
        self.local[u.index()].push(s, population);
        self.stats.ledger_entries += 1;
        self.stats.overlay_entries += reporting_out + reporting_in;
        self.stats.ledger_writes += 1;
        Ok(())
    }

    /// Like [`Session::population_local`] but upstream inflows are the raw
    /// flow expectations, so no upstream partition is derived.
    pub fn population_pp(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        loop {
            let series = &mut self.pp[v.index()];
            if series.through >= t {
                break;
            }
            let s = match series.next_stamp(&mut self.clock, v) {
                Some(s) if s <= t => s,
                _ => {
                    series.through = t;
                    break;
                }
            };
            let before = series.last();
            let (expected, reporting_out) = self.flows.expected_out(v, s);
            let out = rectified_total(before, expected);
            let mut inflow = 0.0;
            let mut reporting_in = 0;
            for f in self.flows.inflows(v) {
                if f.reports_at(s) {
                    inflow += f.lambda;
                    reporting_in += 1;
                }
            }
            let population = step_population(before, out, inflow)?;
            self.pp[v.index()].push(s, population);
            self.stats.ledger_entries += 1;
            self.stats.overlay_entries += reporting_out + reporting_in;
            self.stats.ledger_writes += 1;
        }
        Ok(self.pp[v.index()].at(t))
    }

    /// Mean and deviation of `v`'s historical net flow over its most recent
    /// update timestamps at or before its record.
    pub fn flow_difference_moments(&mut self, v: PartitionId) -> Option<(f64, f64)> {
        if let Some(m) = self.nt_moments[v.index()] {
            return m;
        }
        let model = self.model;
        let record_at = model.record(v).timestamp;
        let stamps = self.clock.partition_history(v, record_at, self.nt.history_window);
        let diffs: Vec<f64> = stamps
            .iter()
            .map(|&t| {
                let inflow: f64 = model.in_edges(v).iter().map(|&e| self.historical_flow(e, t)).sum();
                let outflow: f64 = model.out_edges(v).iter().map(|&e| self.historical_flow(e, t)).sum();
                inflow - outflow
            })
            .collect();
        let m = mean_and_deviation(&diffs);
        self.nt_moments[v.index()] = Some(m);
        self.stats.overlay_entries += 1;
        m
    }

    /// Observed flow when the edge carries history, else its expectation.
    fn historical_flow(&self, e: EdgeId, t: Timestamp) -> f64 {
        let observed = self.model.observed_flows(e);
        if observed.is_empty() {
            crate::flows::expected_flow(self.model, e, t)
        } else {
            observed
                .binary_search_by_key(&t, |s| s.timestamp)
                .map_or(0.0, |i| observed[i].flow)
        }
    }

    /// Linear extrapolation of the recorded population by the mean net flow
    /// per skipped update timestamp when the net flow is steady; otherwise
    /// falls back to [`Session::population_pp`].
    pub fn population_nt(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        let record = self.model.record(v);
        if t <= record.timestamp {
            return Ok(record.population);
        }
        let count = self.clock.partition_count_between(v, record.timestamp, t);
        if let Some(&p) = self.nt_cache.get(&(v, count)) {
            return Ok(p);
        }
        let p = match self.flow_difference_moments(v) {
            Some((mu, sigma)) if sigma < self.nt.eta => {
                (record.population + mu * count as f64).clamp(0.0, self.model.capacity(v))
            }
            _ => self.population_pp(v, t)?,
        };
        self.nt_cache.insert((v, count), p);
        self.stats.ledger_entries += 1;
        self.stats.ledger_writes += 1;
        Ok(p)
    }

    /// Rectified outflows of `v` at update timestamp `t` under the exact
    /// local derivation.
    pub fn rectified_outflows(&mut self, v: PartitionId, t: Timestamp) -> Result<Vec<(EdgeId, f64)>, EstimatorError> {
        let population = self.population_local(v, t - 1)?;
        let model = self.model;
        let edges: Vec<EdgeId> = model
            .out_edges(v)
            .iter()
            .copied()
            .filter(|&e| model.door(model.edge(e).door).schedule.reports_at(t))
            .collect();
        let expected: Vec<f64> = edges.iter().map(|&e| model.edge(e).lambda).collect();
        Ok(edges.into_iter().zip(rectify_outflows(population, &expected)?).collect())
    }

    /// `(partition, timestamp, population)` for the record and every stored
    /// step, sorted. Extrapolated values are not steps, so the strategy that
    /// skips timestamps reports the steps of its fallback.
    pub fn ledger_rows(&self) -> Vec<(PartitionId, Timestamp, f64)> {
        let series = match self.kind {
            EstimatorKind::Global => &self.global,
            EstimatorKind::Local => &self.local,
            _ => &self.pp,
        };
        let mut rows = Vec::new();
        for (v, s) in series.iter().enumerate() {
            let id = PartitionId(v as u32);
            let r = self.model.record(id);
            rows.push((id, r.timestamp, r.population));
            rows.extend(s.steps.iter().map(|st| (id, st.stamp, st.population)));
        }
        rows.sort_by_key(|a| (a.0, a.1));
        rows
    }
}

impl PopulationSource for Session<'_> {
    fn prepare(&mut self, t_a: Timestamp) -> Result<(), EstimatorError> {
        if self.kind == EstimatorKind::Global {
            self.population_global(t_a)?;
        }
        Ok(())
    }

    fn population(&mut self, v: PartitionId, t: Timestamp) -> Result<f64, EstimatorError> {
        Session::population(self, v, t)
    }

    fn memory_entries(&self) -> usize {
        self.stats.memory_entries()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectification_examples() {
        assert_eq!(rectify_outflows(3.0, &[4.0, 2.0]).unwrap(), vec![2.0, 1.0]);
        assert_eq!(rectify_outflows(10.0, &[4.0, 2.0]).unwrap(), vec![4.0, 2.0]);
        assert_eq!(rectify_outflows(0.0, &[4.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert!(rectify_outflows(-1.0, &[1.0]).is_err());
        assert!(rectify_outflows(1.0, &[-1.0]).is_err());
    }

    #[test]
    fn step_examples() {
        assert_eq!(step_population(3.0, 3.0, 2.0).unwrap(), 2.0);
        assert_eq!(step_population(7.0, 2.0, 3.0).unwrap(), 8.0);
        assert_eq!(step_population(5.0, 0.0, 0.0).unwrap(), 5.0);
        assert_eq!(step_population(5.0, 1.0, 2.0).unwrap(), 6.0);
        assert!(matches!(step_population(1.0, 2.0, 0.0), Err(EstimatorError::MissingRectification { .. })));
    }

    #[test]
    fn moments_use_biased_deviation() {
        let (mu, sigma) = mean_and_deviation(&[0.0, 10.0, -10.0]).unwrap();
        assert_eq!(mu, 0.0);
        assert!((sigma - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((sigma - 8.16).abs() < 0.01);
        assert_eq!(mean_and_deviation(&[1.0, 1.0, 1.0]), Some((1.0, 0.0)));
        assert_eq!(mean_and_deviation(&[]), None);
    }
}
