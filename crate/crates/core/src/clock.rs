//! Lazily materialized update-timestamp sets: per partition (the union of its
//! doors' report schedules) and model-wide.

use crate::flows::{merge_schedules, ReportSchedule};
use crate::model::{IndoorCrowdModel, PartitionId, Timestamp};

#[derive(Debug, Clone)]
struct Timeline {
    schedules: Vec<ReportSchedule>,
    start: Timestamp,
    stamps: Vec<Timestamp>,
    through: Timestamp,
    chunk: i64,
}

impl Timeline {
    fn new(schedules: Vec<ReportSchedule>, start: Timestamp) -> Self {
        let longest = schedules.iter().map(|s| s.period).max().unwrap_or(1);
        Self { schedules, start, stamps: Vec::new(), through: start - 1, chunk: longest * 16 }
    }

    fn ensure(&mut self, t: Timestamp) {
        if t <= self.through || self.schedules.is_empty() {
            return;
        }
        let upto = t.max(self.through.saturating_add(self.chunk));
        let fresh = merge_schedules(self.schedules.iter().copied(), self.through + 1, upto);
        self.stamps.extend(fresh);
        self.through = upto;
        self.chunk = self.chunk.saturating_mul(2);
    }

    /// Stamps in `(a, b]`.
    fn between(&mut self, a: Timestamp, b: Timestamp) -> Vec<Timestamp> {
        if b <= a {
            return Vec::new();
        }
        if a + 1 < self.start {
            return merge_schedules(self.schedules.iter().copied(), a + 1, b);
        }
        self.ensure(b);
        let lo = self.stamps.partition_point(|&s| s <= a);
        let hi = self.stamps.partition_point(|&s| s <= b);
        self.stamps[lo..hi].to_vec()
    }

    fn count_between(&mut self, a: Timestamp, b: Timestamp) -> usize {
        if b <= a {
            return 0;
        }
        if a + 1 < self.start {
            return merge_schedules(self.schedules.iter().copied(), a + 1, b).len();
        }
        self.ensure(b);
        self.stamps.partition_point(|&s| s <= b) - self.stamps.partition_point(|&s| s <= a)
    }

    fn next_after(&mut self, a: Timestamp, until: Timestamp) -> Option<Timestamp> {
        if until <= a {
            return None;
        }
        if a + 1 < self.start {
            return self.schedules.iter().map(|s| s.first_at_or_after(a + 1)).filter(|&t| t <= until).min();
        }
        loop {
            let i = self.stamps.partition_point(|&s| s <= a);
            if let Some(&s) = self.stamps.get(i) {
                return (s <= until).then_some(s);
            }
            if self.through >= until || self.schedules.is_empty() {
                return None;
            }
            self.ensure(until.min(self.through.saturating_add(self.chunk)));
        }
    }

    /// The `k`-th stamp at or after the start, zero-based.
    fn stamp(&mut self, k: usize) -> Option<Timestamp> {
        while self.stamps.len() <= k {
            if self.schedules.is_empty() {
                return None;
            }
            self.ensure(self.through.saturating_add(self.chunk));
        }
        Some(self.stamps[k])
    }

    /// Number of stamps in `[start, t]`.
    fn rank(&mut self, t: Timestamp) -> usize {
        self.ensure(t);
        self.stamps.partition_point(|&s| s <= t)
    }

    fn last_at_or_before(&mut self, t: Timestamp) -> Option<Timestamp> {
        if t < self.start {
            return self.schedules.iter().filter_map(|s| s.last_at_or_before(t)).max();
        }
        self.ensure(t);
        let i = self.stamps.partition_point(|&s| s <= t);
        if i > 0 {
            Some(self.stamps[i - 1])
        } else {
            self.schedules.iter().filter_map(|s| s.last_at_or_before(t)).max()
        }
    }
}

/// Update timestamps of one model, extended on demand.
#[derive(Debug, Clone)]
pub struct UpdateClock {
    start: Timestamp,
    global: Timeline,
    partitions: Vec<Option<Timeline>>,
    partition_schedules: Vec<Vec<ReportSchedule>>,
}

impl UpdateClock {
    pub fn new(model: &IndoorCrowdModel) -> Self {
        let start = (0..model.partition_count())
            .map(|v| model.record(PartitionId(v as u32)).timestamp)
            .min()
            .unwrap_or(0);
        let partition_schedules: Vec<Vec<ReportSchedule>> = model
            .partitions()
            .iter()
            .map(|v| v.d2d.doors().iter().map(|&d| model.door(d).schedule).collect())
            .collect();
        Self {
            start,
            global: Timeline::new(model.doors().iter().map(|d| d.schedule).collect(), start),
            partitions: vec![None; model.partition_count()],
            partition_schedules,
        }
    }

    /// Earliest recorded population timestamp of the model.
    pub fn start(&self) -> Timestamp {
        self.start
    }

    fn partition(&mut self, v: PartitionId) -> &mut Timeline {
        let schedules = &self.partition_schedules[v.index()];
        let start = self.start;
        self.partitions[v.index()].get_or_insert_with(|| Timeline::new(schedules.clone(), start))
    }

    /// Latest model-wide update timestamp at or before `t`.
    pub fn align(&mut self, t: Timestamp) -> Option<Timestamp> {
        self.global.last_at_or_before(t)
    }

    /// Model-wide update timestamps in `(a, b]`.
    pub fn global_between(&mut self, a: Timestamp, b: Timestamp) -> Vec<Timestamp> {
        self.global.between(a, b)
    }

    /// Update timestamps of `v` in `(a, b]`.
    pub fn partition_between(&mut self, v: PartitionId, a: Timestamp, b: Timestamp) -> Vec<Timestamp> {
        self.partition(v).between(a, b)
    }

    pub fn partition_count_between(&mut self, v: PartitionId, a: Timestamp, b: Timestamp) -> usize {
        self.partition(v).count_between(a, b)
    }

    /// First update timestamp of `v` after `a`, if it is at most `until`.
    pub fn partition_next_after(&mut self, v: PartitionId, a: Timestamp, until: Timestamp) -> Option<Timestamp> {
        self.partition(v).next_after(a, until)
    }

    /// Number of update timestamps of `v` from the clock's start through `t`.
    pub fn partition_rank(&mut self, v: PartitionId, t: Timestamp) -> usize {
        self.partition(v).rank(t)
    }

    /// Update timestamp of `v` with the given rank, counted from the clock's
    /// start.
    pub fn partition_stamp(&mut self, v: PartitionId, rank: usize) -> Option<Timestamp> {
        self.partition(v).stamp(rank)
    }

    /// The most recent `count` update timestamps of `v` at or before `t`,
    /// oldest first.
    pub fn partition_history(&self, v: PartitionId, t: Timestamp, count: usize) -> Vec<Timestamp> {
        let schedules = &self.partition_schedules[v.index()];
        if count == 0 || schedules.is_empty() {
            return Vec::new();
        }
        let earliest = schedules.iter().map(|s| s.origin).min().unwrap();
        let longest = schedules.iter().map(|s| s.period).max().unwrap();
        let mut span = longest * count as i64;
        loop {
            let from = t.saturating_sub(span);
            let stamps = merge_schedules(schedules.iter().copied(), from, t);
            if stamps.len() >= count || from <= earliest {
                return stamps[stamps.len().saturating_sub(count)..].to_vec();
            }
            span = span.saturating_mul(2);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> IndoorCrowdModel {
        IndoorCrowdModel::from_json(
            r#"{
              "partitions": [
                {"id": 0, "kind": "R", "area": 20, "maxDensity": 1, "bbox": [0, 0, 4, 5]},
                {"id": 1, "kind": "R", "area": 20, "maxDensity": 1, "bbox": [4, 0, 8, 5]},
                {"id": 2, "kind": "R", "area": 20, "maxDensity": 1, "bbox": [8, 0, 12, 5]}
              ],
              "doors": [
                {"id": 0, "x": 4, "y": 2, "reportPeriodSec": 10, "directedPairs": [[0, 1], [1, 0]]},
                {"id": 1, "x": 8, "y": 2, "reportPeriodSec": 15, "directedPairs": [[1, 2], [2, 1]]}
              ],
              "initialPopulations": [[0, 5, 20]]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn per_partition_and_global() {
        let m = model();
        let mut c = UpdateClock::new(&m);
        assert_eq!(c.start(), 0);
        assert_eq!(c.partition_between(PartitionId(0), -1, 30), vec![0, 10, 20, 30]);
        assert_eq!(c.partition_between(PartitionId(1), -1, 30), vec![0, 10, 15, 20, 30]);
        assert_eq!(c.global_between(10, 45), vec![15, 20, 30, 40, 45]);
        assert_eq!(c.align(44), Some(40));
        assert_eq!(c.align(-3), None);
        assert_eq!(c.partition_next_after(PartitionId(2), 15, 100), Some(30));
        assert_eq!(c.partition_next_after(PartitionId(2), 15, 29), None);
        assert_eq!(c.partition_count_between(PartitionId(1), 0, 30), 4);
        assert_eq!(c.partition_history(PartitionId(1), 30, 3), vec![15, 20, 30]);
        assert_eq!(c.partition_history(PartitionId(0), 20, 10), vec![0, 10, 20]);
    }

    #[test]
    fn long_horizons_extend() {
        let m = model();
        let mut c = UpdateClock::new(&m);
        assert_eq!(c.partition_next_after(PartitionId(0), 100_000, 1_000_000), Some(100_010));
        assert_eq!(c.partition_count_between(PartitionId(0), 0, 100_000), 10_000);
        assert_eq!(c.align(1_000_001), Some(1_000_000));
    }
}
