//! Crowd-aware segment costs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::estimator::{EstimatorKind, NtConfig, PopulationSource};
use crate::model::{DoorId, IndoorCrowdModel, PartitionId, PartitionKind, Timestamp, Waypoint};

use super::RouterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryType {
    /// Fastest path: ordered by (time, distance).
    Fpq,
    /// Least crowded path: ordered by (contact, distance).
    Lcpq,
}

impl QueryType {
    pub fn name(self) -> &'static str {
        match self {
            QueryType::Fpq => "fpq",
            QueryType::Lcpq => "lcpq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fpq" => Some(Self::Fpq),
            "lcpq" => Some(Self::Lcpq),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingConfig {
    /// Average walking speed in m/s.
    pub speed: f64,
    /// Contact buffer width in meters.
    pub buffer_width: f64,
    pub estimator: EstimatorKind,
    pub nt: NtConfig,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self { speed: 1.2, buffer_width: 1.0, estimator: EstimatorKind::Local, nt: NtConfig::default() }
    }
}

impl RoutingConfig {
    pub fn with_estimator(self, estimator: EstimatorKind) -> Self {
        Self { estimator, ..self }
    }

    pub fn validate(&self) -> Result<(), RouterError> {
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(RouterError::InvalidQuery(format!("speed must be positive, got {}", self.speed)));
        }
        if !(self.buffer_width.is_finite() && self.buffer_width > 0.0) {
            return Err(RouterError::InvalidQuery(format!("buffer width must be positive, got {}", self.buffer_width)));
        }
        if self.nt.eta.is_nan() || self.nt.eta < 0.0 {
            return Err(RouterError::InvalidQuery(format!("eta must be non-negative, got {}", self.nt.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    pub distance: f64,
    pub time: f64,
    pub contact: f64,
}

impl CostVector {
    pub const ZERO: Self = Self { distance: 0.0, time: 0.0, contact: 0.0 };

    pub fn add(&self, other: &Self) -> Self {
        Self {
            distance: self.distance + other.distance,
            time: self.time + other.time,
            contact: self.contact + other.contact,
        }
    }

    pub fn primary(&self, qt: QueryType) -> f64 {
        match qt {
            QueryType::Fpq => self.time,
            QueryType::Lcpq => self.contact,
        }
    }

    /// Lexicographic (primary, distance) comparison.
    pub fn compare(&self, other: &Self, qt: QueryType) -> Ordering {
        self.primary(qt)
            .total_cmp(&other.primary(qt))
            .then(self.distance.total_cmp(&other.distance))
    }
}

/// Slowdown factor of a partition at a given density.
pub fn lagging(kind: PartitionKind, density: f64, max_density: f64) -> f64 {
    let ratio = density / max_density;
    match kind {
        PartitionKind::Queue => 1.0 + ratio.exp(),
        PartitionKind::Random => 1.0 + (ratio * ratio).exp(),
    }
}

/// Crowd-affected time to walk `length` meters.
pub fn passing_time(length: f64, speed: f64, kind: PartitionKind, density: f64, max_density: f64) -> f64 {
    if length == 0.0 {
        return 0.0;
    }
    length / speed * lagging(kind, density, max_density)
}

/// Expected objects met while walking `length` meters. Random crowds are met
/// along a buffer of `width`; queues are passed in proportion to
/// `width / length`.
pub fn passing_contact(kind: PartitionKind, length: f64, width: f64, density: f64, area: f64) -> f64 {
    match kind {
        PartitionKind::Random => length * width * density,
        PartitionKind::Queue if length == 0.0 => 0.0,
        PartitionKind::Queue => width / length * (density * area),
    }
}

/// Cost of the segment `from -> to` through `via`, using the population at
/// `t`.
pub fn segment_cost(
    model: &IndoorCrowdModel,
    source: &mut dyn PopulationSource,
    from: Waypoint,
    to: Waypoint,
    via: PartitionId,
    t: Timestamp,
    cfg: &RoutingConfig,
) -> Result<CostVector, RouterError> {
    let population = source.population(via, t)?;
    segment_cost_at(model, population, from, to, via, cfg)
}

/// As [`segment_cost`], with `via` holding `population` objects.
pub(crate) fn segment_cost_at(
    model: &IndoorCrowdModel,
    population: f64,
    from: Waypoint,
    to: Waypoint,
    via: PartitionId,
    cfg: &RoutingConfig,
) -> Result<CostVector, RouterError> {
    let length = model.segment_length(from, to, via);
    if !length.is_finite() {
        return Err(RouterError::InvalidSegment(format!("{from:?} -> {to:?} through {via}")));
    }
    let part = model.partition(via);
    let density = population / part.area;
    Ok(CostVector {
        distance: length,
        time: passing_time(length, cfg.speed, part.kind, density, part.max_density),
        contact: passing_contact(part.kind, length, cfg.buffer_width, density, part.area),
    })
}

/// Passing time between two doors of `v` at `t`.
pub fn door_passing_time(
    model: &IndoorCrowdModel,
    source: &mut dyn PopulationSource,
    d_i: DoorId,
    d_j: DoorId,
    v: PartitionId,
    t: Timestamp,
    cfg: &RoutingConfig,
) -> Result<f64, RouterError> {
    Ok(segment_cost(model, source, Waypoint::Door(d_i), Waypoint::Door(d_j), v, t, cfg)?.time)
}

/// Contact between two doors of `v` at `t`.
pub fn door_passing_contact(
    model: &IndoorCrowdModel,
    source: &mut dyn PopulationSource,
    d_i: DoorId,
    d_j: DoorId,
    v: PartitionId,
    t: Timestamp,
    cfg: &RoutingConfig,
) -> Result<f64, RouterError> {
    Ok(segment_cost(model, source, Waypoint::Door(d_i), Waypoint::Door(d_j), v, t, cfg)?.contact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PartitionKind::{Queue, Random};

    #[test]
    fn lagging_values() {
        assert_eq!(lagging(Queue, 0.0, 1.0), 2.0);
        assert_eq!(lagging(Random, 0.0, 1.0), 2.0);
        assert!((lagging(Queue, 1.0, 1.0) - 3.718282).abs() < 1e-6);
        assert!((lagging(Random, 0.5, 1.0) - 2.284025).abs() < 1e-6);
    }

    #[test]
    fn time_values() {
        assert_eq!(passing_time(12.0, 1.2, Random, 0.0, 1.0), 20.0);
        assert!((passing_time(10.0, 1.0, Queue, 2.0, 2.0) - 37.18282).abs() < 1e-4);
        assert_eq!(passing_time(0.0, 1.2, Queue, 5.0, 1.0), 0.0);
    }

    #[test]
    fn contact_values() {
        assert!((passing_contact(Random, 10.0, 1.0, 0.3, 50.0) - 3.0).abs() < 1e-9);
        assert!((passing_contact(Queue, 10.0, 1.0, 0.2, 100.0) - 2.0).abs() < 1e-9);
        assert_eq!(passing_contact(Random, 10.0, 1.0, 0.0, 50.0), 0.0);
        assert_eq!(passing_contact(Queue, 10.0, 1.0, 0.0, 50.0), 0.0);
        assert_eq!(passing_contact(Queue, 0.0, 1.0, 0.5, 50.0), 0.0);
    }

    proptest! {
        #[test]
        fn lagging_is_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0, dmax in 0.1f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for kind in [Queue, Random] {
                prop_assert!(lagging(kind, lo, dmax) <= lagging(kind, hi, dmax));
                prop_assert!(lagging(kind, lo, dmax) >= 2.0);
            }
        }

        #[test]
        fn queues_lag_more_below_capacity(ratio in 0.0001f64..0.9999) {
            prop_assert!(lagging(Queue, ratio, 1.0) >= lagging(Random, ratio, 1.0));
        }

        #[test]
        fn time_scales_with_length(len in 0.1f64..200.0, k in 0.1f64..10.0, density in 0.0f64..2.0) {
            let t = passing_time(len, 1.2, Random, density, 1.0);
            prop_assert!(t >= 2.0 * len / 1.2 - 1e-12);
            let scaled = passing_time(len * k, 1.2, Random, density, 1.0);
            prop_assert!((scaled - k * t).abs() <= 1e-9 * scaled.max(1.0));
        }

        #[test]
        fn contact_shape(len in 0.1f64..200.0, k in 0.1f64..10.0, density in 0.001f64..2.0, area in 1.0f64..500.0) {
            let r = passing_contact(Random, len, 1.0, density, area);
            prop_assert!(r > 0.0);
            prop_assert!((passing_contact(Random, len * k, 1.0, density, area) - k * r).abs() <= 1e-9 * r.max(1.0) * k);
            let q = passing_contact(Queue, len, 1.0, density, area);
            prop_assert!((passing_contact(Queue, len * k, 1.0, density, area) - q / k).abs() <= 1e-9 * q.max(1.0));
        }
    }
}
