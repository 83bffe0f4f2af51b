//! Synthetic buildings and query workloads, an object-level crowd simulator
//! that serves as ground truth, and accuracy metrics.

mod metrics;
mod random;
mod sim;
mod space;
mod workload;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Timestamp};
use crate::router::RouterError;

pub use metrics::{evaluate, relative_error, InstanceOutcome, Metrics};
pub use random::{random_model, RandomModelSpec};
pub use sim::{gold_search, simulate, QueueEvent, QueueLog, SimConfig, SimState, TruePopulations};
pub use space::{generate_space, GeneratedSpace, SpaceMetadata, SpaceSpec};
pub use workload::{door_distances, generate_workload, shortest_distance, QueryInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimgenError {
    #[error("specification out of domain: {0}")]
    Spec(String),
    #[error("s2t {requested} m is not realizable; the longest realizable distance is about {max_realizable:.1} m")]
    Unrealizable { requested: f64, max_realizable: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Router(#[from] RouterError),
}

/// Independent deterministic random stream `stream` of `seed`.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct WorkloadSpec {
    /// Upper bound of each partition's initial population draw.
    pub objects: u32,
    /// Base report interval in seconds.
    pub ti: i64,
    pub lambda_range: [f64; 2],
    /// Source-to-target indoor distance in meters.
    pub s2t: f64,
    pub instances: usize,
    pub seed: u64,
    /// Timestamp of the initial population snapshot and of every query.
    pub snapshot_time: Timestamp,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            objects: 600,
            ti: 10,
            lambda_range: [0.0, 3.0],
            s2t: 1300.0,
            instances: 100,
            seed: 1,
            snapshot_time: 1000,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SimgenError> {
        let bad = |m: String| Err(SimgenError::Spec(m));
        if self.objects == 0 {
            return bad("objects must be positive".into());
        }
        if ![5, 10, 15, 20].contains(&self.ti) {
            return bad(format!("TI must be one of 5, 10, 15, 20; got {}", self.ti));
        }
        let [lo, hi] = self.lambda_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return bad(format!("lambda range [{lo}, {hi}] is not a non-negative interval"));
        }
        if !(self.s2t.is_finite() && self.s2t > 0.0) {
            return bad(format!("s2t must be positive, got {}", self.s2t));
        }
        if self.instances == 0 {
            return bad("instances must be positive".into());
        }
        if self.snapshot_time < 0 {
            return bad("snapshot time must be non-negative".into());
        }
        Ok(())
    }
}
