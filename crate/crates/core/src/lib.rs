//! Crowd-aware indoor routing: an indoor crowd model, population estimators,
//! fastest and least-crowded path search, baselines, and a synthetic
//! benchmark with a simulation oracle.

pub mod bench;
pub mod clock;
pub mod estimator;
pub mod flows;
pub mod geometry;
pub mod model;
pub mod parallel;
pub mod router;
pub mod simgen;

pub use estimator::{EstimatorKind, NtConfig, PopulationSource, Session};
pub use model::{DoorId, EdgeId, IndoorCrowdModel, IndoorPoint, PartitionId, PartitionKind, Path, Timestamp};
pub use router::{search, CostVector, QueryResult, QueryType, RouterError, RoutingConfig};
