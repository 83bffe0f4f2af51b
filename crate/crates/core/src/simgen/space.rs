//! Procedural multi-floor building.
//!
//! Each floor is a 6 x 6 grid of 228 m blocks. A block holds an L-shaped
//! hallway along its bottom and left edges and a row of rooms filling the
//! rest. Hallways of neighbouring blocks share a door; every room opens onto
//! its own block's hallway and some rooms also open onto the hallway of the
//! block above. Adjacent floors are joined by four stairways at the corner
//! blocks.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{DoorDoc, IndoorCrowdModel, ModelDocument, PartitionDoc, PartitionKind};

use super::{rng_stream, SimgenError, WorkloadSpec};

pub const BLOCKS: usize = 6;
pub const BLOCK: f64 = 228.0;
pub const HALL_WIDTH: f64 = 12.0;
/// Blocks (column, row) split into two rooms instead of three.
const TWO_ROOM_BLOCKS: [(usize, usize); 3] = [(3, 5), (4, 5), (5, 5)];
/// Blocks below the top row whose second room also opens upwards.
const SECOND_TOP_DOORS: usize = 21;
const STAIR_CORNERS: [(usize, usize); 4] = [(0, 0), (5, 0), (0, 5), (5, 5)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SpaceSpec {
    pub floors: u32,
    pub q_partitions_per_floor: usize,
    /// Capacity density in objects per square meter.
    pub beta: f64,
    pub stairway_length: f64,
    pub seed: u64,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        Self { floors: 5, q_partitions_per_floor: 14, beta: 1.0, stairway_length: 20.0, seed: 1 }
    }
}

impl SpaceSpec {
    pub fn validate(&self) -> Result<(), SimgenError> {
        if ![3, 5, 7, 9].contains(&self.floors) {
            return Err(SimgenError::Spec(format!("floors must be one of 3, 5, 7, 9; got {}", self.floors)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(SimgenError::Spec(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.stairway_length.is_finite() && self.stairway_length > 0.0) {
            return Err(SimgenError::Spec("stairway length must be positive".into()));
        }
        if self.q_partitions_per_floor > 51 {
            return Err(SimgenError::Spec(format!(
                "a floor has 51 two-door partitions, cannot mark {} as queues",
                self.q_partitions_per_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpaceMetadata {
    pub floors: u32,
    pub partitions_per_floor: usize,
    pub doors_per_floor: usize,
    pub stairways: usize,
    pub partitions: usize,
    pub doors: usize,
    pub edges: usize,
    pub queue_partitions: usize,
    pub snapshot_time: i64,
}

#[derive(Debug, Clone)]
pub struct GeneratedSpace {
    pub model: IndoorCrowdModel,
    pub metadata: SpaceMetadata,
}

struct Floor {
    partitions: Vec<PartitionDoc>,
    doors: Vec<DoorDoc>,
    two_door_rooms: Vec<u32>,
    /// Hallway partition of each block, row-major.
    halls: Vec<u32>,
}

fn rooms_in(block: (usize, usize)) -> usize {
    if TWO_ROOM_BLOCKS.contains(&block) {
        2
    } else {
        3
    }
}

fn bidirectional(a: u32, b: u32) -> Vec<(u32, u32)> {
    vec![(a, b), (b, a)]
}

fn floor_template(floor: i32, p0: u32, d0: u32) -> Floor {
    let mut partitions = Vec::new();
    let mut doors = Vec::new();
    let mut halls = Vec::new();
    let door = |doors: &mut Vec<DoorDoc>, x: f64, y: f64, pairs: Vec<(u32, u32)>| {
        doors.push(DoorDoc {
            id: d0 + doors.len() as u32,
            x,
            y,
            floor,
            report_period_sec: 1,
            report_origin: 0,
            directed_pairs: pairs,
        });
    };

    for j in 0..BLOCKS {
        for i in 0..BLOCKS {
            let (x0, y0) = (i as f64 * BLOCK, j as f64 * BLOCK);
            let id = p0 + partitions.len() as u32;
            halls.push(id);
            let poly = vec![
                [x0, y0],
                [x0 + BLOCK, y0],
                [x0 + BLOCK, y0 + HALL_WIDTH],
                [x0 + HALL_WIDTH, y0 + HALL_WIDTH],
                [x0 + HALL_WIDTH, y0 + BLOCK],
                [x0, y0 + BLOCK],
            ];
            partitions.push(PartitionDoc {
                id,
                kind: PartitionKind::Random,
                area: BLOCK * HALL_WIDTH + (BLOCK - HALL_WIDTH) * HALL_WIDTH,
                max_density: 1.0,
                floor,
                bbox: None,
                polygon: Some(poly),
                d2d_overrides: Vec::new(),
            });
        }
    }
    let hall = |i: usize, j: usize| halls[j * BLOCKS + i];
    for j in 0..BLOCKS {
        for i in 0..BLOCKS {
            let (x0, y0) = (i as f64 * BLOCK, j as f64 * BLOCK);
            if i + 1 < BLOCKS {
                door(&mut doors, x0 + BLOCK, y0 + HALL_WIDTH / 2.0, bidirectional(hall(i, j), hall(i + 1, j)));
            }
            if j + 1 < BLOCKS {
                door(&mut doors, x0 + HALL_WIDTH / 2.0, y0 + BLOCK, bidirectional(hall(i, j), hall(i, j + 1)));
            }
        }
    }

    let inner = BLOCK - HALL_WIDTH;
    let mut room_ids: Vec<Vec<u32>> = Vec::new();
    for j in 0..BLOCKS {
        for i in 0..BLOCKS {
            let n = rooms_in((i, j));
            let width = inner / n as f64;
            let (x0, y0) = (i as f64 * BLOCK + HALL_WIDTH, j as f64 * BLOCK + HALL_WIDTH);
            let mut ids = Vec::new();
            for k in 0..n {
                let id = p0 + partitions.len() as u32;
                let left = x0 + k as f64 * width;
                partitions.push(PartitionDoc {
                    id,
                    kind: PartitionKind::Random,
                    area: width * inner,
                    max_density: 1.0,
                    floor,
                    bbox: Some([left, y0, left + width, y0 + inner]),
                    polygon: None,
                    d2d_overrides: Vec::new(),
                });
                door(&mut doors, left + width / 2.0, y0, bidirectional(id, hall(i, j)));
                ids.push(id);
            }
            room_ids.push(ids);
        }
    }

    let mut two_door_rooms = Vec::new();
    let mut second_left = SECOND_TOP_DOORS;
    for j in 0..BLOCKS - 1 {
        for i in 0..BLOCKS {
            let n = rooms_in((i, j));
            let width = inner / n as f64;
            let left = i as f64 * BLOCK + HALL_WIDTH;
            let top = (j + 1) as f64 * BLOCK;
            let ids = &room_ids[j * BLOCKS + i];
            let mut open = 1;
            if second_left > 0 {
                open = 2;
                second_left -= 1;
            }
            for (k, &room) in ids.iter().enumerate().take(open) {
                door(&mut doors, left + (k as f64 + 0.5) * width, top, bidirectional(room, hall(i, j + 1)));
                two_door_rooms.push(room);
            }
        }
    }
    Floor { partitions, doors, two_door_rooms, halls }
}

/// Builds the building and draws its crowd parameters: report periods
/// `n * TI` with n uniform in 1..=5, flow rates uniform in the workload's
/// range, and integer initial populations uniform in `[0, objects]` capped at
/// capacity, all recorded at the workload's snapshot time.
pub fn generate_space(space: &SpaceSpec, workload: &WorkloadSpec) -> Result<GeneratedSpace, SimgenError> {
    space.validate()?;
    workload.validate()?;
    let mut layout_rng = rng_stream(space.seed, 0);
    let mut crowd_rng = rng_stream(workload.seed, 1);

    let mut partitions = Vec::new();
    let mut doors = Vec::new();
    let mut per_floor = (0, 0);
    let mut corner_halls: Vec<Vec<u32>> = Vec::new();
    let mut queues = 0;
    for f in 0..space.floors as i32 {
        let mut fl = floor_template(f, partitions.len() as u32, doors.len() as u32);
        per_floor = (fl.partitions.len(), fl.doors.len());
        let picks = sample(&mut layout_rng, fl.two_door_rooms.len(), space.q_partitions_per_floor);
        let p0 = partitions.len() as u32;
        for k in picks.iter() {
            let room = fl.two_door_rooms[k];
            fl.partitions[(room - p0) as usize].kind = PartitionKind::Queue;
            queues += 1;
        }
        corner_halls.push(STAIR_CORNERS.iter().map(|&(i, j)| fl.halls[j * BLOCKS + i]).collect());
        partitions.extend(fl.partitions);
        doors.extend(fl.doors);
    }

    let mut stairways = 0;
    for f in 0..space.floors as usize - 1 {
        for (c, &(i, j)) in STAIR_CORNERS.iter().enumerate() {
            let (x, y) = (i as f64 * BLOCK + HALL_WIDTH / 2.0, j as f64 * BLOCK + HALL_WIDTH / 2.0);
            let id = partitions.len() as u32;
            let (lower, upper) = (doors.len() as u32, doors.len() as u32 + 1);
            for (k, fl) in [(lower, f), (upper, f + 1)] {
                doors.push(DoorDoc {
                    id: k,
                    x,
                    y,
                    floor: fl as i32,
                    report_period_sec: 1,
                    report_origin: 0,
                    directed_pairs: bidirectional(id, corner_halls[fl][c]),
                });
            }
            let half = HALL_WIDTH / 2.0;
            partitions.push(PartitionDoc {
                id,
                kind: PartitionKind::Random,
                area: space.stairway_length * 2.0,
                max_density: 1.0,
                floor: f as i32,
                bbox: Some([x - half, y - half, x + half, y + half]),
                polygon: None,
                d2d_overrides: vec![(lower, upper, space.stairway_length)],
            });
            stairways += 1;
        }
    }

    for p in &mut partitions {
        p.max_density = space.beta;
    }
    for d in &mut doors {
        d.report_period_sec = crowd_rng.random_range(1..=5) * workload.ti;
    }
    let [lo, hi] = workload.lambda_range;
    let mut flow_lambdas = Vec::new();
    for d in &doors {
        for &(a, b) in &d.directed_pairs {
            let lambda = if hi > lo { crowd_rng.random_range(lo..hi) } else { lo };
            flow_lambdas.push((a, b, d.id, lambda));
        }
    }
    let initial_populations = partitions
        .iter()
        .map(|p| {
            let drawn = crowd_rng.random_range(0..=workload.objects) as f64;
            (p.id, drawn.min((p.area * p.max_density).floor()), workload.snapshot_time)
        })
        .collect();

    let edges = flow_lambdas.len();
    let doc = ModelDocument { partitions, doors, initial_populations, flow_lambdas, flow_history: Vec::new() };
    let model = IndoorCrowdModel::from_document(doc)?;
    let metadata = SpaceMetadata {
        floors: space.floors,
        partitions_per_floor: per_floor.0,
        doors_per_floor: per_floor.1,
        stairways,
        partitions: model.partition_count(),
        doors: model.door_count(),
        edges,
        queue_partitions: queues,
        snapshot_time: workload.snapshot_time,
    };
    Ok(GeneratedSpace { model, metadata })
}
