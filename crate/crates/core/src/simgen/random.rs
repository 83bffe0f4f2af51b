//! Small random closed models for property tests and oracles.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::model::{DoorDoc, IndoorCrowdModel, ModelDocument, PartitionDoc, PartitionKind, Timestamp};

use super::rng_stream;

const CELL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RandomModelSpec {
    pub min_partitions: usize,
    pub max_partitions: usize,
    /// Probability that a door lets objects through in one direction only.
    pub one_way: f64,
    /// Probability that a partition is a queue.
    pub queues: f64,
    /// Probability of a door between grid neighbours beyond a spanning tree.
    pub extra_doors: f64,
    pub lambda_max: f64,
    /// Initial populations are uniform in `[min_fill, max_fill]` of capacity.
    pub min_fill: f64,
    pub max_fill: f64,
    pub periods: Vec<i64>,
    /// Report origins uniform in `[0, period)` instead of 0.
    pub random_origins: bool,
    /// Record some partitions' populations later than others.
    pub staggered_records: bool,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        Self {
            min_partitions: 2,
            max_partitions: 10,
            one_way: 0.2,
            queues: 0.25,
            extra_doors: 0.3,
            lambda_max: 3.0,
            min_fill: 0.0,
            max_fill: 1.0,
            periods: vec![5, 10, 15, 20],
            random_origins: true,
            staggered_records: false,
        }
    }
}

/// Partitions are 10 m square cells on a grid; doors sit at random points of
/// shared cell walls. Every flow stays inside the model.
pub fn random_model(spec: &RandomModelSpec, seed: u64) -> IndoorCrowdModel {
    let mut rng = rng_stream(seed, 7);
    let n = rng.random_range(spec.min_partitions..=spec.max_partitions);
    let cols = (n as f64).sqrt().ceil() as usize;
    let cell = |k: usize| ((k % cols) as f64 * CELL, (k / cols) as f64 * CELL);

    let partitions: Vec<PartitionDoc> = (0..n)
        .map(|k| {
            let (x, y) = cell(k);
            let queue = rng.random_bool(spec.queues);
            PartitionDoc {
                id: k as u32,
                kind: if queue { PartitionKind::Queue } else { PartitionKind::Random },
                area: CELL * CELL,
                max_density: rng.random_range(0.1..=1.0),
                floor: 0,
                bbox: Some([x, y, x + CELL, y + CELL]),
                polygon: None,
                d2d_overrides: Vec::new(),
            }
        })
        .collect();

    let mut walls = Vec::new();
    for k in 0..n {
        if k % cols + 1 < cols && k + 1 < n {
            walls.push((k, k + 1));
        }
        if k + cols < n {
            walls.push((k, k + cols));
        }
    }
    walls.shuffle(&mut rng);
    let mut component: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut k: usize) -> usize {
        while c[k] != k {
            c[k] = c[c[k]];
            k = c[k];
        }
        k
    }
    let mut chosen = Vec::new();
    for &(a, b) in &walls {
        let (ra, rb) = (root(&mut component, a), root(&mut component, b));
        if ra != rb {
            component[ra] = rb;
            chosen.push((a, b));
        } else if rng.random_bool(spec.extra_doors) {
            chosen.push((a, b));
        }
    }
    chosen.sort_unstable();

    let mut doors = Vec::new();
    let mut lambdas = Vec::new();
    for (i, &(a, b)) in chosen.iter().enumerate() {
        let (ax, ay) = cell(a);
        let offset = rng.random_range(1.0..CELL - 1.0);
        let (x, y) = if b == a + 1 { (ax + CELL, ay + offset) } else { (ax + offset, ay + CELL) };
        let (a, b) = (a as u32, b as u32);
        let pairs = if rng.random_bool(spec.one_way) {
            if rng.random_bool(0.5) {
                vec![(a, b)]
            } else {
                vec![(b, a)]
            }
        } else {
            vec![(a, b), (b, a)]
        };
        for &(from, to) in &pairs {
            lambdas.push((from, to, i as u32, rng.random_range(0.0..=spec.lambda_max)));
        }
        let period = *spec.periods.choose(&mut rng).expect("at least one period");
        doors.push(DoorDoc {
            id: i as u32,
            x,
            y,
            floor: 0,
            report_period_sec: period,
            report_origin: if spec.random_origins { rng.random_range(0..period) } else { 0 },
            directed_pairs: pairs,
        });
    }

    let shortest = *spec.periods.iter().min().unwrap();
    let populations = partitions
        .iter()
        .map(|p| {
            let cap = p.area * p.max_density;
            let fill = rng.random_range(spec.min_fill..=spec.max_fill);
            let at: Timestamp = if spec.staggered_records { shortest * rng.random_range(0..3) } else { 0 };
            (p.id, (cap * fill).floor(), at)
        })
        .collect();

    let doc = ModelDocument { partitions, doors, initial_populations: populations, flow_lambdas: lambdas, flow_history: Vec::new() };
    IndoorCrowdModel::from_document(doc).expect("random models are valid by construction")
}
