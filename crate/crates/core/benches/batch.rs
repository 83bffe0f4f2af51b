use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use crowdroute::bench::{run_algorithm, Algorithm};
use crowdroute::parallel::{map_ordered, Execution};
use crowdroute::simgen::{generate_space, generate_workload, SpaceSpec, WorkloadSpec};
use crowdroute::{QueryType, RoutingConfig};

fn workload() -> (crowdroute::IndoorCrowdModel, Vec<crowdroute::simgen::QueryInstance>, i64) {
    let spec = WorkloadSpec { instances: 16, s2t: 600.0, ..WorkloadSpec::default() };
    let space = generate_space(&SpaceSpec { floors: 3, ..SpaceSpec::default() }, &spec).unwrap();
    let instances = generate_workload(&space.model, &spec).unwrap();
    (space.model, instances, spec.snapshot_time)
}

/// One batch of queries, sequential against data-parallel.
fn batch(c: &mut Criterion) {
    let (model, instances, t_q) = workload();
    let gtg = model.to_gtg();
    let cfg = RoutingConfig::default();
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for alg in [Algorithm::ExactLocal, Algorithm::Pp, Algorithm::Nt] {
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(BenchmarkId::new(alg.name(), exec.name()), &exec, |b, &exec| {
                b.iter(|| {
                    map_ordered(&instances, exec, |inst| {
                        run_algorithm(&model, &gtg, alg, inst, t_q, QueryType::Fpq, &cfg).map(|r| r.totals)
                    })
                    .into_iter()
                    .for_each(|r| {
                        black_box(r.unwrap());
                    })
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
