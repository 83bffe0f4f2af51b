use crowdroute::simgen::{
    generate_space, generate_workload, relative_error, shortest_distance, simulate, SimConfig, SimgenError,
    SpaceSpec, WorkloadSpec,
};
use crowdroute::{PartitionId, PartitionKind};

fn small() -> (SpaceSpec, WorkloadSpec) {
    (SpaceSpec { floors: 3, ..SpaceSpec::default() }, WorkloadSpec { instances: 5, ..WorkloadSpec::default() })
}

#[test]
fn floor_template_counts() {
    let (space, workload) = small();
    let g = generate_space(&space, &workload).unwrap();
    let m = &g.metadata;
    assert_eq!((m.partitions_per_floor, m.doors_per_floor), (141, 216));
    assert_eq!(m.stairways, 8);
    assert_eq!(m.partitions, 3 * 141 + 8);
    assert_eq!(m.doors, 3 * 216 + 16);
    assert_eq!(m.queue_partitions, 42);
    let model = &g.model;
    for p in model.partitions() {
        if p.kind == PartitionKind::Queue {
            assert_eq!(p.d2d.doors().len(), 2);
        }
        assert!(model.record(p.id).population <= p.capacity());
        assert_eq!(model.record(p.id).timestamp, 1000);
    }
    for d in model.doors() {
        assert!([10, 20, 30, 40, 50].contains(&d.schedule.period));
    }
    assert!(model.edges().iter().all(|e| (0.0..=3.0).contains(&e.lambda)));
}

#[test]
fn generation_is_deterministic() {
    let (space, workload) = small();
    let a = generate_space(&space, &workload).unwrap().model.to_json();
    let b = generate_space(&space, &workload).unwrap().model.to_json();
    assert_eq!(a, b);
    let other = generate_space(&SpaceSpec { seed: 2, ..space }, &workload).unwrap().model.to_json();
    assert_ne!(a, other);
}

#[test]
fn out_of_domain_specs_are_rejected() {
    let (space, workload) = small();
    assert!(matches!(generate_space(&SpaceSpec { floors: 4, ..space.clone() }, &workload), Err(SimgenError::Spec(_))));
    assert!(matches!(generate_space(&space, &WorkloadSpec { ti: 7, ..workload.clone() }), Err(SimgenError::Spec(_))));
    assert!(matches!(generate_space(&space, &WorkloadSpec { s2t: 0.0, ..workload }), Err(SimgenError::Spec(_))));
}

#[test]
fn capacity_follows_beta() {
    let (space, workload) = small();
    let g = generate_space(&SpaceSpec { beta: 0.5, ..space }, &workload).unwrap();
    for p in g.model.partitions() {
        assert!((p.capacity() - 0.5 * p.area).abs() < 1e-9);
    }
}

#[test]
fn workload_distances_hit_the_target_band() {
    let (space, workload) = small();
    let g = generate_space(&space, &workload).unwrap();
    let instances = generate_workload(&g.model, &workload).unwrap();
    assert_eq!(instances.len(), 5);
    for inst in &instances {
        let d = shortest_distance(&g.model, &inst.source, &inst.target).unwrap();
        assert!((d - 1300.0).abs() <= 65.0, "distance {d}");
    }
    assert_eq!(instances, generate_workload(&g.model, &workload).unwrap());
}

#[test]
fn unrealizable_distance_names_the_limit() {
    let (space, workload) = small();
    let g = generate_space(&space, &workload).unwrap();
    let err = generate_workload(&g.model, &WorkloadSpec { s2t: 1e6, instances: 1, ..workload }).unwrap_err();
    match err {
        SimgenError::Unrealizable { max_realizable, .. } => assert!(max_realizable > 1000.0 && max_realizable < 1e6),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn simulation_conserves_objects_and_queues_are_fifo() {
    let (space, workload) = small();
    let g = generate_space(&space, &workload).unwrap();
    let sim = simulate(&g.model, &SimConfig::new(1600, 9));
    assert!(!sim.stamps.is_empty());
    for k in 0..sim.stamps.len() {
        assert_eq!(sim.total_at(k), sim.objects as u64);
    }
    assert!(sim.max_outflow_share <= 1.0);
    assert!(sim.queues.iter().flatten().all(|q| q.is_fifo()));
    assert!(sim.queues.iter().flatten().any(|q| !q.leaves.is_empty()));
    let again = simulate(&g.model, &SimConfig::new(1600, 9));
    assert_eq!(sim.populations, again.populations);
    assert!(sim.population(PartitionId(0), 1601).is_err());
}

#[test]
fn gamma_formula() {
    assert!((relative_error(110.0, 100.0) - 0.1).abs() < 1e-12);
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!(relative_error(1.0, 0.0).is_infinite());
}
