use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdroute")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fastest_query_on_the_hallway_floorplan() {
    let model = fixture("hallway_floorplan.json");
    let query = fixture("hallway_fpq_query.json");
    let o = run(&["query", "--model", p(&model), "--query", p(&query), "--speed", "1.25"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let doors: Vec<u64> = v["path"]["doors"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap()).collect();
    assert_eq!(doors, vec![0, 3, 6, 8]);
    assert!(v["totals"]["time"].as_f64().unwrap() > 70.0);
}

#[test]
fn malformed_query_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("q.json");
    fs::write(&bad, "{ not json").unwrap();
    let o = run(&["query", "--model", p(&fixture("hallway_floorplan.json")), "--query", p(&bad)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unreachable_target_exits_with_no_path() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    fs::write(
        &model,
        r#"{
          "partitions": [
            {"id": 0, "kind": "R", "area": 100, "maxDensity": 1, "bbox": [0, 0, 10, 10]},
            {"id": 1, "kind": "R", "area": 100, "maxDensity": 1, "bbox": [10, 0, 20, 10]}
          ],
          "doors": [{"id": 0, "x": 10, "y": 5, "reportPeriodSec": 10, "directedPairs": [[1, 0]]}],
          "initialPopulations": [[0, 0, 0], [1, 0, 0]],
          "flowLambdas": [[1, 0, 0, 0.5]]
        }"#,
    )
    .unwrap();
    let query = dir.path().join("q.json");
    fs::write(
        &query,
        r#"{"type": "fpq", "source": {"partition": 0, "x": 2, "y": 2}, "target": {"partition": 1, "x": 15, "y": 5}, "time": 0}"#,
    )
    .unwrap();
    let o = run(&["query", "--model", p(&model), "--query", p(&query)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn missing_model_file_is_an_io_error() {
    let o = run(&["gtg", "--model", "/nonexistent/model.json"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn door_graph_of_the_concourse_fixture() {
    let o = run(&["gtg", "--model", p(&fixture("one_way_concourse.json"))]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["indoorVertices"], 18);
    assert_eq!(v["indoorEdges"], 21);
    assert_eq!(v["gtgVertices"], 21);
    assert_eq!(v["gtgEdges"], 54);
}

#[test]
fn estimate_prints_rectified_populations() {
    let o = run(&["estimate", "--model", p(&fixture("rectification_three_rooms.json")), "--at", "10", "--estimator", "global"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("partitionId,timestamp,population"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows, vec!["0,10,2", "1,10,8", "2,10,5"]);

    let ledger = run(&["estimate", "--model", p(&fixture("rectification_three_rooms.json")), "--at", "10", "--ledger"]);
    assert!(stdout(&ledger).lines().count() >= 7);
}

#[test]
fn unknown_estimator_is_rejected() {
    let o = run(&["estimate", "--model", p(&fixture("hallway_floorplan.json")), "--at", "10", "--estimator", "magic"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_rejects_out_of_domain_floors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--floors", "4", "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);
}

fn small_gen(dir: &Path, seed: &str) -> Output {
    run(&["gen", "--floors", "3", "--instances", "2", "--s2t", "300", "--seed", seed, "--out", p(dir)])
}

#[test]
fn gen_is_deterministic_and_feeds_bench() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_gen(a.path(), "7")), 0);
    assert_eq!(code(&small_gen(b.path(), "7")), 0);
    for f in ["model.json", "workload.json", "metadata.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["floors"], 3);

    let model = a.path().join("model.json");
    let workload = a.path().join("workload.json");
    let no_seed = run(&["bench", "--model", p(&model), "--workload", p(&workload), "--repeats", "1"]);
    assert_eq!(code(&no_seed), 2);

    let outcomes = a.path().join("outcomes");
    let o = run(&[
        "bench",
        "--model",
        p(&model),
        "--workload",
        p(&workload),
        "--seed",
        "3",
        "--repeats",
        "1",
        "--algorithms",
        "exact-local,nt",
        "--outcomes",
        p(&outcomes),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("algorithm,queryType,parameter,parameterValue,instances,repeats,meanWallTimeMs"));
    assert_eq!(lines.count(), 2);
    let local = fs::read_to_string(outcomes.join("exact-local.csv")).unwrap();
    assert!(local.starts_with("instance,hit,gamma,wallTimeMs,peakLedgerEntries"));
    assert_eq!(local.lines().count(), 3);
}

#[test]
fn simulated_flows_fit_back_into_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixture("rectification_three_rooms.json");
    let flows = dir.path().join("flows.csv");
    let pops = dir.path().join("pops.csv");
    let o = run(&["sim", "--model", p(&model), "--horizon", "200", "--seed", "1", "--flows", p(&flows), "--out", p(&pops)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&pops).unwrap().starts_with("partitionId,timestamp,population"));
    assert!(fs::read_to_string(&flows).unwrap().starts_with("fromPartition,toPartition,door,timestamp,flow"));

    let fitted = dir.path().join("fitted.json");
    let o = run(&["fit", "--model", p(&model), "--flows", p(&flows), "--out", p(&fitted)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&fitted).unwrap()).unwrap();
    assert!(!v["flowLambdas"].as_array().unwrap().is_empty());
    assert!(!v["flowHistory"].as_array().unwrap().is_empty());
}
