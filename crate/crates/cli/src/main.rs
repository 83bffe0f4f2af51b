use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crowdroute::bench::{run_bench, write_outcomes_csv, write_rows_csv, Algorithm, BenchConfig};
use crowdroute::estimator::{EstimatorKind, NtConfig, Session};
use crowdroute::flows::{
    fit_lambda, ingest_trajectories, read_flow_history_csv, read_trajectories_csv, write_flow_history_csv,
    write_trajectories_csv, FlowHistory, DEFAULT_FIT_WINDOW, DEFAULT_SAMPLE_PERIOD,
};
use crowdroute::model::{EdgeId, IndoorCrowdModel, IndoorPoint, PartitionId, Timestamp};
use crowdroute::parallel::Execution;
use crowdroute::router::gtg::search_gtg;
use crowdroute::router::{search, QueryResult, QueryType, RouterError, RoutingConfig};
use crowdroute::simgen::{
    generate_space, generate_workload, simulate, QueryInstance, SimConfig, SimgenError, SpaceSpec, WorkloadSpec,
};

#[derive(Parser)]
#[command(name = "crowdroute", version, about = "Crowd-aware indoor routing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Model document (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Random seed; required by `bench`
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or directory for `gen`. Standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// global, local, pp or nt.
    #[arg(long, global = true)]
    estimator: Option<String>,
    /// Deviation threshold of the nt estimator.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Walking speed in m/s.
    #[arg(long, global = true)]
    speed: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic building and query workload.
    Gen(GenArgs),
    /// Fit door flow rates from trajectories or a flow history.
    Fit(FitArgs),
    /// Derive partition populations at a timestamp.
    Estimate(EstimateArgs),
    /// Answer one routing query.
    Query(QueryArgs),
    /// Simulate individual objects moving through the model.
    Sim(SimArgs),
    /// Convert the model to a door graph and report its size, or route on it.
    Gtg(GtgArgs),
    /// Run every algorithm over a workload and score it against simulation.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Space spec JSON; defaults apply to missing fields.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Workload spec JSON; defaults apply to missing fields.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long)]
    floors: Option<u32>,
    #[arg(long)]
    objects: Option<u32>,
    #[arg(long)]
    ti: Option<i64>,
    #[arg(long)]
    s2t: Option<f64>,
    #[arg(long)]
    instances: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// Trajectory CSV `objectId,timestamp,partitionId,x,y`.
    #[arg(long, conflicts_with = "flows")]
    trajectories: Option<PathBuf>,
    /// Flow-history CSV `fromPartition,toPartition,door,timestamp,flow`.
    #[arg(long)]
    flows: Option<PathBuf>,
    /// Number of most recent samples per edge.
    #[arg(long, default_value_t = DEFAULT_FIT_WINDOW)]
    window: usize,
    /// Sampling period when counting trajectory crossings.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_PERIOD)]
    period: i64,
    /// Also write the counted flow history here.
    #[arg(long)]
    history_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    at: Timestamp,
    /// Only this partition.
    #[arg(long)]
    partition: Option<u32>,
    /// Dump every ledger entry instead of the populations at `--at`.
    #[arg(long)]
    ledger: bool,
}

#[derive(Args)]
struct QueryArgs {
    /// Query request JSON.
    #[arg(long)]
    query: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    /// Last simulated timestamp.
    #[arg(long)]
    horizon: Timestamp,
    /// Write object trajectories to this CSV.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Write per-edge crossing counts to this CSV.
    #[arg(long)]
    flows: Option<PathBuf>,
}

#[derive(Args)]
struct GtgArgs {
    /// Route this request on the door graph instead of printing its size.
    #[arg(long)]
    query: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Workload file written by `gen`.
    #[arg(long)]
    workload: PathBuf,
    /// Comma-separated subset of exact-local, exact-global, pp, nt, gtg,
    /// adaptive.
    #[arg(long, default_value = "exact-local,exact-global,pp,nt,gtg,adaptive")]
    algorithms: String,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long = "type", default_value = "fpq")]
    query_type: String,
    /// Shard instances across threads.
    #[arg(long)]
    parallel: bool,
    /// Directory for per-instance outcome CSVs, one file per algorithm.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Name and value of the varied parameter, copied into every row.
    #[arg(long, default_value = "")]
    parameter: String,
    #[arg(long, default_value = "")]
    value: String,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    NoPath,
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::NoPath => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::NoPath => write!(f, "no path"),
            Failure::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<RouterError> for Failure {
    fn from(e: RouterError) -> Self {
        match e {
            RouterError::NoPath => Failure::NoPath,
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<SimgenError> for Failure {
    fn from(e: SimgenError) -> Self {
        match e {
            SimgenError::Router(r) => r.into(),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Opens `path` for writing, or standard output.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => fs::File::create(p)
            .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = sink(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.write_all(b"\n")).and_then(|_| w.flush()).map_err(|e| Failure::Io(e.to_string()))
}

fn csv_failure(e: impl std::fmt::Display) -> Failure {
    let text = e.to_string();
    if text.contains("os error") || text.to_lowercase().contains("i/o") {
        Failure::Io(text)
    } else {
        invalid(text)
    }
}

impl Global {
    fn model(&self) -> Result<IndoorCrowdModel> {
        let path = self.model.as_deref().ok_or_else(|| invalid("--model is required"))?;
        IndoorCrowdModel::from_json(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    fn estimator(&self, fallback: EstimatorKind) -> Result<EstimatorKind> {
        match &self.estimator {
            None => Ok(fallback),
            Some(s) => EstimatorKind::parse(s).ok_or_else(|| invalid(format!("unknown estimator {s:?}"))),
        }
    }

    fn routing(&self, estimator: EstimatorKind) -> Result<RoutingConfig> {
        let mut cfg = RoutingConfig { estimator: self.estimator(estimator)?, ..RoutingConfig::default() };
        if let Some(s) = self.speed {
            cfg.speed = s;
        }
        if let Some(eta) = self.eta {
            cfg.nt = NtConfig { eta, ..cfg.nt };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    #[serde(rename = "type")]
    query_type: QueryType,
    source: IndoorPoint,
    target: IndoorPoint,
    time: Timestamp,
    #[serde(default)]
    estimator: Option<String>,
}

impl QueryRequest {
    fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    fn estimator(&self) -> Result<EstimatorKind> {
        match &self.estimator {
            None => Ok(EstimatorKind::Local),
            Some(s) => EstimatorKind::parse(s).ok_or_else(|| invalid(format!("unknown estimator {s:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WorkloadFile {
    spec: WorkloadSpec,
    instances: Vec<QueryInstance>,
}

fn cmd_gen(g: &Global, a: &GenArgs) -> Result<()> {
    let mut space: SpaceSpec = match &a.space {
        Some(p) => read_json(p)?,
        None => SpaceSpec::default(),
    };
    let mut workload: WorkloadSpec = match &a.workload {
        Some(p) => read_json(p)?,
        None => WorkloadSpec::default(),
    };
    if let Some(seed) = g.seed {
        space.seed = seed;
        workload.seed = seed;
    }
    if let Some(v) = a.floors {
        space.floors = v;
    }
    if let Some(v) = a.objects {
        workload.objects = v;
    }
    if let Some(v) = a.ti {
        workload.ti = v;
    }
    if let Some(v) = a.s2t {
        workload.s2t = v;
    }
    if let Some(v) = a.instances {
        workload.instances = v;
    }
    let generated = generate_space(&space, &workload)?;
    let instances = generate_workload(&generated.model, &workload)?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    write_text(Some(&dir.join("model.json")), &generated.model.to_json())?;
    let file = WorkloadFile { spec: workload, instances };
    write_text(Some(&dir.join("workload.json")), &serde_json::to_string_pretty(&file).unwrap())?;
    write_text(Some(&dir.join("metadata.json")), &serde_json::to_string_pretty(&generated.metadata).unwrap())?;
    Ok(())
}

fn cmd_fit(g: &Global, a: &FitArgs) -> Result<()> {
    let model = g.model()?;
    let histories: Vec<FlowHistory> = match (&a.trajectories, &a.flows) {
        (Some(p), _) => {
            let file = fs::File::open(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            let trajectories = read_trajectories_csv(file).map_err(csv_failure)?;
            let report = ingest_trajectories(&model, &trajectories, a.period).map_err(invalid)?;
            eprintln!(
                "{} certain and {} uncertain crossings, {} unresolved, {} points outside the model",
                report.certain_hops, report.uncertain_hops, report.unresolved_hops, report.skipped_points
            );
            report.histories
        }
        (None, Some(p)) => {
            let file = fs::File::open(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            read_flow_history_csv(&model, file).map_err(csv_failure)?
        }
        (None, None) => return Err(invalid("one of --trajectories or --flows is required")),
    };
    if let Some(p) = &a.history_out {
        let w = sink(Some(p))?;
        write_flow_history_csv(&model, w, &histories).map_err(csv_failure)?;
    }
    let mut lambdas: Vec<(EdgeId, f64)> = model.edges().iter().map(|e| (e.id, e.lambda)).collect();
    let mut observed = vec![Vec::new(); model.edges().len()];
    for h in &histories {
        if h.samples.is_empty() {
            continue;
        }
        lambdas[h.edge.index()].1 = fit_lambda(&h.samples, a.window).map_err(invalid)?;
        observed[h.edge.index()] = h.samples.clone();
    }
    let fitted = model.with_lambdas(&lambdas).and_then(|m| m.with_observed(observed)).map_err(invalid)?;
    write_text(g.out.as_deref(), &fitted.to_json())
}

fn cmd_estimate(g: &Global, a: &EstimateArgs) -> Result<()> {
    let model = g.model()?;
    let kind = g.estimator(EstimatorKind::Local)?;
    let nt = NtConfig { eta: g.eta.unwrap_or(NtConfig::default().eta), ..NtConfig::default() };
    let mut session = Session::with_nt(&model, kind, nt);
    let partitions: Vec<PartitionId> = match a.partition {
        Some(v) => {
            model.try_partition(PartitionId(v)).map_err(invalid)?;
            vec![PartitionId(v)]
        }
        None => (0..model.partition_count()).map(|v| PartitionId(v as u32)).collect(),
    };
    let mut rows = Vec::new();
    for &v in &partitions {
        let p = session.population(v, a.at).map_err(invalid)?;
        rows.push((v, a.at, p));
    }
    if a.ledger {
        rows = session.ledger_rows().into_iter().filter(|r| partitions.contains(&r.0)).collect();
    }
    let mut w = csv::Writer::from_writer(sink(g.out.as_deref())?);
    w.write_record(["partitionId", "timestamp", "population"]).map_err(csv_failure)?;
    for (v, t, p) in rows {
        w.write_record([v.0.to_string(), t.to_string(), p.to_string()]).map_err(csv_failure)?;
    }
    w.flush().map_err(|e| Failure::Io(e.to_string()))
}

fn print_result(g: &Global, r: &QueryResult) -> Result<()> {
    write_text(g.out.as_deref(), &serde_json::to_string_pretty(r).unwrap())
}

fn cmd_query(g: &Global, a: &QueryArgs) -> Result<()> {
    let model = g.model()?;
    let q = QueryRequest::load(&a.query)?;
    let cfg = g.routing(q.estimator()?)?;
    let r = search(&model, &q.source, &q.target, q.time, q.query_type, &cfg)?;
    print_result(g, &r)
}

fn cmd_sim(g: &Global, a: &SimArgs) -> Result<()> {
    let model = g.model()?;
    let cfg = SimConfig {
        trajectories: a.trajectories.is_some(),
        record_flows: a.flows.is_some(),
        ..SimConfig::new(a.horizon, g.seed.unwrap_or(0))
    };
    let state = simulate(&model, &cfg);
    if let Some(p) = &a.trajectories {
        write_trajectories_csv(sink(Some(p))?, &state.trajectories).map_err(csv_failure)?;
    }
    if let Some(p) = &a.flows {
        let histories: Vec<FlowHistory> = state
            .flows
            .iter()
            .enumerate()
            .map(|(e, samples)| FlowHistory { edge: EdgeId(e as u32), samples: samples.clone() })
            .collect();
        write_flow_history_csv(&model, sink(Some(p))?, &histories).map_err(csv_failure)?;
    }
    let mut w = csv::Writer::from_writer(sink(g.out.as_deref())?);
    w.write_record(["partitionId", "timestamp", "population"]).map_err(csv_failure)?;
    for (v, &p) in state.initial.iter().enumerate() {
        w.write_record([v.to_string(), state.start.to_string(), p.to_string()]).map_err(csv_failure)?;
    }
    for (t, pops) in state.stamps.iter().zip(&state.populations) {
        for (v, p) in pops.iter().enumerate() {
            w.write_record([v.to_string(), t.to_string(), p.to_string()]).map_err(csv_failure)?;
        }
    }
    w.flush().map_err(|e| Failure::Io(e.to_string()))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GraphSize {
    indoor_vertices: usize,
    indoor_edges: usize,
    gtg_vertices: usize,
    gtg_edges: usize,
}

fn cmd_gtg(g: &Global, a: &GtgArgs) -> Result<()> {
    let model = g.model()?;
    let gtg = model.to_gtg();
    match &a.query {
        None => {
            let size = GraphSize {
                indoor_vertices: model.partition_count(),
                indoor_edges: model.edges().len(),
                gtg_vertices: gtg.vertex_count(),
                gtg_edges: gtg.edges().len(),
            };
            write_text(g.out.as_deref(), &serde_json::to_string_pretty(&size).unwrap())
        }
        Some(p) => {
            let q = QueryRequest::load(p)?;
            let cfg = g.routing(q.estimator()?)?;
            let r = search_gtg(&gtg, &q.source, &q.target, q.time, q.query_type, &cfg)?;
            print_result(g, &r)
        }
    }
}

fn cmd_bench(g: &Global, a: &BenchArgs) -> Result<()> {
    let seed = g.seed.ok_or_else(|| invalid("--seed is required for bench"))?;
    let model = g.model()?;
    let workload: WorkloadFile = read_json(&a.workload)?;
    let algorithms = a
        .algorithms
        .split(',')
        .map(|s| Algorithm::parse(s.trim()).ok_or_else(|| invalid(format!("unknown algorithm {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let query_type = QueryType::parse(&a.query_type).ok_or_else(|| invalid(format!("unknown query type {:?}", a.query_type)))?;
    let cfg = BenchConfig {
        algorithms,
        repeats: a.repeats,
        query_type,
        routing: g.routing(EstimatorKind::Local)?,
        execution: if a.parallel { Execution::Parallel } else { Execution::Sequential },
        sim_seed: seed,
        parameter: a.parameter.clone(),
        parameter_value: a.value.clone(),
    };
    let out = run_bench(&model, &workload.instances, workload.spec.snapshot_time, &cfg)?;
    write_rows_csv(sink(g.out.as_deref())?, &out.rows).map_err(csv_failure)?;
    if let Some(dir) = &a.outcomes {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        for (row, outcomes) in out.rows.iter().zip(&out.outcomes) {
            let path = dir.join(format!("{}.csv", row.algorithm));
            write_outcomes_csv(sink(Some(&path))?, outcomes).map_err(csv_failure)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen(a) => cmd_gen(g, a),
        Command::Fit(a) => cmd_fit(g, a),
        Command::Estimate(a) => cmd_estimate(g, a),
        Command::Query(a) => cmd_query(g, a),
        Command::Sim(a) => cmd_sim(g, a),
        Command::Gtg(a) => cmd_gtg(g, a),
        Command::Bench(a) => cmd_bench(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crowdroute: {e}");
            ExitCode::from(e.code())
        }
    }
}
