//! Headless front end: automatic queries, direct route planning and
//! monitoring from files, and catalog checks.
//!
//! Exit codes: 0 success, 1 the request failed on its own terms (failed
//! session, no route), 2 bad input or configuration.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use metaroute::agent::{AgentError, ProviderSpec};
use metaroute::catalog::{load_catalog, CatalogError, NodeKind};
use metaroute::ingest::{
    read_geojson, read_json_records, Gazetteer, GeoTable, IngestError, StubVisualAnswerer,
};
use metaroute::pipeline::{DataContext, Environment, Mode, PipelineError, ResultKind, Stage};
use metaroute::planner::{k_fastest_routes, monitor_routes, PlanError, RouteModel};
use metaroute::roadgraph::{build_graph, nearest_node, spatial_join, RoadGraph, DEFAULT_JOIN_TOLERANCE_M};

#[derive(Debug, Parser)]
#[command(name = "metaroute", version, about = "Metadata-guided transport queries and route planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer a query in automatic mode.
    Query(QueryArgs),
    /// Plan one route over a road network file.
    Plan(PlanArgs),
    /// List the fastest routes and what lies along them.
    Monitor(MonitorArgs),
    /// Load a catalog and report whether it is well formed.
    CatalogValidate {
        #[arg(long, default_value = "fixtures/catalog.json")]
        catalog: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliMode {
    Automatic,
    Control,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub query: String,
    #[arg(long, default_value = "fixtures/catalog.json")]
    pub catalog: PathBuf,
    #[arg(long, default_value = "fixtures/gazetteer.json")]
    pub gazetteer: PathBuf,
    #[arg(long, default_value = "fixtures/data")]
    pub data_root: PathBuf,
    /// Canned camera-image answers.
    #[arg(long)]
    pub vqa: Option<PathBuf>,
    /// scripted:PATH or wire:URL
    #[arg(long)]
    pub provider: ProviderSpec,
    /// Model name for a wire provider.
    #[arg(long)]
    pub model: Option<String>,
    /// Only automatic is available here.
    #[arg(long, value_enum, default_value = "automatic")]
    pub mode: CliMode,
    /// Where to write the route GeoJSON when the result is a route.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the session log as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Endpoints {
    /// Road segments as a GeoJSON FeatureCollection of LineStrings.
    pub graph: PathBuf,
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    #[arg(long, default_value = "fixtures/gazetteer.json")]
    pub gazetteer: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub endpoints: Endpoints,
    /// Driver, actions and constraints as JSON.
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub endpoints: Endpoints,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Point or line data to attach to the network (GeoJSON, or a JSON
    /// array of records with lat/lon). Repeatable.
    #[arg(long = "join")]
    pub joins: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Why a command did not succeed, with its exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Domain(String),
    Usage(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Domain(m) | Failure::Usage(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("json serializes");
    std::fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Runs one invocation, writing the human-readable result to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Query(a) => query(a, out),
        Command::Plan(a) => plan(a, out),
        Command::Monitor(a) => monitor(a, out),
        Command::CatalogValidate { catalog } => catalog_validate(&catalog, out),
    }
}

/// Parses `args`, runs, reports failures on `err` and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn query(a: QueryArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.mode == CliMode::Control {
        return Err(usage("control mode needs the web client; use --mode automatic"));
    }
    let catalog = load_catalog(&a.catalog).map_err(usage)?;
    let gazetteer = Gazetteer::load(&a.gazetteer).map_err(usage)?;
    if !a.data_root.is_dir() {
        return Err(usage(format!("data root {} is not a directory", a.data_root.display())));
    }
    let mut data = DataContext::new(&a.data_root, gazetteer);
    if let Some(v) = &a.vqa {
        data = data.with_vqa(Arc::new(StubVisualAnswerer::load(v).map_err(usage)?));
    }
    let spec = match a.model {
        Some(m) => a.provider.with_model(m),
        None => a.provider,
    };
    let provider = spec.build().map_err(usage)?;
    let env = Environment::new(Arc::new(catalog), provider, data);

    let mut session = env.open_session(&a.query, Mode::Automatic).map_err(usage)?;
    let outcome = env.run_session(&mut session);
    if let Some(path) = &a.log {
        std::fs::write(path, session.log_lines()).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    if let Err(e) = outcome {
        return Err(match &e {
            PipelineError::AgentFailure {
                error: AgentError::RefinementExhausted { report, calls },
                stage,
            } => Failure::Domain(format!(
                "session failed at {stage}: no valid decision after {calls} calls\n{report}"
            )),
            _ => Failure::Domain(format!("session failed: {e}")),
        });
    }
    debug_assert_eq!(session.stage, Stage::Done);
    let result = session.result.as_ref().expect("a finished session has a result");
    writeln!(out, "{}", result.text.trim_end()).map_err(usage)?;
    if let (Some(path), ResultKind::Route) = (&a.out, result.kind) {
        write_json(path, &result.payload)?;
        writeln!(out, "\nroute written to {}", path.display()).map_err(usage)?;
    }
    Ok(())
}

fn load_network(path: &Path) -> Result<RoadGraph, Failure> {
    let segments = read_geojson(path, "network").map_err(usage)?;
    build_graph(&segments).map_err(usage)
}

fn resolve(e: &Endpoints, g: &RoadGraph) -> Result<(metaroute::roadgraph::NodeId, metaroute::roadgraph::NodeId), Failure> {
    let gazetteer = Gazetteer::load(&e.gazetteer).map_err(usage)?;
    let node = |name: &str| {
        let p = gazetteer.geocode(name).map_err(usage)?;
        nearest_node(g, p).map_err(usage)
    };
    Ok((node(&e.from)?, node(&e.to)?))
}

fn plan_failure(e: PlanError) -> Failure {
    match e {
        PlanError::NoRoute { .. } => Failure::Domain(e.to_string()),
        PlanError::InvalidModel(report) => Failure::Usage(format!("invalid route model:\n{report}")),
        other => Failure::Usage(other.to_string()),
    }
}

fn plan(a: PlanArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let g = load_network(&a.endpoints.graph)?;
    let model: RouteModel = RouteModel::load(&a.model).map_err(Failure::Usage)?;
    let report = model.validate(&g);
    if !report.is_valid() {
        return Err(Failure::Usage(format!("invalid route model:\n{report}")));
    }
    let (s, t) = resolve(&a.endpoints, &g)?;
    let route = model.plan(&g, s, t).map_err(plan_failure)?;
    writeln!(out, "objective {} = {}", model.driver.objective, route.objective_value).map_err(usage)?;
    writeln!(out, "edges: {}", route.edges.join(" ")).map_err(usage)?;
    if let Some(path) = &a.out {
        let mut doc = route.to_geojson(&g);
        doc["trace"] = serde_json::to_value(&route.trace).expect("trace serializes");
        write_json(path, &doc)?;
    }
    Ok(())
}

fn read_features(path: &Path) -> Result<GeoTable, IngestError> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("features");
    if path.extension().is_some_and(|e| e == "geojson") {
        return read_geojson(path, name);
    }
    let (table, geometry) = read_json_records(path, name)?;
    let geometry = geometry.ok_or_else(|| IngestError::Format(format!("{}: records need lat/lon", path.display())))?;
    GeoTable::new(table, geometry)
}

fn monitor(a: MonitorArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut g = load_network(&a.endpoints.graph)?;
    for path in &a.joins {
        let features = read_features(path).map_err(usage)?;
        g = spatial_join(&g, &features, DEFAULT_JOIN_TOLERANCE_M, Some("nid")).map_err(usage)?;
    }
    let (s, t) = resolve(&a.endpoints, &g)?;
    let routes = k_fastest_routes(&g, s, t, a.k).map_err(plan_failure)?;
    if routes.is_empty() {
        return Err(Failure::Domain(format!("no route from {} to {}", a.endpoints.from, a.endpoints.to)));
    }
    for (i, r) in routes.iter().enumerate() {
        writeln!(out, "route {}: {:.2} h over {} edges", i + 1, r.objective_value / 3600.0, r.edges.len())
            .map_err(usage)?;
    }
    let findings = monitor_routes(&routes, &g);
    writeln!(out, "\n{}", findings.to_text()).map_err(usage)?;
    if let Some(path) = &a.out {
        let features: Vec<Value> = routes
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                let mut fc = r.to_geojson(&g);
                let mut fs = fc["features"].take().as_array().cloned().unwrap_or_default();
                for f in &mut fs {
                    f["properties"]["rank"] = json!(i + 1);
                }
                fs
            })
            .collect();
        write_json(
            path,
            &json!({"type": "FeatureCollection", "features": features, "findings": findings}),
        )?;
    }
    Ok(())
}

fn catalog_validate(path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let catalog = load_catalog(path).map_err(|e| match e {
        CatalogError::Parse(_) => usage(&e),
        _ => Failure::Domain(e.to_string()),
    })?;
    let count = |k| catalog.nodes_by_kind(k).len();
    writeln!(
        out,
        "ok: {} nodes, {} edges ({} task types, {} objectives, {} interfaces, {} sources, {} resources, {} attributes)",
        catalog.nodes().len(),
        catalog.edges().len(),
        count(NodeKind::TaskType),
        count(NodeKind::Objective),
        count(NodeKind::Interface),
        count(NodeKind::DataSource),
        count(NodeKind::Resource),
        count(NodeKind::Attribute),
    )
    .map_err(usage)
}
