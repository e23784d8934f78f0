//! The five standard interfaces.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use crate::agent::{DecisionSchema, DecisionValue, FieldConstraint, FieldSpec};
use crate::catalog::{DataFormat, Relation};
use crate::geo::LatLon;
use crate::ingest::{
    fill_missing, retrieve_documents, run_query, spatial_filter, visual_annotate, AggFn, Aggregate, Direction,
    Filter, FilterOp, Loaded, Sort, Table, TableQuery, TableStore,
};
use crate::planner::{k_fastest_routes, monitor_routes, Comparator, Operation, RouteModel, MAX_FASTEST_ROUTES};
use crate::roadgraph::{
    build_graph, fill_missing_attributes, largest_component, nearest_node, spatial_join, RoadGraph,
    DEFAULT_JOIN_TOLERANCE_M,
};

use super::interfaces::{Interface, InterfaceContext, InterfaceFault};
use super::{InterfaceOutput, Provenance, ResultKind};

pub const INFORMATION_RETRIEVAL: &str = "interface.information_retrieval";
pub const LAW: &str = "interface.law";
pub const INTERNAL_DOCUMENTS: &str = "interface.internal_documents";
pub const ROUTE_PLANNING: &str = "interface.route_planning";
pub const ROUTE_MONITORING: &str = "interface.route_monitoring";

/// Documents returned per search.
pub const DOCUMENTS_PER_SEARCH: usize = 3;
/// Column holding image references for visual question answering.
pub const IMAGE_COLUMN: &str = "image";
/// Segment identifier used to join features onto road edges before geometry.
pub const NETWORK_KEY_COLUMN: &str = "nid";

const TABULAR: [DataFormat; 3] = [DataFormat::Tabular, DataFormat::Geospatial, DataFormat::ApiFixture];

fn fault(msg: impl Into<String>) -> InterfaceFault {
    InterfaceFault(msg.into())
}

fn place_names(ctx: &InterfaceContext<'_>) -> Result<Vec<String>, InterfaceFault> {
    let names: Vec<String> = ctx.data.gazetteer.names().map(str::to_string).collect();
    if names.is_empty() {
        return Err(fault("the gazetteer has no places"));
    }
    Ok(names)
}

fn locate(ctx: &InterfaceContext<'_>, name: &str) -> Result<LatLon, InterfaceFault> {
    Ok(ctx.data.gazetteer.geocode(name)?)
}

/// The committed road network, reduced to its main component, with every
/// other committed geospatial resource joined onto it.
fn road_network(ctx: &InterfaceContext<'_>) -> Result<(RoadGraph, Vec<Provenance>), InterfaceFault> {
    let resources = ctx.resources_in(&TABULAR);
    let network = resources
        .iter()
        .find(|r| r.network)
        .ok_or_else(|| fault("no road network resource is selected"))?;
    let Loaded::Geo(segments) = ctx.load(&network.id)? else {
        return Err(fault(format!("`{}` has no line geometry", network.id)));
    };
    let mut g: RoadGraph = largest_component(&build_graph(&segments)?)?;
    let mut provenance = vec![ctx.provenance(&network.id)];
    for r in resources.iter().filter(|r| !r.network) {
        if let Loaded::Geo(features) = ctx.load(&r.id)? {
            g = spatial_join(&g, &features, DEFAULT_JOIN_TOLERANCE_M, Some(NETWORK_KEY_COLUMN))?;
            provenance.push(ctx.provenance(&r.id));
        }
    }
    Ok((g, provenance))
}

fn endpoint_fields(places: &[String]) -> Vec<FieldSpec> {
    vec![
        FieldSpec::choice("origin", "Where the route starts.", places),
        FieldSpec::choice("destination", "Where the route ends.", places),
    ]
}

/// Answers from the committed tables: optional spatial filtering and visual
/// annotation, then one structured query.
#[derive(Debug, Clone, Copy, Default)]
pub struct InformationRetrieval;

impl InformationRetrieval {
    fn query_schema(store: &TableStore) -> DecisionSchema {
        let tables: Vec<&str> = store.keys().map(String::as_str).collect();
        let columns: Vec<&str> = store
            .values()
            .flat_map(|t| t.columns.iter().map(|c| c.name.as_str()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        DecisionSchema::new(vec![
            FieldSpec::choice("table", "Table to query.", &tables),
            FieldSpec::list_of(
                "filters",
                "Conditions every returned row meets.",
                vec![
                    FieldSpec::choice("column", "", &columns),
                    FieldSpec::choice("op", "", &FilterOp::SYMBOLS),
                    FieldSpec::text("value", "Compared value, written as text."),
                ],
            ),
            FieldSpec::list_of_choice("project", "Columns to return; empty returns all.", &columns),
            FieldSpec::choice("aggregate", "Aggregate over the filtered rows.", &["none", "count", "sum", "min", "max", "avg"]),
            FieldSpec::choice("aggregate_column", "Column to aggregate.", &columns).optional(),
            FieldSpec::choice("sort_column", "Column to sort by.", &columns).optional(),
            FieldSpec::boolean("descending", "Sort largest first.").optional(),
            FieldSpec::number("limit", "Maximum number of rows.")
                .with(FieldConstraint::Integer)
                .with(FieldConstraint::Range { min: Some(1.0), max: None })
                .optional(),
        ])
    }

    fn to_query(v: &DecisionValue) -> TableQuery {
        let mut q = TableQuery::all(v.str("table").unwrap_or_default());
        for f in v.get("filters").and_then(Value::as_array).into_iter().flatten() {
            let text = f["value"].as_str().unwrap_or_default().trim();
            let value = match text.parse::<f64>() {
                Ok(x) => json!(x),
                Err(_) => match text.to_ascii_lowercase().as_str() {
                    "true" => json!(true),
                    "false" => json!(false),
                    _ => json!(text),
                },
            };
            q.filters.push(Filter {
                column: f["column"].as_str().unwrap_or_default().to_string(),
                op: FilterOp::parse(f["op"].as_str().unwrap_or_default()).unwrap_or(FilterOp::Eq),
                value,
            });
        }
        q.project = v.strings("project");
        let func = match v.str("aggregate") {
            Some("count") => Some(AggFn::Count),
            Some("sum") => Some(AggFn::Sum),
            Some("min") => Some(AggFn::Min),
            Some("max") => Some(AggFn::Max),
            Some("avg") => Some(AggFn::Avg),
            _ => None,
        };
        q.aggregate = func.map(|func| Aggregate {
            func,
            column: v.str("aggregate_column").map(str::to_string),
        });
        q.sort = v.str("sort_column").map(|c| Sort {
            column: c.to_string(),
            direction: if v.bool("descending") == Some(true) { Direction::Desc } else { Direction::Asc },
        });
        q.limit = v.f64("limit").map(|n| n as usize);
        q
    }
}

impl Interface for InformationRetrieval {
    fn run(&self, ctx: &mut InterfaceContext<'_>) -> Result<InterfaceOutput, InterfaceFault> {
        let resources: Vec<String> = ctx.resources_in(&TABULAR).iter().map(|r| r.id.clone()).collect();
        if resources.is_empty() {
            return Err(fault("no tabular resource is selected"));
        }
        let mut loaded = Vec::new();
        for r in &resources {
            loaded.push((r.clone(), ctx.load(r)?));
        }

        let places: Vec<String> = ctx.data.gazetteer.names().map(str::to_string).collect();
        if !places.is_empty() && loaded.iter().any(|(_, l)| matches!(l, Loaded::Geo(_))) {
            let v = ctx.decide(
                "retrieval:spatial",
                "Some of the data is spatial. Decide whether location matters for this query; \
                 if it does, name the place and a radius of interest.",
                DecisionSchema::new(vec![
                    FieldSpec::choice("spatial", "Whether to filter by location.", &["yes", "no"]),
                    FieldSpec::choice("location", "Centre of the area of interest.", &places),
                    FieldSpec::number("radius_km", "Radius of interest in kilometres.")
                        .with(FieldConstraint::Range { min: Some(0.001), max: Some(20_000.0) }),
                ]),
            )?;
            if v.str("spatial") == Some("yes") {
                let center = locate(ctx, v.str("location").unwrap_or_default())?;
                let radius = v.f64("radius_km").unwrap_or(1.0);
                for (_, l) in &mut loaded {
                    if let Loaded::Geo(gt) = l {
                        *gt = spatial_filter(gt, center, radius);
                    }
                }
            }
        }

        let mut store = TableStore::new();
        for (r, l) in loaded {
            let Some(t) = l.table() else { continue };
            let mut t = t.clone();
            if t.column_index(IMAGE_COLUMN).is_some() {
                let v = ctx.decide(
                    &format!("retrieval:vqa:{r}"),
                    &format!("Table `{}` has camera images. Ask one question about each image that helps answer the query.", t.name),
                    DecisionSchema::new(vec![
                        FieldSpec::text("question", "A short question about the image.").with(FieldConstraint::NonEmpty),
                    ]),
                )?;
                t = visual_annotate(&t, IMAGE_COLUMN, v.str("question").unwrap_or_default(), ctx.data.vqa.as_ref())?;
            }
            store.insert(t.name.clone(), fill_missing(&t));
        }

        let described: Vec<String> = store
            .values()
            .map(|t| {
                let cols: Vec<String> = t.columns.iter().map(|c| format!("{} ({:?})", c.name, c.ty)).collect();
                format!("- {}: {} rows; columns {}", t.name, t.len(), cols.join(", "))
            })
            .collect();
        let v = ctx.decide(
            "retrieval:query",
            &format!("Write one query over these tables that answers the question.\n{}", described.join("\n")),
            Self::query_schema(&store),
        )?;
        let q = Self::to_query(&v);
        let answer = run_query(&store, &q)?;
        let mut out = InterfaceOutput::new(
            ResultKind::Table,
            format!("{} rows from `{}`.\n{}", answer.len(), q.table, answer.to_text()),
            json!({"query": q, "table": answer}),
        );
        out.provenance = resources.iter().map(|r| ctx.provenance(r)).collect();
        out.tables.push(answer);
        Ok(out)
    }
}

/// Lexical search over committed document resources, then a written answer.
/// Searches the documents of the sources the interface `uses`, or every
/// committed document resource when none of those is selected.
#[derive(Debug, Clone, Copy, Default)]
pub struct DocumentRetrieval;

impl Interface for DocumentRetrieval {
    fn run(&self, ctx: &mut InterfaceContext<'_>) -> Result<InterfaceOutput, InterfaceFault> {
        let linked: BTreeSet<String> = ctx
            .catalog
            .children(ctx.interface, Relation::Uses)
            .map(|v| v.into_iter().map(|n| n.id.clone()).collect())
            .unwrap_or_default();
        let all: Vec<String> = ctx
            .resources_in(&[DataFormat::Document])
            .iter()
            .map(|r| r.id.clone())
            .collect();
        let own: Vec<String> = all
            .iter()
            .filter(|r| ctx.catalog.parent(r).is_some_and(|p| linked.contains(&p.id)))
            .cloned()
            .collect();
        let resources = if own.is_empty() { all } else { own };
        if resources.is_empty() {
            return Err(fault("no document resource is selected"));
        }
        let mut corpus = Vec::new();
        for r in &resources {
            if let Loaded::Documents(d) = ctx.load(r)? {
                corpus.extend(d);
            }
        }

        let v = ctx.decide(
            "documents:search",
            "Write a short keyword search for the documents that answer the query.",
            DecisionSchema::new(vec![
                FieldSpec::text("search", "Keywords to search for.").with(FieldConstraint::NonEmpty),
            ]),
        )?;
        let search = v.str("search").unwrap_or_default().to_string();
        let hits = retrieve_documents(&corpus, &search, DOCUMENTS_PER_SEARCH);
        let excerpts: Vec<String> = hits
            .iter()
            .map(|h| format!("[{}] {}\n{}", h.document.id, h.document.title, h.document.text))
            .collect();
        let v = ctx.decide(
            "documents:answer",
            &format!(
                "Answer the query from these documents only, citing them by id.\n\n{}",
                excerpts.join("\n\n")
            ),
            DecisionSchema::new(vec![
                FieldSpec::text("answer", "The answer, in plain sentences.").with(FieldConstraint::NonEmpty),
            ]),
        )?;
        let answer = v.str("answer").unwrap_or_default().trim().to_string();
        let found: Vec<Value> = hits
            .iter()
            .map(|h| json!({"id": h.document.id, "title": h.document.title, "score": h.score}))
            .collect();
        let mut text = answer.clone();
        for h in &hits {
            text.push_str(&format!("\n- {} ({})", h.document.title, h.document.id));
        }
        let mut out = InterfaceOutput::new(
            ResultKind::Text,
            text,
            json!({"search": search, "documents": found, "answer": answer}),
        );
        out.provenance = resources.iter().map(|r| ctx.provenance(r)).collect();
        Ok(out)
    }
}

/// Has the agent write a driver model over the joined road graph and plans
/// the route with it.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoutePlanning;

const VALUE_SOURCES: [&str; 3] = ["literal", "edge", "driver"];
const OPERAND_SOURCES: [&str; 2] = ["edge", "driver"];

fn operand_text(name: &str, sources_field: &str, edge: &[String], driver: &[String]) -> FieldSpec {
    FieldSpec::text(name, "Attribute name, or the literal value itself.")
        .with(FieldConstraint::When {
            field: sources_field.into(),
            equals: "edge".into(),
            then: Box::new(FieldConstraint::MemberOf { values: edge.to_vec() }),
        })
        .with(FieldConstraint::When {
            field: sources_field.into(),
            equals: "driver".into(),
            then: Box::new(FieldConstraint::MemberOf { values: driver.to_vec() }),
        })
}

fn comparator_choices() -> Vec<&'static str> {
    let mut c = Comparator::SYMBOLS.to_vec();
    c.extend([">=", "<=", "!="]);
    c
}

fn term(source: &str, text: &str) -> Value {
    let text = text.trim();
    match source {
        "edge" | "driver" => json!({"source": source, "attribute": text}),
        _ => match text.parse::<f64>() {
            Ok(x) => json!(x),
            Err(_) => json!(text),
        },
    }
}

impl RoutePlanning {
    fn driver_schema() -> DecisionSchema {
        DecisionSchema::new(vec![
            FieldSpec::list_of(
                "attributes",
                "Real-valued driver attributes; each starts at 0.",
                vec![
                    FieldSpec::text("name", "").with(FieldConstraint::Identifier),
                    FieldSpec::text("description", "").optional(),
                ],
            )
            .with(FieldConstraint::NonEmpty)
            .with(FieldConstraint::Unique { key: Some("name".into()) }),
        ])
    }

    fn model_schema(driver: &[String], edge: &[String]) -> DecisionSchema {
        DecisionSchema::new(vec![
            FieldSpec::choice("objective", "Driver attribute the route minimizes.", driver),
            FieldSpec::list_of(
                "actions",
                "Updates applied to the driver on every edge, in order.",
                vec![
                    FieldSpec::text("name", "").with(FieldConstraint::NonEmpty),
                    FieldSpec::text("description", "").optional(),
                    FieldSpec::choice("target", "Driver attribute to update.", driver),
                    FieldSpec::choice("operation", "", &Operation::NAMES),
                    FieldSpec::choice("value_source", "", &VALUE_SOURCES),
                    operand_text("value", "value_source", edge, driver),
                ],
            )
            .with(FieldConstraint::NonEmpty),
            FieldSpec::list_of(
                "constraints",
                "An edge is skipped when any of these comparisons is true after the actions.",
                vec![
                    FieldSpec::text("name", "").with(FieldConstraint::NonEmpty),
                    FieldSpec::text("description", "").optional(),
                    FieldSpec::choice("operand1_source", "", &OPERAND_SOURCES),
                    operand_text("operand1", "operand1_source", edge, driver),
                    FieldSpec::choice("operator", "", &comparator_choices()),
                    FieldSpec::choice("operand2_source", "", &VALUE_SOURCES),
                    operand_text("operand2", "operand2_source", edge, driver),
                ],
            ),
        ])
    }

    fn to_model(driver: &DecisionValue, model: &DecisionValue) -> Result<RouteModel, InterfaceFault> {
        let items = |v: &DecisionValue, k: &str| v.get(k).and_then(Value::as_array).cloned().unwrap_or_default();
        let s = |v: &Value, k: &str| v[k].as_str().unwrap_or_default().to_string();
        let doc = json!({
            "driver": {
                "attributes": items(driver, "attributes")
                    .iter()
                    .map(|a| json!({"name": s(a, "name"), "description": s(a, "description")}))
                    .collect::<Vec<_>>(),
                "objective": model.str("objective").unwrap_or_default(),
            },
            "actions": items(model, "actions")
                .iter()
                .map(|a| json!({
                    "name": s(a, "name"),
                    "description": s(a, "description"),
                    "target": s(a, "target"),
                    "operation": s(a, "operation"),
                    "value": term(&s(a, "value_source"), &s(a, "value")),
                }))
                .collect::<Vec<_>>(),
            "constraints": items(model, "constraints")
                .iter()
                .map(|c| json!({
                    "name": s(c, "name"),
                    "description": s(c, "description"),
                    "operator": s(c, "operator"),
                    "operand1": term(&s(c, "operand1_source"), &s(c, "operand1")),
                    "operand2": term(&s(c, "operand2_source"), &s(c, "operand2")),
                    "action": "skip_edge",
                }))
                .collect::<Vec<_>>(),
        });
        serde_json::from_value(doc).map_err(|e| fault(format!("route model: {e}")))
    }
}

impl Interface for RoutePlanning {
    fn run(&self, ctx: &mut InterfaceContext<'_>) -> Result<InterfaceOutput, InterfaceFault> {
        let places = place_names(ctx)?;
        let ends = ctx.decide(
            "route:endpoints",
            "Name the places where the route starts and ends.",
            DecisionSchema::new(endpoint_fields(&places)),
        )?;
        let (origin, destination) = (
            ends.str("origin").unwrap_or_default().to_string(),
            ends.str("destination").unwrap_or_default().to_string(),
        );
        let (g, provenance) = road_network(ctx)?;
        let g = fill_missing_attributes(&g);
        let edge_names: Vec<String> = g.edge_attribute_names().into_iter().collect();

        let driver = ctx.decide(
            "route:driver",
            "Model the driver for route planning. List the driver attributes the route \
             has to track, such as accumulated travel time or distance.",
            Self::driver_schema(),
        )?;
        let driver_names: Vec<String> = driver
            .get("attributes")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter_map(|a| a["name"].as_str().map(str::to_string))
            .collect();
        let model = ctx.decide(
            "route:model",
            &format!(
                "Driver attributes: {}\nEdge attributes: {}\n\n\
                 Choose the objective, the actions that update the driver on each edge, \
                 and the constraints that rule an edge out. Operation `none` leaves the \
                 target unchanged.",
                driver_names.join(", "),
                edge_names.join(", ")
            ),
            Self::model_schema(&driver_names, &edge_names),
        )?;
        let model = Self::to_model(&driver, &model)?;
        let report = model.validate(&g);
        if !report.is_valid() {
            return Err(fault(format!("route model is invalid: {report}")));
        }
        let s = nearest_node(&g, locate(ctx, &origin)?)?;
        let t = nearest_node(&g, locate(ctx, &destination)?)?;
        let route = model.plan(&g, s, t)?;

        let mut geojson = route.to_geojson(&g);
        geojson["route"] = json!({
            "origin": origin,
            "destination": destination,
            "edges": route.edges,
            "objective": model.driver.objective,
            "objective_value": route.objective_value,
            "trace": route.trace,
        });
        geojson["model"] = serde_json::to_value(&model).expect("model serializes");
        let constraints: Vec<&str> = model.constraints.iter().map(|c| c.name.as_str()).collect();
        let mut text = format!(
            "Route from {origin} to {destination}: {} road segments, {} = {:.3}.",
            route.edges.len(),
            model.driver.objective,
            route.objective_value
        );
        if !constraints.is_empty() {
            text.push_str(&format!("\nConstraints applied: {}.", constraints.join(", ")));
        }
        let mut out = InterfaceOutput::new(ResultKind::Route, text, geojson);
        out.provenance = provenance;
        Ok(out)
    }
}

/// Up to ten fastest routes between two places and every joined feature
/// along them.
#[derive(Debug, Clone, Copy, Default)]
pub struct RouteMonitoring;

impl Interface for RouteMonitoring {
    fn run(&self, ctx: &mut InterfaceContext<'_>) -> Result<InterfaceOutput, InterfaceFault> {
        let places = place_names(ctx)?;
        let mut fields = endpoint_fields(&places);
        fields.push(
            FieldSpec::number("routes", "How many of the fastest routes to check.")
                .with(FieldConstraint::Integer)
                .with(FieldConstraint::Range {
                    min: Some(1.0),
                    max: Some(MAX_FASTEST_ROUTES as f64),
                }),
        );
        let v = ctx.decide(
            "monitor:routes",
            "Name the places the monitored routes run between and how many routes to check.",
            DecisionSchema::new(fields),
        )?;
        let origin = v.str("origin").unwrap_or_default().to_string();
        let destination = v.str("destination").unwrap_or_default().to_string();
        let k = v.f64("routes").unwrap_or(1.0) as usize;
        let (g, provenance) = road_network(ctx)?;
        let s = nearest_node(&g, locate(ctx, &origin)?)?;
        let t = nearest_node(&g, locate(ctx, &destination)?)?;
        let routes = k_fastest_routes(&g, s, t, k)?;
        let findings: Table = monitor_routes(&routes, &g);

        let mut features = Vec::new();
        for (i, r) in routes.iter().enumerate() {
            let fc = r.to_geojson(&g);
            for mut f in fc["features"].as_array().cloned().unwrap_or_default() {
                if f["geometry"]["type"] == "LineString" {
                    f["properties"]["route"] = json!(i);
                    f["properties"]["travel_time_s"] = json!(r.objective_value);
                    features.push(f);
                }
            }
        }
        let payload = json!({"type": "FeatureCollection", "features": features, "findings": findings});
        let text = format!(
            "{} route(s) from {origin} to {destination}; {} finding(s).\n{}",
            routes.len(),
            findings.len(),
            findings.to_text()
        );
        let mut out = InterfaceOutput::new(ResultKind::Findings, text, payload);
        out.provenance = provenance;
        out.tables.push(findings);
        Ok(out)
    }
}
