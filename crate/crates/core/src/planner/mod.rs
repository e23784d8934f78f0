//! Route planning over a [`RoadGraph`]: the driver/action/constraint model,
//! the constrained stateful Dijkstra search, a brute-force oracle, Yen's
//! k-fastest routes and route monitoring.

mod brute;
mod dsl;
mod monitor;
mod search;
mod yen;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::ValidationReport;
use crate::roadgraph::{NodeId, RoadGraph};
use crate::scalar::Scalar;

pub use brute::brute_force_plan;
pub use dsl::{
    apply_action, apply_actions, check_constraints, evaluate_constraints, validate_model, ActionFault,
    ConstraintCheck, Verdict,
};
pub use monitor::monitor_routes;
pub use search::{plan_route, plan_route_traced, replay_route, SearchLimits, SearchStats};
pub use yen::{k_fastest_routes, MAX_FASTEST_ROUTES, TRAVEL_TIME_ATTRIBUTE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no feasible route from {from} to {to}")]
    NoRoute { from: NodeId, to: NodeId },
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("invalid route model: {0}")]
    InvalidModel(ValidationReport),
    #[error("k must be between 1 and {MAX_FASTEST_ROUTES}, got {0}")]
    InvalidK(usize),
    #[error("search exceeded {0} expansions")]
    SearchLimitExceeded(usize),
    #[error("route replay failed at edge {index} (`{edge}`): {reason}")]
    Replay { index: usize, edge: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverAttribute {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

/// The driver's real-valued attributes and which one the search minimizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub attributes: Vec<DriverAttribute>,
    pub objective: String,
}

impl DriverSpec {
    pub fn new<I, N>(names: I, objective: &str) -> Self
    where
        I: IntoIterator<Item = N>,
        N: Into<String>,
    {
        DriverSpec {
            attributes: names
                .into_iter()
                .map(|n| DriverAttribute {
                    name: n.into(),
                    description: String::new(),
                })
                .collect(),
            objective: objective.to_string(),
        }
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.attributes.iter().any(|a| a.name == name)
    }
}

/// Current value of every driver attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DriverState<S = f64> {
    pub values: BTreeMap<String, S>,
}

impl<S: Scalar> DriverState<S> {
    /// Every attribute at zero.
    pub fn zero(spec: &DriverSpec) -> Self {
        DriverState {
            values: spec.attributes.iter().map(|a| (a.name.clone(), S::zero())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<S> {
        self.values.get(name).copied()
    }
}

/// Where an operand's value comes from. Unrecognized sources are kept so the
/// validator can report them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Source {
    Edge,
    Driver,
    Unknown(String),
}

impl From<String> for Source {
    fn from(s: String) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "edge" => Source::Edge,
            "driver" => Source::Driver,
            _ => Source::Unknown(s),
        }
    }
}

impl From<Source> for String {
    fn from(s: Source) -> Self {
        match s {
            Source::Edge => "edge".into(),
            Source::Driver => "driver".into(),
            Source::Unknown(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operand {
    pub source: Source,
    pub attribute: String,
}

impl Operand {
    pub fn edge(attribute: &str) -> Self {
        Operand {
            source: Source::Edge,
            attribute: attribute.into(),
        }
    }

    pub fn driver(attribute: &str) -> Self {
        Operand {
            source: Source::Driver,
            attribute: attribute.into(),
        }
    }
}

/// An operand reference or a literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Term<S = f64> {
    Operand(Operand),
    Number(S),
    Text(String),
}

impl<S: Scalar> Default for Term<S> {
    fn default() -> Self {
        Term::Number(S::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperationKind {
    Add,
    Subtract,
    Multiply,
    Divide,
    Set,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Operation {
    Known(OperationKind),
    Unknown(String),
}

impl Operation {
    pub const NAMES: [&'static str; 6] = ["add", "subtract", "multiply", "divide", "set", "none"];

    pub fn kind(&self) -> Option<OperationKind> {
        match self {
            Operation::Known(k) => Some(*k),
            Operation::Unknown(_) => None,
        }
    }
}

impl From<OperationKind> for Operation {
    fn from(k: OperationKind) -> Self {
        Operation::Known(k)
    }
}

impl From<String> for Operation {
    fn from(s: String) -> Self {
        use OperationKind::*;
        let k = match s.trim().to_ascii_lowercase().as_str() {
            "add" | "+" => Add,
            "subtract" | "sub" | "-" => Subtract,
            "multiply" | "mul" | "*" => Multiply,
            "divide" | "div" | "/" => Divide,
            "set" => Set,
            "none" | "noop" => None,
            _ => return Operation::Unknown(s),
        };
        Operation::Known(k)
    }
}

impl From<Operation> for String {
    fn from(o: Operation) -> Self {
        match o {
            Operation::Known(k) => Operation::NAMES[k as usize].to_string(),
            Operation::Unknown(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComparatorKind {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Comparator {
    Known(ComparatorKind),
    Unknown(String),
}

impl Comparator {
    pub const SYMBOLS: [&'static str; 6] = [">", "≥", "<", "≤", "=", "≠"];

    pub fn kind(&self) -> Option<ComparatorKind> {
        match self {
            Comparator::Known(k) => Some(*k),
            Comparator::Unknown(_) => None,
        }
    }
}

impl From<ComparatorKind> for Comparator {
    fn from(k: ComparatorKind) -> Self {
        Comparator::Known(k)
    }
}

impl From<String> for Comparator {
    fn from(s: String) -> Self {
        use ComparatorKind::*;
        let k = match s.trim().to_ascii_lowercase().as_str() {
            ">" | "gt" | "greater_than" => Gt,
            ">=" | "≥" | "ge" | "greater_or_equal" => Ge,
            "<" | "lt" | "less_than" => Lt,
            "<=" | "≤" | "le" | "less_or_equal" => Le,
            "=" | "==" | "eq" | "equals" => Eq,
            "!=" | "≠" | "ne" | "not_equals" => Ne,
            _ => return Comparator::Unknown(s),
        };
        Comparator::Known(k)
    }
}

impl From<Comparator> for String {
    fn from(c: Comparator) -> Self {
        match c {
            Comparator::Known(k) => Comparator::SYMBOLS[k as usize].to_string(),
            Comparator::Unknown(s) => s,
        }
    }
}

/// A per-edge update of one driver attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Action<S = f64> {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub target: String,
    pub operation: Operation,
    #[serde(default)]
    pub value: Term<S>,
}

impl<S: Scalar> Action<S> {
    pub fn new(target: &str, operation: OperationKind, value: Term<S>) -> Self {
        Action {
            name: format!("{}_{}", String::from(Operation::Known(operation)), target),
            description: String::new(),
            target: target.into(),
            operation: operation.into(),
            value,
        }
    }
}

/// What happens when a constraint triggers. Only skipping the edge exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(from = "String", into = "String")]
pub enum ConstraintAction {
    #[default]
    SkipEdge,
    Unknown(String),
}

impl From<String> for ConstraintAction {
    fn from(s: String) -> Self {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "skip_edge" | "skip" => ConstraintAction::SkipEdge,
            _ => ConstraintAction::Unknown(s),
        }
    }
}

impl From<ConstraintAction> for String {
    fn from(a: ConstraintAction) -> Self {
        match a {
            ConstraintAction::SkipEdge => "skip_edge".into(),
            ConstraintAction::Unknown(s) => s,
        }
    }
}

/// A comparison that, when true, rules the edge out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint<S = f64> {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub operator: Comparator,
    pub operand1: Term<S>,
    pub operand2: Term<S>,
    #[serde(default)]
    pub action: ConstraintAction,
}

impl<S: Scalar> Constraint<S> {
    pub fn new(name: &str, operand1: Operand, operator: ComparatorKind, operand2: Term<S>) -> Self {
        Constraint {
            name: name.into(),
            description: String::new(),
            operator: operator.into(),
            operand1: Term::Operand(operand1),
            operand2,
            action: ConstraintAction::SkipEdge,
        }
    }
}

/// Driver, actions and constraints as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RouteModel<S = f64> {
    pub driver: DriverSpec,
    #[serde(default)]
    pub actions: Vec<Action<S>>,
    #[serde(default)]
    pub constraints: Vec<Constraint<S>>,
}

impl<S: Scalar> RouteModel<S> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self, g: &RoadGraph<S>) -> ValidationReport {
        validate_model(&self.driver, &self.actions, &self.constraints, &g.edge_attribute_names())
    }

    pub fn plan(&self, g: &RoadGraph<S>, s: NodeId, t: NodeId) -> Result<RouteResult<S>, PlanError> {
        plan_route(g, s, t, &self.driver, &self.actions, &self.constraints)
    }
}

/// A planned route with the driver state after each edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult<S = f64> {
    pub path: Vec<NodeId>,
    pub edges: Vec<String>,
    pub objective_value: S,
    pub trace: Vec<DriverState<S>>,
    pub settled_count: usize,
}

impl<S: Scalar> RouteResult<S> {
    /// The route as a GeoJSON FeatureCollection: one LineString through
    /// every edge, plus start and end points.
    pub fn to_geojson(&self, g: &RoadGraph<S>) -> Value {
        let mut coords: Vec<[f64; 2]> = Vec::new();
        for id in &self.edges {
            if let Some(e) = g.edge(id) {
                let skip = usize::from(!coords.is_empty());
                coords.extend(e.geometry.iter().skip(skip).map(|p| [p.lon.as_f64(), p.lat.as_f64()]));
            }
        }
        let point = |n: &NodeId, role: &str| {
            let p = n.to_latlon::<f64>();
            json!({
                "type": "Feature",
                "properties": {"role": role},
                "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
            })
        };
        let mut features = Vec::new();
        if coords.len() >= 2 {
            features.push(json!({
                "type": "Feature",
                "properties": {"edges": self.edges, "objective_value": self.objective_value.as_f64()},
                "geometry": {"type": "LineString", "coordinates": coords},
            }));
        }
        if let (Some(a), Some(b)) = (self.path.first(), self.path.last()) {
            features.push(point(a, "start"));
            features.push(point(b, "end"));
        }
        json!({"type": "FeatureCollection", "features": features})
    }
}

impl<S: Scalar> fmt::Display for RouteResult<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} edges, objective {}", self.edges.len(), self.objective_value)
    }
}
