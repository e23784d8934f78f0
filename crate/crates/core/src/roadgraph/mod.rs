//! Directed road graph built from line-segment geometry.
//!
//! Nodes are segment endpoints quantized to 10⁻⁶ degrees and carry no
//! attributes; edges carry the segment geometry, its haversine length and
//! whatever attributes the segment table and later spatial joins supplied.

mod build;
mod component;
mod join;
mod nearest;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{polyline_length_m, LatLon};
use crate::ingest::Cell;
use crate::scalar::Scalar;

pub use build::build_graph;
pub use component::{largest_component, weak_components, MIN_COMPONENT_SHARE};
pub use join::{fill_missing_attributes, spatial_join, DEFAULT_JOIN_TOLERANCE_M};
pub use nearest::nearest_node;

/// Speed assumed for edges without a usable `speed_kmh`.
pub const DEFAULT_SPEED_KMH: f64 = 50.0;

/// Attributes every edge exposes whether or not the source table had them.
pub const DERIVED_ATTRIBUTES: [&str; 4] = ["length_m", "speed_kmh", "travel_time_s", "travel_time_h"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoadGraphError {
    #[error("segment {row} has fewer than two vertices")]
    DegenerateSegment { row: usize },
    #[error("segment {row} has unknown direction `{value}`")]
    InvalidDirection { row: usize, value: String },
    #[error("duplicate edge id `{0}`")]
    DuplicateEdgeId(String),
    #[error("largest component holds only {share} of the edges (needs more than 9999/10000)")]
    FragmentedNetwork { share: Ratio<u64> },
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("join tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
}

impl RoadGraphError {
    /// Achieved share as a float, for `FragmentedNetwork`.
    pub fn share(&self) -> Option<f64> {
        match self {
            RoadGraphError::FragmentedNetwork { share } => {
                Some(*share.numer() as f64 / *share.denom() as f64)
            }
            _ => None,
        }
    }
}

/// Coordinate quantized to micro-degrees: `(round(lat·10⁶), round(lon·10⁶))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub i64, pub i64);

impl NodeId {
    pub fn quantize<S: Scalar>(p: LatLon<S>) -> Self {
        NodeId(
            (p.lat.as_f64() * 1e6).round() as i64,
            (p.lon.as_f64() * 1e6).round() as i64,
        )
    }

    pub fn to_latlon<S: Scalar>(self) -> LatLon<S> {
        LatLon::new(S::of(self.0 as f64 / 1e6), S::of(self.1 as f64 / 1e6))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.0 as f64 / 1e6, self.1 as f64 / 1e6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue<S = f64> {
    Number(S),
    Text(String),
}

impl<S: Scalar> AttrValue<S> {
    pub fn as_number(&self) -> Option<S> {
        match self {
            AttrValue::Number(n) => Some(*n),
            AttrValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(t) => Some(t),
            AttrValue::Number(_) => None,
        }
    }

    /// Missing cells have no attribute value; booleans become `"true"`/`"false"`.
    pub fn from_cell(c: &Cell) -> Option<Self> {
        match c {
            Cell::Number(n) => Some(AttrValue::Number(S::of(*n))),
            Cell::Text(t) => Some(AttrValue::Text(t.clone())),
            Cell::Bool(b) => Some(AttrValue::Text(b.to_string())),
            Cell::Missing => None,
        }
    }

    pub fn cast<T: Scalar>(&self) -> AttrValue<T> {
        match self {
            AttrValue::Number(n) => AttrValue::Number(T::of(n.as_f64())),
            AttrValue::Text(t) => AttrValue::Text(t.clone()),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            AttrValue::Number(n) => json!(n.as_f64()),
            AttrValue::Text(t) => json!(t),
        }
    }
}

impl<S: Scalar> fmt::Display for AttrValue<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(n) => write!(f, "{n}"),
            AttrValue::Text(t) => f.write_str(t),
        }
    }
}

pub type Attributes<S = f64> = BTreeMap<String, AttrValue<S>>;

/// One auxiliary feature attached to an edge by [`spatial_join`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedFeature<S = f64> {
    pub table: String,
    pub feature_index: usize,
    pub attributes: Attributes<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge<S = f64> {
    pub id: String,
    pub from: NodeId,
    pub to: NodeId,
    pub geometry: Vec<LatLon<S>>,
    pub length_m: S,
    pub attributes: Attributes<S>,
    #[serde(default)]
    pub joined: Vec<JoinedFeature<S>>,
}

impl<S: Scalar> Edge<S> {
    /// Endpoints and length follow from the geometry.
    pub fn new(id: impl Into<String>, geometry: Vec<LatLon<S>>, attributes: Attributes<S>) -> Self {
        let from = NodeId::quantize(geometry[0]);
        let to = NodeId::quantize(*geometry.last().expect("non-empty geometry"));
        Edge {
            id: id.into(),
            from,
            to,
            length_m: polyline_length_m(&geometry),
            geometry,
            attributes,
            joined: Vec::new(),
        }
    }

    pub fn speed_kmh(&self) -> S {
        match self.attributes.get("speed_kmh").and_then(AttrValue::as_number) {
            Some(v) if v > S::zero() && v.is_finite() => v,
            _ => S::of(DEFAULT_SPEED_KMH),
        }
    }

    pub fn travel_time_s(&self) -> S {
        self.length_m / (self.speed_kmh() / S::of(3.6))
    }

    /// Stored attribute, or one of [`DERIVED_ATTRIBUTES`].
    pub fn attribute(&self, name: &str) -> Option<AttrValue<S>> {
        match name {
            "length_m" => Some(AttrValue::Number(self.length_m)),
            "speed_kmh" => Some(AttrValue::Number(self.speed_kmh())),
            "travel_time_s" => Some(AttrValue::Number(self.travel_time_s())),
            "travel_time_h" => Some(AttrValue::Number(self.travel_time_s() / S::of(3600.0))),
            _ => self.attributes.get(name).cloned(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Edge<T> {
        let cast_attrs = |a: &Attributes<S>| a.iter().map(|(k, v)| (k.clone(), v.cast())).collect();
        Edge {
            id: self.id.clone(),
            from: self.from,
            to: self.to,
            geometry: self.geometry.iter().map(|p| p.cast()).collect(),
            length_m: T::of(self.length_m.as_f64()),
            attributes: cast_attrs(&self.attributes),
            joined: self
                .joined
                .iter()
                .map(|j| JoinedFeature {
                    table: j.table.clone(),
                    feature_index: j.feature_index,
                    attributes: cast_attrs(&j.attributes),
                })
                .collect(),
        }
    }

    pub fn to_geojson(&self) -> Value {
        let mut props: serde_json::Map<String, Value> = self
            .attributes
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        props.insert("edge_id".into(), json!(self.id));
        props.insert("length_m".into(), json!(self.length_m.as_f64()));
        json!({
            "type": "Feature",
            "properties": props,
            "geometry": {
                "type": "LineString",
                "coordinates": self.geometry.iter().map(|p| [p.lon.as_f64(), p.lat.as_f64()]).collect::<Vec<_>>(),
            },
        })
    }
}

/// Immutable directed multigraph. Outgoing edges are kept in edge-id order.
#[derive(Debug, Clone)]
pub struct RoadGraph<S = f64> {
    nodes: BTreeSet<NodeId>,
    edges: Vec<Edge<S>>,
    adjacency: BTreeMap<NodeId, Vec<usize>>,
    by_id: HashMap<String, usize>,
    grid: nearest::NodeGrid,
}

impl<S: Scalar> RoadGraph<S> {
    pub fn from_edges(edges: Vec<Edge<S>>) -> Result<Self, RoadGraphError> {
        let mut nodes = BTreeSet::new();
        let mut adjacency: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        let mut by_id = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(RoadGraphError::DuplicateEdgeId(e.id.clone()));
            }
            nodes.insert(e.from);
            nodes.insert(e.to);
            adjacency.entry(e.from).or_default().push(i);
        }
        for out in adjacency.values_mut() {
            out.sort_by(|&a, &b| edges[a].id.cmp(&edges[b].id));
        }
        let grid = nearest::NodeGrid::build(nodes.iter().copied());
        Ok(RoadGraph {
            nodes,
            edges,
            adjacency,
            by_id,
            grid,
        })
    }

    pub fn empty() -> Self {
        Self::from_edges(Vec::new()).expect("empty graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        self.nodes.contains(&n)
    }

    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }

    pub fn edge(&self, id: &str) -> Option<&Edge<S>> {
        self.by_id.get(id).map(|&i| &self.edges[i])
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Outgoing edges of `n` in edge-id order.
    pub fn out_edges(&self, n: NodeId) -> impl Iterator<Item = &Edge<S>> + '_ {
        self.adjacency
            .get(&n)
            .into_iter()
            .flatten()
            .map(move |&i| &self.edges[i])
    }

    /// Names resolvable through [`Edge::attribute`] on at least one edge.
    pub fn edge_attribute_names(&self) -> BTreeSet<String> {
        let mut names: BTreeSet<String> = DERIVED_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
        for e in &self.edges {
            names.extend(e.attributes.keys().cloned());
        }
        names
    }

    pub fn cast<T: Scalar>(&self) -> RoadGraph<T> {
        RoadGraph::from_edges(self.edges.iter().map(Edge::cast).collect())
            .expect("casting preserves edge ids")
    }

    pub fn into_edges(self) -> Vec<Edge<S>> {
        self.edges
    }

    pub fn to_geojson(&self) -> Value {
        json!({
            "type": "FeatureCollection",
            "features": self.edges.iter().map(Edge::to_geojson).collect::<Vec<_>>(),
        })
    }
}
