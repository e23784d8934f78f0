//! The metadata catalog: task types, objectives, the DataSource/Resource/Attribute
//! hierarchy and the interfaces, linked by typed edges.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    TaskType,
    Objective,
    DataSource,
    Resource,
    Attribute,
    Interface,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::TaskType,
        NodeKind::Objective,
        NodeKind::DataSource,
        NodeKind::Resource,
        NodeKind::Attribute,
        NodeKind::Interface,
    ];
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Tabular,
    Geospatial,
    Document,
    ApiFixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogNode {
    pub id: String,
    pub kind: NodeKind,
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    /// DataSources only: task type ids for which this source is always offered.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub always_include_for: Vec<String>,
    /// Resources only: marks the road-segment layer a road graph is built from.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub network: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Contains,
    Serves,
    Uses,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEdge {
    pub from: String,
    pub to: String,
    pub rel: Relation,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("catalog integrity error: {0}")]
    Integrity(String),
    #[error("unknown catalog node `{0}`")]
    UnknownNode(String),
}

/// Immutable catalog graph. Construct with [`Catalog::new`] or [`load_catalog`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog", into = "RawCatalog")]
pub struct Catalog {
    nodes: Vec<CatalogNode>,
    edges: Vec<CatalogEdge>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawCatalog {
    #[serde(default)]
    nodes: Vec<CatalogNode>,
    #[serde(default)]
    edges: Vec<CatalogEdge>,
}

impl TryFrom<RawCatalog> for Catalog {
    type Error = CatalogError;

    fn try_from(raw: RawCatalog) -> Result<Self, Self::Error> {
        Catalog::new(raw.nodes, raw.edges)
    }
}

impl From<Catalog> for RawCatalog {
    fn from(c: Catalog) -> Self {
        RawCatalog {
            nodes: c.nodes,
            edges: c.edges,
        }
    }
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

/// Reads and checks a catalog file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CatalogError::Parse(format!("{}: {e}", path.display())))?;
    Catalog::from_json(&text)
}

impl Catalog {
    pub fn new(nodes: Vec<CatalogNode>, edges: Vec<CatalogEdge>) -> Result<Self, CatalogError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(CatalogError::Integrity(format!("duplicate node id `{}`", n.id)));
            }
        }
        let catalog = Catalog {
            nodes,
            edges,
            index,
        };
        catalog.check_edges()?;
        Ok(catalog)
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let raw: RawCatalog =
            serde_json::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Catalog::new(raw.nodes, raw.edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawCatalog::from(self.clone())).expect("catalog serializes")
    }

    fn check_edges(&self) -> Result<(), CatalogError> {
        let mut parent_of: HashMap<&str, &str> = HashMap::new();
        for e in &self.edges {
            let from = self.node(&e.from).ok_or_else(|| {
                CatalogError::Integrity(format!("edge references missing node `{}`", e.from))
            })?;
            let to = self.node(&e.to).ok_or_else(|| {
                CatalogError::Integrity(format!("edge references missing node `{}`", e.to))
            })?;
            use NodeKind::*;
            let ok = match e.rel {
                Relation::Contains => matches!(
                    (from.kind, to.kind),
                    (DataSource, Resource) | (Resource, Attribute)
                ),
                Relation::Serves => from.kind == TaskType && to.kind == DataSource,
                // interfaces reach data by format through the DataSources they name
                Relation::Uses => {
                    from.kind == Interface && to.kind == DataSource && to.format.is_some()
                }
            };
            if !ok {
                return Err(CatalogError::Integrity(format!(
                    "`{:?}` edge {} ({}) -> {} ({}) violates kind rules",
                    e.rel, e.from, from.kind, e.to, to.kind
                )));
            }
            if e.rel == Relation::Contains {
                if let Some(prev) = parent_of.insert(&e.to, &e.from) {
                    return Err(CatalogError::Integrity(format!(
                        "`{}` has two parents: `{prev}` and `{}`",
                        e.to, e.from
                    )));
                }
            }
        }
        // kind rules already forbid cycles (DataSource -> Resource -> Attribute),
        // but walk the parent chains anyway so a future relaxation cannot sneak one in
        for start in parent_of.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = *start;
            while let Some(p) = parent_of.get(cur) {
                if !seen.insert(cur) {
                    return Err(CatalogError::Integrity(format!(
                        "contains-cycle through `{cur}`"
                    )));
                }
                cur = p;
            }
        }
        for n in &self.nodes {
            if matches!(n.kind, NodeKind::Resource | NodeKind::Attribute)
                && !parent_of.contains_key(n.id.as_str())
            {
                return Err(CatalogError::Integrity(format!(
                    "{} `{}` has no parent",
                    n.kind, n.id
                )));
            }
            for tt in &n.always_include_for {
                match self.node(tt) {
                    Some(t) if t.kind == NodeKind::TaskType => {}
                    _ => {
                        return Err(CatalogError::Integrity(format!(
                            "`{}` always_include_for names unknown task type `{tt}`",
                            n.id
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[CatalogNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[CatalogEdge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&CatalogNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn require(&self, id: &str) -> Result<&CatalogNode, CatalogError> {
        self.node(id)
            .ok_or_else(|| CatalogError::UnknownNode(id.to_string()))
    }

    /// All nodes of a kind, sorted by id.
    pub fn nodes_by_kind(&self, kind: NodeKind) -> Vec<&CatalogNode> {
        let mut out: Vec<_> = self.nodes.iter().filter(|n| n.kind == kind).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Nodes one `rel` edge away from `parent`, sorted by id.
    pub fn children(&self, parent: &str, rel: Relation) -> Result<Vec<&CatalogNode>, CatalogError> {
        self.require(parent)?;
        let mut out: Vec<_> = self
            .edges
            .iter()
            .filter(|e| e.rel == rel && e.from == parent)
            .filter_map(|e| self.node(&e.to))
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out.dedup_by(|a, b| a.id == b.id);
        Ok(out)
    }

    /// The `contains` parent of a Resource or Attribute.
    pub fn parent(&self, id: &str) -> Option<&CatalogNode> {
        self.edges
            .iter()
            .find(|e| e.rel == Relation::Contains && e.to == id)
            .and_then(|e| self.node(&e.from))
    }

    /// A node's own format, falling back to its ancestors'.
    pub fn effective_format(&self, id: &str) -> Option<DataFormat> {
        let mut cur = self.node(id)?;
        loop {
            if let Some(f) = cur.format {
                return Some(f);
            }
            cur = self.parent(&cur.id)?;
        }
    }

    /// Data formats an interface can consume, read off its `uses` targets.
    pub fn interface_formats(&self, interface: &str) -> Result<BTreeSet<DataFormat>, CatalogError> {
        Ok(self
            .children(interface, Relation::Uses)?
            .into_iter()
            .filter_map(|n| n.format)
            .collect())
    }
}
