use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::agent::{AgentError, DecisionSchema, DecisionValue};
use crate::catalog::{Catalog, CatalogError, CatalogNode, DataFormat, NodeKind};
use crate::ingest::{load_resource, IngestError, Loaded};
use crate::planner::PlanError;
use crate::roadgraph::RoadGraphError;

use super::builtin::{
    DocumentRetrieval, InformationRetrieval, RouteMonitoring, RoutePlanning, INFORMATION_RETRIEVAL,
    INTERNAL_DOCUMENTS, LAW, ROUTE_MONITORING, ROUTE_PLANNING,
};
use super::{DataContext, Decider, InterfaceOutput, Provenance, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct InterfaceFault(pub String);

macro_rules! fault_from {
    ($($t:ty),*) => {$(
        impl From<$t> for InterfaceFault {
            fn from(e: $t) -> Self {
                InterfaceFault(e.to_string())
            }
        }
    )*};
}

fault_from!(AgentError, IngestError, RoadGraphError, PlanError, CatalogError);

/// One executable interface. `run` may ask the agent for decisions through
/// the context and reads the committed selections from it.
pub trait Interface: Send + Sync {
    fn run(&self, ctx: &mut InterfaceContext<'_>) -> Result<InterfaceOutput, InterfaceFault>;
}

/// What an interface sees while running.
pub struct InterfaceContext<'a> {
    /// Catalog id of the running interface.
    pub interface: &'a str,
    pub query: &'a str,
    pub catalog: &'a Catalog,
    pub data: &'a DataContext,
    pub selections: &'a BTreeMap<Stage, Vec<String>>,
    /// Outputs of the interfaces that ran before this one.
    pub prior: &'a [InterfaceOutput],
    pub(super) decider: Decider<'a>,
}

impl InterfaceContext<'_> {
    /// Committed nodes of `kind`, in selection order.
    pub fn selected(&self, kind: NodeKind) -> Vec<&CatalogNode> {
        self.selections
            .values()
            .flatten()
            .filter_map(|id| self.catalog.node(id))
            .filter(|n| n.kind == kind)
            .collect()
    }

    /// Committed resources whose data format is one of `formats`.
    pub fn resources_in(&self, formats: &[DataFormat]) -> Vec<&CatalogNode> {
        self.selected(NodeKind::Resource)
            .into_iter()
            .filter(|r| self.catalog.effective_format(&r.id).is_some_and(|f| formats.contains(&f)))
            .collect()
    }

    /// Names of the committed attributes of `resource`.
    pub fn attribute_names(&self, resource: &str) -> Vec<String> {
        self.selected(NodeKind::Attribute)
            .into_iter()
            .filter(|a| self.catalog.parent(&a.id).is_some_and(|p| p.id == resource))
            .map(|a| a.name.clone())
            .collect()
    }

    pub fn provenance(&self, resource: &str) -> Provenance {
        Provenance {
            source: self.catalog.parent(resource).map(|p| p.id.clone()).unwrap_or_default(),
            resource: resource.to_string(),
        }
    }

    /// Loads a committed resource, keeping its committed attributes.
    pub fn load(&self, resource: &str) -> Result<Loaded, IngestError> {
        load_resource(
            self.catalog,
            resource,
            &self.attribute_names(resource),
            &self.data.data_root,
        )
    }

    /// The query, the selected objectives and the earlier outputs, as the
    /// opening of a prompt.
    pub fn framing(&self) -> String {
        let objectives: Vec<&str> = self
            .selected(NodeKind::Objective)
            .iter()
            .map(|n| n.name.as_str())
            .collect();
        let mut out = format!("Query: {}", self.query);
        if !objectives.is_empty() {
            out.push_str(&format!("\nObjectives: {}", objectives.join(", ")));
        }
        for p in self.prior {
            out.push_str(&format!("\n\nResult of `{}`:\n{}", p.interface, p.text.trim()));
            for t in &p.tables {
                out.push_str(&format!("\n\nTable `{}`:\n{}", t.name, t.to_text()));
            }
        }
        out
    }

    /// Asks the agent, prefixing `instruction` with [`framing`](Self::framing).
    pub fn decide(
        &mut self,
        label: &str,
        instruction: &str,
        schema: DecisionSchema,
    ) -> Result<DecisionValue, AgentError> {
        let context = format!("{}\n\n{instruction}", self.framing());
        self.decider.decide(label, context, schema)
    }
}

/// Interfaces by catalog id.
#[derive(Clone, Default)]
pub struct InterfaceRegistry {
    entries: BTreeMap<String, Arc<dyn Interface>>,
}

impl fmt::Debug for InterfaceRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl InterfaceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The five built-in interfaces under their standard catalog ids.
    pub fn standard() -> Self {
        let mut r = Self::new();
        r.register(INFORMATION_RETRIEVAL, InformationRetrieval);
        r.register(LAW, DocumentRetrieval);
        r.register(INTERNAL_DOCUMENTS, DocumentRetrieval);
        r.register(ROUTE_PLANNING, RoutePlanning);
        r.register(ROUTE_MONITORING, RouteMonitoring);
        r
    }

    pub fn register(&mut self, id: impl Into<String>, interface: impl Interface + 'static) -> &mut Self {
        self.entries.insert(id.into(), Arc::new(interface));
        self
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn Interface>> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
