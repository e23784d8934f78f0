//! The query session: classify the query, narrow the catalog from sources
//! down to attributes, pick interfaces, run them.
//!
//! A [`Session`] is plain data; an [`Environment`] holds the catalog, the
//! decision provider and the interface registry and moves sessions forward.
//! In automatic mode every [`Environment::advance`] commits the agent's
//! proposal for one stage. In control mode the first advance of a stage
//! leaves a pending [`Proposal`], and the next one commits it, either as
//! proposed (no override, or an empty one) or replaced by the override.

mod builtin;
mod interfaces;
mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{decide_traced, AgentError, DecisionProvider, DecisionRequest, DecisionSchema, DecisionValue};
use crate::agent::DEFAULT_MAX_ATTEMPTS;
use crate::catalog::Catalog;
use crate::ingest::{Gazetteer, StubVisualAnswerer, Table, VisualAnswerer};

pub use builtin::{
    DocumentRetrieval, InformationRetrieval, RouteMonitoring, RoutePlanning, DOCUMENTS_PER_SEARCH, IMAGE_COLUMN,
    INTERNAL_DOCUMENTS, INFORMATION_RETRIEVAL, LAW, NETWORK_KEY_COLUMN, ROUTE_MONITORING, ROUTE_PLANNING,
};
pub use interfaces::{Interface, InterfaceContext, InterfaceFault, InterfaceRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    SelectSources,
    SelectResources,
    SelectAttributes,
    SelectInterfaces,
    Execute,
    Done,
    Failed,
}

impl Stage {
    /// The forward order; `Failed` can follow any of these.
    pub const ORDER: [Stage; 7] = [
        Stage::Classify,
        Stage::SelectSources,
        Stage::SelectResources,
        Stage::SelectAttributes,
        Stage::SelectInterfaces,
        Stage::Execute,
        Stage::Done,
    ];

    pub fn next(self) -> Option<Stage> {
        let i = Self::ORDER.iter().position(|s| *s == self)?;
        Self::ORDER.get(i + 1).copied()
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }

    /// Stages that end in a committed selection.
    pub fn is_selection(self) -> bool {
        matches!(
            self,
            Stage::Classify
                | Stage::SelectSources
                | Stage::SelectResources
                | Stage::SelectAttributes
                | Stage::SelectInterfaces
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Automatic,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalOption {
    pub id: String,
    pub name: String,
    pub description: String,
    /// The catalog node this option hangs under, or the node kind on Classify.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// What the agent offers for one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub stage: Stage,
    pub options: Vec<ProposalOption>,
    pub selected: Vec<String>,
    pub rationale: String,
}

impl Proposal {
    pub fn option_ids(&self) -> BTreeSet<&str> {
        self.options.iter().map(|o| o.id.as_str()).collect()
    }

    /// Orders `ids` as the options are ordered and drops duplicates;
    /// interface selections keep their given order.
    fn canonical(&self, ids: &[String]) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out: Vec<String> = ids.iter().filter(|id| seen.insert(id.as_str())).cloned().collect();
        if self.stage != Stage::SelectInterfaces {
            let rank: BTreeMap<&str, usize> =
                self.options.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();
            out.sort_by_key(|id| rank.get(id.as_str()).copied().unwrap_or(usize::MAX));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Committer {
    Agent,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Opened { mode: Mode },
    Decision { label: String, calls: usize, value: Value },
    Proposed { options: Vec<String>, selected: Vec<String> },
    Committed { selection: Vec<String>, by: Committer },
    Interface { id: String, kind: ResultKind, summary: String },
    Advanced { to: Stage },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: Stage,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultKind {
    Table,
    Text,
    Route,
    Findings,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub resource: String,
}

/// What one interface produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceOutput {
    pub interface: String,
    pub kind: ResultKind,
    pub text: String,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tables: Vec<Table>,
    #[serde(default)]
    pub provenance: Vec<Provenance>,
}

impl InterfaceOutput {
    pub fn new(kind: ResultKind, text: impl Into<String>, payload: Value) -> Self {
        InterfaceOutput {
            interface: String::new(),
            kind,
            text: text.into(),
            payload,
            tables: Vec::new(),
            provenance: Vec::new(),
        }
    }
}

/// The session's final answer: kind and payload of the last interface run,
/// the text of every interface, and the resources they read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub kind: ResultKind,
    pub payload: Value,
    pub text: String,
    pub provenance: Vec<Provenance>,
    pub outputs: Vec<InterfaceOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub query: String,
    pub mode: Mode,
    pub stage: Stage,
    /// Committed selection per stage.
    pub selections: BTreeMap<Stage, Vec<String>>,
    /// The proposal each committed selection was drawn from.
    pub proposals: BTreeMap<Stage, Proposal>,
    pub pending: Option<Proposal>,
    pub result: Option<ExecutionResult>,
    pub log: Vec<LogEntry>,
    /// Request ids already applied, with the stage they were applied at.
    #[serde(default)]
    pub requests: BTreeMap<String, Stage>,
}

impl Session {
    fn push(&mut self, event: LogEvent) {
        self.log.push(LogEntry {
            stage: self.stage,
            event,
        });
    }

    pub fn selection(&self, stage: Stage) -> &[String] {
        self.selections.get(&stage).map_or(&[], Vec::as_slice)
    }

    /// The log as JSON lines, the form compared across replays.
    pub fn log_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.log {
            out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("agent failed at {stage}: {error}")]
    AgentFailure { stage: Stage, error: AgentError },
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("cannot advance: session is at {stage}{}", expected.map(|e| format!(", request was for {e}")).unwrap_or_default())]
    StageOrderViolation { stage: Stage, expected: Option<Stage> },
    #[error("interface `{interface}` failed: {cause}")]
    InterfaceError { interface: String, cause: String },
}

/// Where interfaces find their data.
#[derive(Clone)]
pub struct DataContext {
    pub data_root: PathBuf,
    pub gazetteer: Gazetteer,
    pub vqa: Arc<dyn VisualAnswerer>,
}

impl DataContext {
    pub fn new(data_root: impl Into<PathBuf>, gazetteer: Gazetteer) -> Self {
        DataContext {
            data_root: data_root.into(),
            gazetteer,
            vqa: Arc::new(StubVisualAnswerer::default()),
        }
    }

    pub fn with_vqa(mut self, vqa: Arc<dyn VisualAnswerer>) -> Self {
        self.vqa = vqa;
        self
    }
}

impl fmt::Debug for DataContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataContext")
            .field("data_root", &self.data_root)
            .finish_non_exhaustive()
    }
}

/// Runs agent decisions for one stage and logs each one on the session.
pub(crate) struct Decider<'a> {
    provider: &'a dyn DecisionProvider,
    max_attempts: usize,
    stage: Stage,
    log: &'a mut Vec<LogEntry>,
}

impl Decider<'_> {
    pub(crate) fn decide(
        &mut self,
        label: &str,
        context: String,
        schema: DecisionSchema,
    ) -> Result<DecisionValue, AgentError> {
        let request = DecisionRequest::new(context, schema).with_max_attempts(self.max_attempts);
        let (value, trace) = decide_traced(self.provider, &request)?;
        tracing::debug!(label, calls = trace.calls, "decision");
        self.log.push(LogEntry {
            stage: self.stage,
            event: LogEvent::Decision {
                label: label.to_string(),
                calls: trace.calls,
                value: value.0.clone(),
            },
        });
        Ok(value)
    }
}

/// Everything a session needs to move forward. Shareable across threads.
pub struct Environment {
    catalog: Arc<Catalog>,
    provider: Arc<dyn DecisionProvider>,
    registry: InterfaceRegistry,
    data: DataContext,
    max_attempts: usize,
    next_id: AtomicU64,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("registry", &self.registry)
            .field("data", &self.data)
            .field("max_attempts", &self.max_attempts)
            .finish_non_exhaustive()
    }
}

impl Environment {
    /// An environment with the five standard interfaces.
    pub fn new(catalog: Arc<Catalog>, provider: Arc<dyn DecisionProvider>, data: DataContext) -> Self {
        Environment {
            catalog,
            provider,
            registry: InterfaceRegistry::standard(),
            data,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_registry(mut self, registry: InterfaceRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_max_attempts(mut self, n: usize) -> Self {
        self.max_attempts = n;
        self
    }

    /// Session ids continue from `n`, e.g. after restoring a snapshot.
    pub fn with_first_session_number(self, n: u64) -> Self {
        self.next_id.store(n.max(1), Ordering::SeqCst);
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn registry(&self) -> &InterfaceRegistry {
        &self.registry
    }

    pub fn data(&self) -> &DataContext {
        &self.data
    }

    fn decider<'a>(&'a self, stage: Stage, log: &'a mut Vec<LogEntry>) -> Decider<'a> {
        Decider {
            provider: &*self.provider,
            max_attempts: self.max_attempts,
            stage,
            log,
        }
    }

    pub fn open_session(&self, query: &str, mode: Mode) -> Result<Session, PipelineError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(PipelineError::EmptyQuery);
        }
        let n = self.next_id.fetch_add(1, Ordering::SeqCst);
        let mut s = Session {
            id: format!("s{n:06}"),
            query: query.to_string(),
            mode,
            stage: Stage::Classify,
            selections: BTreeMap::new(),
            proposals: BTreeMap::new(),
            pending: None,
            result: None,
            log: Vec::new(),
            requests: BTreeMap::new(),
        };
        s.push(LogEvent::Opened { mode });
        Ok(s)
    }

    /// Moves `s` forward by one step; see the module docs for the two modes.
    ///
    /// A rejected override leaves the session untouched. Agent and interface
    /// failures move it to [`Stage::Failed`].
    pub fn advance(&self, s: &mut Session, choice: Option<Vec<String>>) -> Result<(), PipelineError> {
        if s.stage.is_terminal() {
            return Err(PipelineError::StageOrderViolation {
                stage: s.stage,
                expected: None,
            });
        }
        let choice = choice.filter(|c| !c.is_empty());
        if s.mode == Mode::Automatic && choice.is_some() {
            return Err(PipelineError::InvalidOverride(
                "overrides are only accepted in control mode".into(),
            ));
        }
        if s.stage == Stage::Execute {
            if choice.is_some() {
                return Err(PipelineError::InvalidOverride("the execute stage takes no selection".into()));
            }
            return self.execute_interfaces(s).map(|_| ());
        }
        match (s.mode, s.pending.take()) {
            (Mode::Automatic, _) => {
                let p = self.propose(s)?;
                let selected = p.selected.clone();
                self.commit(s, p, selected, Committer::Agent);
            }
            (Mode::Control, None) => {
                if choice.is_some() {
                    return Err(PipelineError::StageOrderViolation {
                        stage: s.stage,
                        expected: None,
                    });
                }
                let p = self.propose(s)?;
                s.push(LogEvent::Proposed {
                    options: p.options.iter().map(|o| o.id.clone()).collect(),
                    selected: p.selected.clone(),
                });
                s.pending = Some(p);
            }
            (Mode::Control, Some(p)) => match choice {
                None => {
                    let selected = p.selected.clone();
                    self.commit(s, p, selected, Committer::Agent);
                }
                Some(ids) => {
                    let offered = p.option_ids();
                    let unknown: Vec<&str> = ids
                        .iter()
                        .map(String::as_str)
                        .filter(|id| !offered.contains(id))
                        .collect();
                    if !unknown.is_empty() {
                        let msg = format!("not among the proposed options: {}", unknown.join(", "));
                        s.pending = Some(p);
                        return Err(PipelineError::InvalidOverride(msg));
                    }
                    let selected = p.canonical(&ids);
                    self.commit(s, p, selected, Committer::User);
                }
            },
        }
        Ok(())
    }

    /// [`advance`](Self::advance) keyed by a client request id. A request id
    /// seen before is a no-op returning `Ok(false)`; with `expected` set, the
    /// session must be at that stage.
    pub fn advance_request(
        &self,
        s: &mut Session,
        request_id: Option<&str>,
        expected: Option<Stage>,
        choice: Option<Vec<String>>,
    ) -> Result<bool, PipelineError> {
        if let Some(id) = request_id {
            if s.requests.contains_key(id) {
                return Ok(false);
            }
        }
        if let Some(e) = expected {
            if e != s.stage {
                return Err(PipelineError::StageOrderViolation {
                    stage: s.stage,
                    expected: Some(e),
                });
            }
        }
        let at = s.stage;
        let out = self.advance(s, choice);
        // failures that changed the session count as applied too
        let changed = out.is_ok() || s.stage == Stage::Failed;
        if let (Some(id), true) = (request_id, changed) {
            s.requests.insert(id.to_string(), at);
        }
        out.map(|_| true)
    }

    /// Opens an automatic session and advances it until it stops.
    pub fn run(&self, query: &str) -> Result<Session, PipelineError> {
        let mut s = self.open_session(query, Mode::Automatic)?;
        self.run_session(&mut s)?;
        Ok(s)
    }

    /// Advances `s` (accepting every proposal) until Done or Failed.
    pub fn run_session(&self, s: &mut Session) -> Result<(), PipelineError> {
        while !s.stage.is_terminal() {
            self.advance(s, None)?;
        }
        Ok(())
    }

    fn propose(&self, s: &mut Session) -> Result<Proposal, PipelineError> {
        let stage = s.stage;
        let mut log = std::mem::take(&mut s.log);
        let out = {
            let mut d = self.decider(stage, &mut log);
            stages::propose(&self.catalog, &mut d, s)
        };
        s.log = log;
        out.map_err(|error| {
            self.fail(s, error.to_string());
            PipelineError::AgentFailure { stage, error }
        })
    }

    fn commit(&self, s: &mut Session, p: Proposal, selection: Vec<String>, by: Committer) {
        let stage = s.stage;
        s.push(LogEvent::Committed {
            selection: selection.clone(),
            by,
        });
        s.selections.insert(stage, selection);
        s.proposals.insert(stage, p);
        s.pending = None;
        if let Some(next) = stage.next() {
            s.stage = next;
            s.push(LogEvent::Advanced { to: next });
        }
    }

    fn fail(&self, s: &mut Session, message: String) {
        s.push(LogEvent::Failed { message });
        s.pending = None;
        s.stage = Stage::Failed;
        s.push(LogEvent::Advanced { to: Stage::Failed });
    }

    /// Runs the committed interfaces in order, each seeing the earlier
    /// outputs, and finishes the session.
    pub fn execute_interfaces(&self, s: &mut Session) -> Result<ExecutionResult, PipelineError> {
        if s.stage != Stage::Execute {
            return Err(PipelineError::StageOrderViolation {
                stage: s.stage,
                expected: Some(Stage::Execute),
            });
        }
        let ids = s.selection(Stage::SelectInterfaces).to_vec();
        if ids.is_empty() {
            return Err(self.interface_failed(s, "-", "no interface selected".into()));
        }
        let mut outputs: Vec<InterfaceOutput> = Vec::new();
        for id in &ids {
            let Some(interface) = self.registry.get(id) else {
                return Err(self.interface_failed(s, id, "no such interface is registered".into()));
            };
            let mut log = std::mem::take(&mut s.log);
            let out = {
                let mut ctx = InterfaceContext {
                    interface: id,
                    query: &s.query,
                    catalog: &self.catalog,
                    data: &self.data,
                    selections: &s.selections,
                    prior: &outputs,
                    decider: self.decider(Stage::Execute, &mut log),
                };
                interface.run(&mut ctx)
            };
            s.log = log;
            match out {
                Ok(mut o) => {
                    o.interface = id.clone();
                    s.push(LogEvent::Interface {
                        id: id.clone(),
                        kind: o.kind,
                        summary: first_line(&o.text),
                    });
                    outputs.push(o);
                }
                Err(e) => return Err(self.interface_failed(s, id, e.to_string())),
            }
        }
        let last = outputs.last().expect("at least one interface ran");
        let mut provenance: Vec<Provenance> = outputs.iter().flat_map(|o| o.provenance.clone()).collect();
        provenance.sort();
        provenance.dedup();
        let result = ExecutionResult {
            kind: last.kind,
            payload: last.payload.clone(),
            text: outputs
                .iter()
                .map(|o| o.text.trim())
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
                .join("\n\n"),
            provenance,
            outputs,
        };
        s.result = Some(result.clone());
        s.stage = Stage::Done;
        s.push(LogEvent::Advanced { to: Stage::Done });
        Ok(result)
    }

    fn interface_failed(&self, s: &mut Session, id: &str, cause: String) -> PipelineError {
        self.fail(s, format!("interface `{id}`: {cause}"));
        PipelineError::InterfaceError {
            interface: id.to_string(),
            cause,
        }
    }
}

fn first_line(text: &str) -> String {
    text.lines().next().unwrap_or("").trim().to_string()
}

#[cfg(test)]
mod tests;
