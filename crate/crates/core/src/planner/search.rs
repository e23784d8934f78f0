use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::agent::ValidationReport;
use crate::roadgraph::{NodeId, RoadGraph};
use crate::scalar::Scalar;

use super::dsl::{apply_actions, check_constraints};
use super::{Action, Constraint, DriverSpec, DriverState, PlanError, RouteResult};

const MAX_DIAGNOSTICS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    /// Dequeues allowed before giving up; guards against objectives that
    /// decrease around a cycle.
    pub max_expansions: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_expansions: 5_000_000,
        }
    }
}

/// What the search did, for diagnostics and tests.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchStats<S = f64> {
    pub settled_count: usize,
    /// Keys in dequeue order.
    pub dequeued_keys: Vec<S>,
    pub relaxed: usize,
    pub skipped_by_constraint: usize,
    pub action_faults: usize,
    /// The first few fault and comparison notes.
    pub diagnostics: Vec<String>,
}

impl<S> SearchStats<S> {
    fn note(&mut self, msg: String) {
        if self.diagnostics.len() < MAX_DIAGNOSTICS {
            self.diagnostics.push(msg);
        }
    }
}

struct Label<S> {
    node: NodeId,
    state: DriverState<S>,
    parent: Option<usize>,
    edge: Option<usize>,
}

struct Entry<S> {
    key: S,
    seq: u64,
    label: usize,
}

impl<S: Scalar> PartialEq for Entry<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: Scalar> Eq for Entry<S> {}

impl<S: Scalar> PartialOrd for Entry<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for Entry<S> {
    // reversed: BinaryHeap is a max-heap; equal keys leave in insertion order
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .partial_cmp(&self.key)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub(super) fn check_endpoints<S: Scalar>(g: &RoadGraph<S>, s: NodeId, t: NodeId) -> Result<(), PlanError> {
    for n in [s, t] {
        if !g.contains_node(n) {
            return Err(PlanError::UnknownNode(n));
        }
    }
    Ok(())
}

pub(super) fn check_objective(spec: &DriverSpec) -> Result<(), PlanError> {
    if spec.has_attribute(&spec.objective) {
        return Ok(());
    }
    let mut r = ValidationReport::default();
    r.push(
        "driver.objective",
        format!("objective `{}` must be one of the driver attributes", spec.objective),
    );
    Err(PlanError::InvalidModel(r))
}

/// Cheapest route from `s` to `t` under the driver model.
///
/// Each edge out of a dequeued label updates a copy of its driver state with
/// every action in order, then drops the edge if an action faults or any
/// constraint triggers. The key of the new label is the objective attribute of
/// the updated state. A node keeps only its best key so far: a new label
/// is queued only if the node is unseen or the key improves on it. The search
/// stops when `t` is dequeued.
pub fn plan_route<S: Scalar>(
    g: &RoadGraph<S>,
    s: NodeId,
    t: NodeId,
    spec: &DriverSpec,
    actions: &[Action<S>],
    constraints: &[Constraint<S>],
) -> Result<RouteResult<S>, PlanError> {
    plan_route_traced(g, s, t, spec, actions, constraints, SearchLimits::default()).0
}

pub fn plan_route_traced<S: Scalar>(
    g: &RoadGraph<S>,
    s: NodeId,
    t: NodeId,
    spec: &DriverSpec,
    actions: &[Action<S>],
    constraints: &[Constraint<S>],
    limits: SearchLimits,
) -> (Result<RouteResult<S>, PlanError>, SearchStats<S>) {
    let mut stats = SearchStats::default();
    if let Err(e) = check_endpoints(g, s, t).and_then(|_| check_objective(spec)) {
        return (Err(e), stats);
    }
    let objective = spec.objective.as_str();

    let mut labels: Vec<Label<S>> = vec![Label {
        node: s,
        state: DriverState::zero(spec),
        parent: None,
        edge: None,
    }];
    let mut visited: HashMap<NodeId, (S, Option<NodeId>)> = HashMap::new();
    visited.insert(s, (S::zero(), None));
    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    queue.push(Entry {
        key: S::zero(),
        seq,
        label: 0,
    });

    let mut found = None;
    while let Some(Entry { key, label, .. }) = queue.pop() {
        if stats.settled_count >= limits.max_expansions {
            return (Err(PlanError::SearchLimitExceeded(limits.max_expansions)), stats);
        }
        stats.settled_count += 1;
        stats.dequeued_keys.push(key);
        let v = labels[label].node;
        if v == t {
            found = Some(label);
            break;
        }
        for e in g.out_edges(v) {
            let next = match apply_actions(&labels[label].state, actions, e) {
                Ok(st) => st,
                Err(f) => {
                    stats.action_faults += 1;
                    stats.note(format!("edge `{}`: {f}", e.id));
                    continue;
                }
            };
            let check = check_constraints(&next, e, constraints);
            for d in check.diagnostics {
                stats.note(format!("edge `{}`: {d}", e.id));
            }
            if !check.triggered.is_empty() {
                stats.skipped_by_constraint += 1;
                continue;
            }
            let delta = next.get(objective).expect("objective is a driver attribute");
            let u = e.to;
            let improves = visited.get(&u).is_none_or(|(w, _)| delta < *w);
            if improves {
                visited.insert(u, (delta, Some(v)));
                labels.push(Label {
                    node: u,
                    state: next,
                    parent: Some(label),
                    edge: g.edge_index(&e.id),
                });
                seq += 1;
                queue.push(Entry {
                    key: delta,
                    seq,
                    label: labels.len() - 1,
                });
                stats.relaxed += 1;
            }
        }
    }

    let Some(end) = found else {
        return (Err(PlanError::NoRoute { from: s, to: t }), stats);
    };
    let mut chain = Vec::new();
    let mut cur = Some(end);
    while let Some(i) = cur {
        chain.push(i);
        cur = labels[i].parent;
    }
    chain.reverse();
    let path = chain.iter().map(|&i| labels[i].node).collect();
    let edges = chain
        .iter()
        .filter_map(|&i| labels[i].edge)
        .map(|ei| g.edges()[ei].id.clone())
        .collect();
    let trace: Vec<DriverState<S>> = chain.iter().skip(1).map(|&i| labels[i].state.clone()).collect();
    let objective_value = labels[end].state.get(objective).expect("objective is a driver attribute");
    let result = RouteResult {
        path,
        edges,
        objective_value,
        trace,
        settled_count: stats.settled_count,
    };
    (Ok(result), stats)
}

/// Re-runs the driver model along `edges` from the zero state, failing at the
/// first fault, triggered constraint or disconnected step. Returns the state
/// after each edge and the final objective.
pub fn replay_route<S: Scalar>(
    g: &RoadGraph<S>,
    edges: &[String],
    spec: &DriverSpec,
    actions: &[Action<S>],
    constraints: &[Constraint<S>],
) -> Result<(Vec<DriverState<S>>, S), PlanError> {
    check_objective(spec)?;
    let mut state = DriverState::zero(spec);
    let mut trace = Vec::with_capacity(edges.len());
    let mut at: Option<NodeId> = None;
    let fail = |index: usize, edge: &str, reason: String| PlanError::Replay {
        index,
        edge: edge.to_string(),
        reason,
    };
    for (i, id) in edges.iter().enumerate() {
        let e = g.edge(id).ok_or_else(|| fail(i, id, "no such edge".into()))?;
        if at.is_some_and(|n| n != e.from) {
            return Err(fail(i, id, "does not start where the previous edge ended".into()));
        }
        state = apply_actions(&state, actions, e).map_err(|f| fail(i, id, f.to_string()))?;
        let check = check_constraints(&state, e, constraints);
        if let Some(&c) = check.triggered.first() {
            return Err(fail(i, id, format!("constraint `{}` triggered", constraints[c].name)));
        }
        trace.push(state.clone());
        at = Some(e.to);
    }
    let objective = state.get(&spec.objective).expect("objective checked");
    Ok((trace, objective))
}
