use std::collections::HashSet;

use crate::roadgraph::{NodeId, RoadGraph};
use crate::scalar::Scalar;

use super::dsl::{apply_actions, check_constraints};
use super::search::{check_endpoints, check_objective};
use super::{Action, Constraint, DriverSpec, DriverState, PlanError, RouteResult};

struct Best<S> {
    objective: S,
    path: Vec<NodeId>,
    edges: Vec<String>,
    trace: Vec<DriverState<S>>,
}

struct Walk<'a, S> {
    g: &'a RoadGraph<S>,
    t: NodeId,
    spec: &'a DriverSpec,
    actions: &'a [Action<S>],
    constraints: &'a [Constraint<S>],
    max_edges: usize,
    on_path: HashSet<NodeId>,
    path: Vec<NodeId>,
    edges: Vec<String>,
    trace: Vec<DriverState<S>>,
    best: Option<Best<S>>,
    explored: usize,
}

impl<S: Scalar> Walk<'_, S> {
    fn offer(&mut self, state: &DriverState<S>) {
        let objective = state.get(&self.spec.objective).expect("objective checked");
        let better = match &self.best {
            None => true,
            Some(b) => {
                objective < b.objective
                    || (objective == b.objective
                        && (self.path.as_slice(), self.edges.as_slice()) < (b.path.as_slice(), b.edges.as_slice()))
            }
        };
        if better {
            self.best = Some(Best {
                objective,
                path: self.path.clone(),
                edges: self.edges.clone(),
                trace: self.trace.clone(),
            });
        }
    }

    fn extend(&mut self, v: NodeId, state: &DriverState<S>) {
        if v == self.t {
            self.offer(state);
            return;
        }
        if self.edges.len() == self.max_edges {
            return;
        }
        let g = self.g;
        for e in g.out_edges(v) {
            if self.on_path.contains(&e.to) {
                continue;
            }
            self.explored += 1;
            let Ok(next) = apply_actions(state, self.actions, e) else {
                continue;
            };
            if !check_constraints(&next, e, self.constraints).triggered.is_empty() {
                continue;
            }
            self.on_path.insert(e.to);
            self.path.push(e.to);
            self.edges.push(e.id.clone());
            self.trace.push(next.clone());
            self.extend(e.to, &next);
            self.trace.pop();
            self.edges.pop();
            self.path.pop();
            self.on_path.remove(&e.to);
        }
    }
}

/// Exhaustive search over simple paths of at most `max_edges` edges.
///
/// A path is feasible when no edge along it faults or triggers a constraint.
/// Returns the feasible path with the smallest objective; equal objectives go
/// to the lexicographically smallest node sequence, then edge-id sequence.
pub fn brute_force_plan<S: Scalar>(
    g: &RoadGraph<S>,
    s: NodeId,
    t: NodeId,
    spec: &DriverSpec,
    actions: &[Action<S>],
    constraints: &[Constraint<S>],
    max_edges: usize,
) -> Result<RouteResult<S>, PlanError> {
    check_endpoints(g, s, t)?;
    check_objective(spec)?;
    let mut w = Walk {
        g,
        t,
        spec,
        actions,
        constraints,
        max_edges,
        on_path: HashSet::from([s]),
        path: vec![s],
        edges: Vec::new(),
        trace: Vec::new(),
        best: None,
        explored: 0,
    };
    w.extend(s, &DriverState::zero(spec));
    let explored = w.explored;
    let b = w.best.ok_or(PlanError::NoRoute { from: s, to: t })?;
    Ok(RouteResult {
        path: b.path,
        edges: b.edges,
        objective_value: b.objective,
        trace: b.trace,
        settled_count: explored,
    })
}
