use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use crate::roadgraph::{NodeId, RoadGraph};
use crate::scalar::Scalar;

use super::search::check_endpoints;
use super::{DriverState, PlanError, RouteResult};

/// Upper bound on `k` for [`k_fastest_routes`].
pub const MAX_FASTEST_ROUTES: usize = 10;

/// Driver attribute carried in the trace of k-fastest routes.
pub const TRAVEL_TIME_ATTRIBUTE: &str = "travel_time_s";

struct Item<S> {
    cost: S,
    seq: u64,
    node: NodeId,
}

impl<S: Scalar> PartialEq for Item<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: Scalar> Eq for Item<S> {}
impl<S: Scalar> PartialOrd for Item<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: Scalar> Ord for Item<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Plain Dijkstra on travel time avoiding the given nodes and edges.
/// Returns edge indices.
fn fastest<S: Scalar>(
    g: &RoadGraph<S>,
    from: NodeId,
    to: NodeId,
    banned_nodes: &HashSet<NodeId>,
    banned_edges: &HashSet<usize>,
) -> Option<Vec<usize>> {
    let mut dist: HashMap<NodeId, S> = HashMap::from([(from, S::zero())]);
    let mut pred: HashMap<NodeId, usize> = HashMap::new();
    let mut done: HashSet<NodeId> = HashSet::new();
    let mut heap = BinaryHeap::from([Item {
        cost: S::zero(),
        seq: 0,
        node: from,
    }]);
    let mut seq = 0;
    while let Some(Item { cost, node, .. }) = heap.pop() {
        if !done.insert(node) {
            continue;
        }
        if node == to {
            let mut edges = Vec::new();
            let mut at = to;
            while at != from {
                let ei = pred[&at];
                edges.push(ei);
                at = g.edges()[ei].from;
            }
            edges.reverse();
            return Some(edges);
        }
        for e in g.out_edges(node) {
            let ei = g.edge_index(&e.id).expect("edge of g");
            if banned_edges.contains(&ei) || banned_nodes.contains(&e.to) || done.contains(&e.to) {
                continue;
            }
            let c = cost + e.travel_time_s();
            if dist.get(&e.to).is_none_or(|d| c < *d) {
                dist.insert(e.to, c);
                pred.insert(e.to, ei);
                seq += 1;
                heap.push(Item { cost: c, seq, node: e.to });
            }
        }
    }
    None
}

fn route_of<S: Scalar>(g: &RoadGraph<S>, s: NodeId, edges: &[usize], runs: usize) -> RouteResult<S> {
    let mut path = vec![s];
    let mut total = S::zero();
    let mut trace = Vec::with_capacity(edges.len());
    for &ei in edges {
        let e = &g.edges()[ei];
        total = total + e.travel_time_s();
        path.push(e.to);
        trace.push(DriverState {
            values: BTreeMap::from([(TRAVEL_TIME_ATTRIBUTE.to_string(), total)]),
        });
    }
    RouteResult {
        path,
        edges: edges.iter().map(|&i| g.edges()[i].id.clone()).collect(),
        objective_value: total,
        trace,
        settled_count: runs,
    }
}

fn cost<S: Scalar>(g: &RoadGraph<S>, edges: &[usize]) -> S {
    edges
        .iter()
        .fold(S::zero(), |acc, &i| acc + g.edges()[i].travel_time_s())
}

/// Up to `k` fastest loopless routes by travel time (Yen's algorithm), in
/// non-decreasing order. Equal times are ordered by edge-id sequence.
pub fn k_fastest_routes<S: Scalar>(
    g: &RoadGraph<S>,
    s: NodeId,
    t: NodeId,
    k: usize,
) -> Result<Vec<RouteResult<S>>, PlanError> {
    if !(1..=MAX_FASTEST_ROUTES).contains(&k) {
        return Err(PlanError::InvalidK(k));
    }
    check_endpoints(g, s, t)?;
    let mut runs = 1;
    let first = fastest(g, s, t, &HashSet::new(), &HashSet::new()).ok_or(PlanError::NoRoute { from: s, to: t })?;
    if s == t {
        return Ok(vec![route_of(g, s, &first, runs)]);
    }
    let ids = |p: &[usize]| p.iter().map(|&i| g.edges()[i].id.clone()).collect::<Vec<_>>();
    let mut accepted: Vec<Vec<usize>> = vec![first];
    let mut candidates: Vec<(S, Vec<String>, Vec<usize>)> = Vec::new();

    while accepted.len() < k {
        let prev = accepted.last().expect("non-empty").clone();
        let mut root_nodes: Vec<NodeId> = vec![s];
        for i in 0..prev.len() {
            let spur = *root_nodes.last().expect("non-empty");
            let root = &prev[..i];
            let banned_edges: HashSet<usize> = accepted
                .iter()
                .filter(|p| p.len() > i && &p[..i] == root)
                .map(|p| p[i])
                .collect();
            let banned_nodes: HashSet<NodeId> = root_nodes[..root_nodes.len() - 1].iter().copied().collect();
            runs += 1;
            if let Some(tail) = fastest(g, spur, t, &banned_nodes, &banned_edges) {
                let mut full = root.to_vec();
                full.extend(tail);
                let known = accepted.contains(&full) || candidates.iter().any(|c| c.2 == full);
                if !known {
                    candidates.push((cost(g, &full), ids(&full), full));
                }
            }
            root_nodes.push(g.edges()[prev[i]].to);
        }
        let Some(best) = (0..candidates.len()).min_by(|&a, &b| {
            let (x, y) = (&candidates[a], &candidates[b]);
            x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal).then_with(|| x.1.cmp(&y.1))
        }) else {
            break;
        };
        accepted.push(candidates.swap_remove(best).2);
    }
    Ok(accepted.iter().map(|p| route_of(g, s, p, runs)).collect())
}
