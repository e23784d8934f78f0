use std::collections::BTreeMap;

use num_rational::Ratio;

use crate::scalar::Scalar;

use super::{NodeId, RoadGraph, RoadGraphError};

/// The largest component must hold strictly more than this share of edges.
pub const MIN_COMPONENT_SHARE: Ratio<u64> = Ratio::new_raw(9999, 10000);

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Edge indices of each weakly connected component, largest first; equal
/// sizes are ordered by their smallest node.
pub fn weak_components<S: Scalar>(g: &RoadGraph<S>) -> Vec<Vec<usize>> {
    let index: BTreeMap<NodeId, usize> = g.nodes().enumerate().map(|(i, n)| (n, i)).collect();
    let mut parent: Vec<usize> = (0..index.len()).collect();
    for e in g.edges() {
        let (a, b) = (find(&mut parent, index[&e.from]), find(&mut parent, index[&e.to]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in g.edges().iter().enumerate() {
        let root = find(&mut parent, index[&e.from]);
        groups.entry(root).or_default().push(i);
    }
    // roots are the smallest node index of their component
    let mut comps: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();
    comps.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    comps.into_iter().map(|(_, v)| v).collect()
}

/// The largest weakly connected component, provided it holds more than
/// 99.99% of the edges. The share is compared as an exact fraction.
pub fn largest_component<S: Scalar>(g: &RoadGraph<S>) -> Result<RoadGraph<S>, RoadGraphError> {
    let comps = weak_components(g);
    let Some(largest) = comps.first() else {
        return Err(RoadGraphError::EmptyGraph);
    };
    let share = Ratio::new(largest.len() as u64, g.edge_count() as u64);
    if share <= MIN_COMPONENT_SHARE {
        return Err(RoadGraphError::FragmentedNetwork { share });
    }
    if largest.len() == g.edge_count() {
        return Ok(g.clone());
    }
    let mut keep = largest.clone();
    keep.sort_unstable();
    let edges = keep.into_iter().map(|i| g.edges()[i].clone()).collect();
    Ok(RoadGraph::from_edges(edges).expect("subset of a valid graph"))
}
