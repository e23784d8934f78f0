use std::collections::HashMap;

use crate::geo::{haversine_m, LatLon, EARTH_RADIUS_M};
use crate::scalar::Scalar;

use super::{NodeId, RoadGraph, RoadGraphError};

/// Cell edge in micro-degrees (0.01°).
const CELL_E6: i64 = 10_000;
const LINEAR_SCAN_MAX: usize = 32;

/// Uniform grid over node coordinates.
#[derive(Debug, Clone, Default)]
pub(super) struct NodeGrid {
    cells: HashMap<(i64, i64), Vec<NodeId>>,
    bounds: Option<(i64, i64, i64, i64)>,
    wraps: bool,
}

impl NodeGrid {
    pub(super) fn build(nodes: impl Iterator<Item = NodeId>) -> Self {
        let mut g = NodeGrid::default();
        let (mut west, mut east) = (false, false);
        for n in nodes {
            let c = (n.0.div_euclid(CELL_E6), n.1.div_euclid(CELL_E6));
            g.cells.entry(c).or_default().push(n);
            g.bounds = Some(match g.bounds {
                None => (c.0, c.0, c.1, c.1),
                Some((a0, a1, b0, b1)) => (a0.min(c.0), a1.max(c.0), b0.min(c.1), b1.max(c.1)),
            });
            west |= n.1 < -90_000_000;
            east |= n.1 > 90_000_000;
        }
        // ring bounds assume longitudes do not wrap
        g.wraps = west && east;
        g
    }
}

fn better<S: Scalar>(cand: (S, NodeId), best: Option<(S, NodeId)>) -> bool {
    match best {
        None => true,
        Some((d, n)) => cand.0 < d || (cand.0 == d && cand.1 < n),
    }
}

fn linear<S: Scalar>(g: &RoadGraph<S>, p: LatLon<S>) -> Option<NodeId> {
    let mut best = None;
    for n in g.nodes() {
        let cand = (haversine_m(p, n.to_latlon()), n);
        if better(cand, best) {
            best = Some(cand);
        }
    }
    best.map(|b| b.1)
}

/// Angular distance (radians) from latitude `lat` to any point at least
/// `dlon` degrees of longitude away.
fn meridian_gap(lat_deg: f64, dlon_deg: f64) -> f64 {
    let d = dlon_deg.clamp(0.0, 90.0).to_radians();
    (d.sin() * lat_deg.to_radians().cos()).clamp(-1.0, 1.0).asin()
}

/// Node closest to `p` by haversine distance; ties go to the smaller id.
pub fn nearest_node<S: Scalar>(g: &RoadGraph<S>, p: LatLon<S>) -> Result<NodeId, RoadGraphError> {
    if g.node_count() == 0 {
        return Err(RoadGraphError::EmptyGraph);
    }
    let grid = &g.grid;
    if g.node_count() <= LINEAR_SCAN_MAX || grid.wraps {
        return Ok(linear(g, p).expect("non-empty"));
    }
    let (a0, a1, b0, b1) = grid.bounds.expect("non-empty");
    let (lat, lon) = (p.lat.as_f64(), p.lon.as_f64());
    let qa = (lat * 100.0).floor() as i64;
    let qb = (lon * 100.0).floor() as i64;
    let mut best: Option<(S, NodeId)> = None;
    let mut r = 0i64;
    let mut visited = 0usize;
    loop {
        // sparse graphs: scanning empty rings costs more than a linear pass
        visited += if r == 0 { 1 } else { 8 * r as usize };
        if visited > 4 * g.node_count() {
            return Ok(linear(g, p).expect("non-empty"));
        }
        for a in (qa - r)..=(qa + r) {
            for b in (qb - r)..=(qb + r) {
                if (a - qa).abs() != r && (b - qb).abs() != r {
                    continue;
                }
                for &n in grid.cells.get(&(a, b)).into_iter().flatten() {
                    let cand = (haversine_m(p, n.to_latlon()), n);
                    if better(cand, best) {
                        best = Some(cand);
                    }
                }
            }
        }
        if qa - r <= a0 && qa + r >= a1 && qb - r <= b0 && qb + r >= b1 {
            break;
        }
        if let Some((d, _)) = best {
            let south = lat - (qa - r) as f64 / 100.0;
            let north = (qa + r + 1) as f64 / 100.0 - lat;
            let west = lon - (qb - r) as f64 / 100.0;
            let east = (qb + r + 1) as f64 / 100.0 - lon;
            let gap = south
                .to_radians()
                .min(north.to_radians())
                .min(meridian_gap(lat, west))
                .min(meridian_gap(lat, east));
            let bound = EARTH_RADIUS_M * gap * (1.0 - 1e-6);
            if d.as_f64() < bound {
                break;
            }
        }
        r += 1;
    }
    Ok(best.expect("grid covers every node").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadgraph::{Attributes, Edge};
    use proptest::prelude::*;

    fn graph(points: &[(f64, f64)]) -> RoadGraph {
        let edges = points
            .chunks(2)
            .enumerate()
            .map(|(i, w)| {
                let b = w.get(1).unwrap_or(&w[0]);
                Edge::new(
                    format!("e{i:04}"),
                    vec![LatLon::new(w[0].0, w[0].1), LatLon::new(b.0, b.1)],
                    Attributes::new(),
                )
            })
            .collect();
        RoadGraph::from_edges(edges).unwrap()
    }

    #[test]
    fn exact_node() {
        let g = graph(&[(43.0, -79.0), (43.1, -79.0)]);
        assert_eq!(nearest_node(&g, LatLon::new(43.1, -79.0)).unwrap(), NodeId(43_100_000, -79_000_000));
    }

    #[test]
    fn one_metre_closer_wins() {
        // A and B 1000 m apart on the equator; p sits 1 m nearer A than B.
        let m_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let b_lon = 1000.0 / m_per_deg;
        let p_lon = 499.5 / m_per_deg;
        let g = graph(&[(0.0, 0.0), (0.0, b_lon)]);
        let p = LatLon::new(0.0, p_lon);
        let da = haversine_m(p, NodeId(0, 0).to_latlon());
        let db = haversine_m(p, NodeId::quantize(LatLon::new(0.0, b_lon)).to_latlon());
        assert!((db - da - 1.0).abs() < 0.2);
        assert_eq!(nearest_node(&g, p).unwrap(), NodeId(0, 0));
    }

    #[test]
    fn tie_goes_to_smaller_id() {
        let g = graph(&[(0.0, -0.001), (0.0, 0.001)]);
        assert_eq!(nearest_node(&g, LatLon::new(0.0, 0.0)).unwrap(), NodeId(0, -1000));
    }

    #[test]
    fn empty_graph() {
        assert_eq!(
            nearest_node(&RoadGraph::<f64>::empty(), LatLon::new(0.0, 0.0)).unwrap_err(),
            RoadGraphError::EmptyGraph
        );
    }

    proptest! {
        #[test]
        fn grid_matches_linear_scan(
            pts in prop::collection::vec((43.0f64..44.0, -80.0f64..-79.0), 40..120),
            q in (42.5f64..44.5, -80.5f64..-78.5),
        ) {
            let g = graph(&pts);
            let p = LatLon::new(q.0, q.1);
            prop_assert_eq!(nearest_node(&g, p).unwrap(), linear(&g, p).unwrap());
        }

        #[test]
        fn grid_matches_linear_scan_sparse(
            pts in prop::collection::vec((-60.0f64..60.0, -170.0f64..170.0), 40..80),
            q in (-80.0f64..80.0, -179.0f64..179.0),
        ) {
            let g = graph(&pts);
            let p = LatLon::new(q.0, q.1);
            prop_assert_eq!(nearest_node(&g, p).unwrap(), linear(&g, p).unwrap());
        }
    }
}
