use crate::geo::LatLon;
use crate::ingest::{GeoTable, Geometry};
use crate::scalar::Scalar;

use super::{AttrValue, Attributes, Edge, RoadGraph, RoadGraphError};

/// One edge per direction of travel for every segment row.
///
/// `direction` is `forward`, `backward` or `both`; absent or missing means
/// `both`. Edge ids are `seg{row}+` for the digitized direction and
/// `seg{row}-` for the reverse.
pub fn build_graph<S: Scalar>(segments: &GeoTable) -> Result<RoadGraph<S>, RoadGraphError> {
    let t = &segments.table;
    let dir_col = t.column_index("direction");
    let mut edges = Vec::new();
    for (row, (cells, geom)) in t.rows.iter().zip(&segments.geometry).enumerate() {
        let points: Vec<LatLon<S>> = match geom {
            Geometry::Polyline(v) if v.len() >= 2 => v.iter().map(|p| p.cast()).collect(),
            _ => return Err(RoadGraphError::DegenerateSegment { row }),
        };
        let attributes: Attributes<S> = t
            .columns
            .iter()
            .zip(cells)
            .filter_map(|(c, v)| AttrValue::from_cell(v).map(|a| (c.name.clone(), a)))
            .collect();
        let direction = dir_col
            .and_then(|i| cells[i].as_str())
            .map(|s| s.trim().to_ascii_lowercase());
        let (fwd, bwd) = match direction.as_deref() {
            None | Some("both") | Some("") => (true, true),
            Some("forward") => (true, false),
            Some("backward") => (false, true),
            Some(other) => {
                return Err(RoadGraphError::InvalidDirection {
                    row,
                    value: other.to_string(),
                })
            }
        };
        if fwd {
            edges.push(Edge::new(format!("seg{row:06}+"), points.clone(), attributes.clone()));
        }
        if bwd {
            let mut rev = points;
            rev.reverse();
            edges.push(Edge::new(format!("seg{row:06}-"), rev, attributes));
        }
    }
    RoadGraph::from_edges(edges)
}
