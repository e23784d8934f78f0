use std::collections::BTreeMap;

use crate::geo::{point_polyline_distance_m, polyline_distance_m, BBox, LatLon};
use crate::ingest::{Cell, GeoTable, Geometry};
use crate::scalar::Scalar;

use super::{AttrValue, Attributes, Edge, JoinedFeature, RoadGraph, RoadGraphError};

/// Geometric join tolerance matching the road network's stated accuracy.
pub const DEFAULT_JOIN_TOLERANCE_M: f64 = 10.0;

fn key_matches<S: Scalar>(edge_value: &AttrValue<S>, key: &Cell) -> bool {
    match (edge_value, key) {
        (AttrValue::Number(a), Cell::Number(b)) => a.as_f64() == *b,
        (v, k) => v.to_string() == k.to_string(),
    }
}

fn geometry_distance<S: Scalar>(g: &Geometry, line: &[LatLon<S>]) -> f64 {
    let line: Vec<LatLon> = line.iter().map(|p| p.cast()).collect();
    match g {
        Geometry::Point(p) => point_polyline_distance_m(*p, &line),
        Geometry::Polyline(v) => polyline_distance_m(v, &line),
    }
}

/// Attaches every feature to each edge it matches.
///
/// With `key_column` set and a non-missing key on the feature, edges whose
/// attribute of the same name equals the key match. Features without a key,
/// or whose key matches no edge, fall back to geometry: every edge within
/// `tolerance_m` matches. A feature matching several edges is attached to each.
///
/// Feature attributes are recorded under [`Edge::joined`] and also copied onto
/// the edge's own attributes; a name already present there is written as
/// `{table}.{name}` instead, and the first value written wins.
pub fn spatial_join<S: Scalar>(
    g: &RoadGraph<S>,
    features: &GeoTable,
    tolerance_m: f64,
    key_column: Option<&str>,
) -> Result<RoadGraph<S>, RoadGraphError> {
    if !(tolerance_m > 0.0) {
        return Err(RoadGraphError::InvalidTolerance(tolerance_m));
    }
    let t = &features.table;
    let key_idx = key_column.and_then(|k| t.column_index(k).map(|i| (k, i)));
    let boxes: Vec<Option<BBox>> = g
        .edges()
        .iter()
        .map(|e| BBox::of(&e.geometry).map(|b| b.expand_m(tolerance_m)))
        .collect();
    let mut edges: Vec<Edge<S>> = g.edges().to_vec();

    for (fi, (row, geom)) in t.rows.iter().zip(&features.geometry).enumerate() {
        let mut by_key = false;
        let mut matched: Vec<usize> = Vec::new();
        if let Some((k, ki)) = key_idx {
            if !row[ki].is_missing() {
                matched = g
                    .edges()
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.attributes.get(k).is_some_and(|v| key_matches(v, &row[ki])))
                    .map(|(i, _)| i)
                    .collect();
                by_key = !matched.is_empty();
            }
        }
        if !by_key {
            let fbox = BBox::of(geom.vertices());
            matched = g
                .edges()
                .iter()
                .enumerate()
                .filter(|(i, e)| {
                    let near = match (&boxes[*i], &fbox) {
                        (Some(a), Some(b)) => a.intersects(b),
                        _ => false,
                    };
                    near && geometry_distance(geom, &e.geometry) <= tolerance_m
                })
                .map(|(i, _)| i)
                .collect();
        }
        if matched.is_empty() {
            continue;
        }
        let attributes: Attributes<S> = t
            .columns
            .iter()
            .enumerate()
            .filter(|(ci, _)| !(by_key && key_idx.is_some_and(|(_, ki)| ki == *ci)))
            .filter_map(|(ci, c)| AttrValue::from_cell(&row[ci]).map(|v| (c.name.clone(), v)))
            .collect();
        for i in matched {
            let e = &mut edges[i];
            for (name, v) in &attributes {
                let slot = if e.attributes.contains_key(name) {
                    format!("{}.{name}", t.name)
                } else {
                    name.clone()
                };
                e.attributes.entry(slot).or_insert_with(|| v.clone());
            }
            e.joined.push(JoinedFeature {
                table: t.name.clone(),
                feature_index: fi,
                attributes: attributes.clone(),
            });
        }
    }
    Ok(RoadGraph::from_edges(edges).expect("same edge ids"))
}

/// Gives every edge every attribute some edge has: numbers default to 0,
/// text to `"None"`. An attribute's kind is taken from the first edge (in
/// edge order) that carries it.
pub fn fill_missing_attributes<S: Scalar>(g: &RoadGraph<S>) -> RoadGraph<S> {
    let mut defaults: BTreeMap<String, AttrValue<S>> = BTreeMap::new();
    for e in g.edges() {
        for (k, v) in &e.attributes {
            defaults.entry(k.clone()).or_insert_with(|| match v {
                AttrValue::Number(_) => AttrValue::Number(S::zero()),
                AttrValue::Text(_) => AttrValue::Text("None".into()),
            });
        }
    }
    let edges = g
        .edges()
        .iter()
        .map(|e| {
            let mut e = e.clone();
            for (k, d) in &defaults {
                e.attributes.entry(k.clone()).or_insert_with(|| d.clone());
            }
            e
        })
        .collect();
    RoadGraph::from_edges(edges).expect("same edge ids")
}
