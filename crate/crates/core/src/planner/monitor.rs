use std::collections::BTreeMap;

use crate::ingest::{Cell, Column, ColumnType, Table};
use crate::roadgraph::{AttrValue, RoadGraph};
use crate::scalar::Scalar;

use super::RouteResult;

/// One row per joined feature on each route edge: `route`, `edge_id`,
/// `source`, `feature`, then every feature attribute seen, sorted by name.
/// A feature joined onto two edges of a route appears twice.
pub fn monitor_routes<S: Scalar>(routes: &[RouteResult<S>], g: &RoadGraph<S>) -> Table {
    let mut kinds: BTreeMap<String, ColumnType> = BTreeMap::new();
    let mut hits = Vec::new();
    for (ri, r) in routes.iter().enumerate() {
        for id in &r.edges {
            let Some(e) = g.edge(id) else { continue };
            for f in &e.joined {
                for (k, v) in &f.attributes {
                    kinds.entry(k.clone()).or_insert(match v {
                        AttrValue::Number(_) => ColumnType::Number,
                        AttrValue::Text(_) => ColumnType::Text,
                    });
                }
                hits.push((ri, id.clone(), f));
            }
        }
    }
    let mut columns = vec![
        Column::new("route", ColumnType::Number),
        Column::new("edge_id", ColumnType::Text),
        Column::new("source", ColumnType::Text),
        Column::new("feature", ColumnType::Number),
    ];
    columns.extend(kinds.iter().map(|(k, ty)| Column::new(k.clone(), *ty)));
    let mut t = Table::new("findings", columns);
    for (ri, edge_id, f) in hits {
        let mut row = vec![
            Cell::Number(ri as f64),
            Cell::Text(edge_id),
            Cell::Text(f.table.clone()),
            Cell::Number(f.feature_index as f64),
        ];
        row.extend(kinds.iter().map(|(k, ty)| match (f.attributes.get(k), ty) {
            (Some(AttrValue::Number(n)), ColumnType::Number) => Cell::Number(n.as_f64()),
            (Some(v), ColumnType::Text) => Cell::Text(v.to_string()),
            _ => Cell::Missing,
        }));
        t.push_row(row).expect("row matches columns");
    }
    t
}
