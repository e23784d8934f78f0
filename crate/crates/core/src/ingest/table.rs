use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geo::{haversine_m, point_polyline_distance_m, LatLon};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Number,
    Text,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

/// A table cell. Serialized as the bare JSON scalar, `null` when missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn fits(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Cell::Missing, _)
                | (Cell::Number(_), ColumnType::Number)
                | (Cell::Text(_), ColumnType::Text)
                | (Cell::Bool(_), ColumnType::Boolean)
        )
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Number(x) => write!(f, "{x}"),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => f.write_str(""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        Table {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<(), IngestError> {
        if row.len() != self.columns.len() {
            return Err(IngestError::Format(format!(
                "row has {} cells, table `{}` has {} columns",
                row.len(),
                self.name,
                self.columns.len()
            )));
        }
        for (cell, col) in row.iter().zip(&self.columns) {
            if !cell.fits(col.ty) {
                return Err(IngestError::TypeMismatch(format!(
                    "cell `{cell}` does not fit {:?} column `{}`",
                    col.ty, col.name
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize, IngestError> {
        self.column_index(name).ok_or_else(|| {
            IngestError::UnknownColumn(format!("`{name}` not in table `{}`", self.name))
        })
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&Cell> {
        let i = self.column_index(column)?;
        self.rows.get(row).map(|r| &r[i])
    }

    /// Keeps only the named columns, in the given order.
    pub fn project(&self, names: &[String]) -> Result<Table, IngestError> {
        let idx = names
            .iter()
            .map(|n| self.require_column(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Table {
            name: self.name.clone(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        })
    }

    /// Plain-text rendering, one tab-separated line per row.
    pub fn to_text(&self) -> String {
        let mut out = self
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join("\t");
        for r in &self.rows {
            out.push('\n');
            out.push_str(
                &r.iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join("\t"),
            );
        }
        out
    }
}

/// Replaces every missing cell: numbers with 0, text with "None", booleans with false.
pub fn fill_missing(t: &Table) -> Table {
    let mut out = t.clone();
    for row in &mut out.rows {
        for (cell, col) in row.iter_mut().zip(&t.columns) {
            if cell.is_missing() {
                *cell = match col.ty {
                    ColumnType::Number => Cell::Number(0.0),
                    ColumnType::Text => Cell::text("None"),
                    ColumnType::Boolean => Cell::Bool(false),
                };
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "coordinates", rename_all = "lowercase")]
pub enum Geometry {
    Point(LatLon),
    Polyline(Vec<LatLon>),
}

impl Geometry {
    pub fn vertices(&self) -> &[LatLon] {
        match self {
            Geometry::Point(p) => std::slice::from_ref(p),
            Geometry::Polyline(v) => v,
        }
    }

    pub fn distance_to_m(&self, p: LatLon) -> f64 {
        match self {
            Geometry::Point(q) => haversine_m(p, *q),
            Geometry::Polyline(line) => point_polyline_distance_m(p, line),
        }
    }
}

/// A table with one WGS84 geometry per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTable {
    pub table: Table,
    pub geometry: Vec<Geometry>,
}

impl GeoTable {
    pub fn new(table: Table, geometry: Vec<Geometry>) -> Result<Self, IngestError> {
        if table.rows.len() != geometry.len() {
            return Err(IngestError::Format(format!(
                "{} rows but {} geometries",
                table.rows.len(),
                geometry.len()
            )));
        }
        if let Some(bad) = geometry
            .iter()
            .flat_map(|g| g.vertices())
            .find(|p| !p.is_valid())
        {
            return Err(IngestError::Format(format!(
                "coordinate ({}, {}) outside WGS84 range",
                bad.lat, bad.lon
            )));
        }
        Ok(GeoTable { table, geometry })
    }

    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    pub fn project(&self, names: &[String]) -> Result<GeoTable, IngestError> {
        Ok(GeoTable {
            table: self.table.project(names)?,
            geometry: self.geometry.clone(),
        })
    }

    fn retain(&self, keep: impl Fn(&Geometry) -> bool) -> GeoTable {
        let mut table = Table::new(self.table.name.clone(), self.table.columns.clone());
        let mut geometry = Vec::new();
        for (row, g) in self.table.rows.iter().zip(&self.geometry) {
            if keep(g) {
                table.rows.push(row.clone());
                geometry.push(g.clone());
            }
        }
        GeoTable { table, geometry }
    }
}

/// Rows whose geometry lies within `radius_km` of `center`.
pub fn spatial_filter(gt: &GeoTable, center: LatLon, radius_km: f64) -> GeoTable {
    let radius_m = radius_km * 1000.0;
    gt.retain(|g| g.distance_to_m(center) <= radius_m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speeds() -> Table {
        let mut t = Table::new(
            "t",
            vec![
                Column::new("speed", ColumnType::Number),
                Column::new("name", ColumnType::Text),
            ],
        );
        t.push_row(vec![Cell::Missing, Cell::text("a")]).unwrap();
        t.push_row(vec![Cell::Number(3.0), Cell::Missing]).unwrap();
        t
    }

    #[test]
    fn fill_missing_uses_zero_and_none() {
        let f = fill_missing(&speeds());
        assert_eq!(f.rows[0][0], Cell::Number(0.0));
        assert_eq!(f.rows[1][1], Cell::text("None"));
        assert_eq!(fill_missing(&f), f);
    }

    #[test]
    fn complete_table_unchanged() {
        let f = fill_missing(&speeds());
        assert_eq!(fill_missing(&f), f);
    }

    #[test]
    fn push_row_checks_arity_and_type() {
        let mut t = speeds();
        assert!(t.push_row(vec![Cell::Number(1.0)]).is_err());
        assert!(matches!(
            t.push_row(vec![Cell::text("x"), Cell::text("y")]),
            Err(IngestError::TypeMismatch(_))
        ));
    }

    fn points() -> GeoTable {
        let mut t = Table::new("p", vec![Column::new("name", ColumnType::Text)]);
        t.push_row(vec![Cell::text("toronto")]).unwrap();
        t.push_row(vec![Cell::text("ottawa")]).unwrap();
        GeoTable::new(
            t,
            vec![
                Geometry::Point(LatLon::new(43.6532, -79.3832)),
                Geometry::Point(LatLon::new(45.4215, -75.6972)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn spatial_filter_drops_far_rows() {
        let toronto = LatLon::new(43.6532, -79.3832);
        let near = spatial_filter(&points(), toronto, 100.0);
        assert_eq!(near.len(), 1);
        assert_eq!(near.table.rows[0][0], Cell::text("toronto"));
        assert_eq!(spatial_filter(&points(), toronto, 1e-9).len(), 1);
        let off = LatLon::new(44.0, -78.0);
        assert!(spatial_filter(&points(), off, 0.0001).is_empty());
    }

    #[test]
    fn polyline_distance_uses_segments() {
        let mut t = Table::new("l", vec![]);
        t.push_row(vec![]).unwrap();
        let gt = GeoTable::new(
            t,
            vec![Geometry::Polyline(vec![
                LatLon::new(45.0, -76.0),
                LatLon::new(45.0, -75.0),
            ])],
        )
        .unwrap();
        // midpoint lies ~1.1 km north of the segment interior; vertices are ~39 km away
        let probe = LatLon::new(45.01, -75.5);
        assert_eq!(spatial_filter(&gt, probe, 2.0).len(), 1);
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        let mut t = Table::new("p", vec![]);
        t.push_row(vec![]).unwrap();
        assert!(GeoTable::new(t, vec![Geometry::Point(LatLon::new(91.0, 0.0))]).is_err());
    }
}
