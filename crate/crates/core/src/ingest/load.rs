use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::catalog::{Catalog, DataFormat, NodeKind};
use crate::geo::LatLon;

use super::docs::Document;
use super::table::{Cell, Column, ColumnType, GeoTable, Geometry, Table};
use super::IngestError;

/// A loaded resource, shaped by its format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum Loaded {
    Table(Table),
    Geo(GeoTable),
    Documents(Vec<Document>),
}

impl Loaded {
    pub fn table(&self) -> Option<&Table> {
        match self {
            Loaded::Table(t) => Some(t),
            Loaded::Geo(g) => Some(&g.table),
            Loaded::Documents(_) => None,
        }
    }
}

/// Resolves the file location of a resource under `data_root`: the resource's
/// own template if it has one, else the parent DataSource template with
/// `{resource}` replaced by the resource name.
pub fn resource_path(catalog: &Catalog, resource_id: &str, data_root: &Path) -> Result<PathBuf, IngestError> {
    let node = catalog
        .node(resource_id)
        .ok_or_else(|| IngestError::Path(format!("unknown resource `{resource_id}`")))?;
    if node.kind != NodeKind::Resource {
        return Err(IngestError::Path(format!("`{resource_id}` is a {}, not a Resource", node.kind)));
    }
    let template = node
        .path_template
        .clone()
        .or_else(|| catalog.parent(resource_id).and_then(|p| p.path_template.clone()))
        .ok_or_else(|| IngestError::Path(format!("no path template for `{resource_id}`")))?;
    let rel = template.replace("{resource}", &node.name);
    let path = data_root.join(rel);
    if !path.exists() {
        return Err(IngestError::Path(format!("{} does not exist", path.display())));
    }
    Ok(path)
}

/// Loads a catalog resource and keeps only `attributes` (all columns when empty).
pub fn load_resource(
    catalog: &Catalog,
    resource_id: &str,
    attributes: &[String],
    data_root: &Path,
) -> Result<Loaded, IngestError> {
    let path = resource_path(catalog, resource_id, data_root)?;
    let name = catalog
        .node(resource_id)
        .map(|n| n.name.clone())
        .unwrap_or_else(|| resource_id.to_string());
    let format = catalog
        .effective_format(resource_id)
        .ok_or_else(|| IngestError::Format(format!("no format for `{resource_id}`")))?;
    let loaded = match format {
        DataFormat::Tabular => Loaded::Table(read_csv(&path, &name)?),
        DataFormat::Geospatial => Loaded::Geo(read_geojson(&path, &name)?),
        DataFormat::ApiFixture => match read_json_records(&path, &name)? {
            (t, Some(g)) => Loaded::Geo(GeoTable::new(t, g)?),
            (t, None) => Loaded::Table(t),
        },
        DataFormat::Document => return Ok(Loaded::Documents(read_documents(&path)?)),
    };
    select_attributes(loaded, attributes)
}

fn select_attributes(loaded: Loaded, attributes: &[String]) -> Result<Loaded, IngestError> {
    if attributes.is_empty() {
        return Ok(loaded);
    }
    let table = loaded.table().expect("documents handled by caller");
    if let Some(bad) = attributes.iter().find(|a| table.column_index(a).is_none()) {
        return Err(IngestError::UnknownAttribute(format!(
            "`{bad}` is not a column of `{}`",
            table.name
        )));
    }
    Ok(match loaded {
        Loaded::Table(t) => Loaded::Table(t.project(attributes)?),
        Loaded::Geo(g) => Loaded::Geo(g.project(attributes)?),
        docs => docs,
    })
}

fn infer(cells: &[Cell]) -> ColumnType {
    let present = cells.iter().filter(|c| !c.is_missing());
    let mut ty = None;
    for c in present {
        let t = match c {
            Cell::Number(_) => ColumnType::Number,
            Cell::Bool(_) => ColumnType::Boolean,
            _ => ColumnType::Text,
        };
        ty = match ty {
            None => Some(t),
            Some(prev) if prev == t => Some(t),
            Some(_) => return ColumnType::Text,
        };
    }
    ty.unwrap_or(ColumnType::Text)
}

/// Builds a typed table from loosely typed columns; mixed columns become text.
fn typed_table(name: &str, names: Vec<String>, mut columns: Vec<Vec<Cell>>) -> Table {
    let types: Vec<ColumnType> = columns.iter().map(|c| infer(c)).collect();
    for (col, ty) in columns.iter_mut().zip(&types) {
        if *ty == ColumnType::Text {
            for c in col.iter_mut() {
                if !c.is_missing() && !matches!(c, Cell::Text(_)) {
                    *c = Cell::Text(c.to_string());
                }
            }
        }
    }
    let n = columns.first().map_or(0, Vec::len);
    Table {
        name: name.to_string(),
        columns: names
            .into_iter()
            .zip(types)
            .map(|(n, t)| Column::new(n, t))
            .collect(),
        rows: (0..n)
            .map(|i| columns.iter().map(|c| c[i].clone()).collect())
            .collect(),
    }
}

fn parse_csv_cell(s: &str) -> Cell {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("null") {
        Cell::Missing
    } else if let Ok(x) = t.parse::<f64>() {
        Cell::Number(x)
    } else if t.eq_ignore_ascii_case("true") {
        Cell::Bool(true)
    } else if t.eq_ignore_ascii_case("false") {
        Cell::Bool(false)
    } else {
        Cell::Text(t.to_string())
    }
}

pub fn read_csv(path: &Path, name: &str) -> Result<Table, IngestError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::Format(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); headers.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))?;
        for (i, col) in columns.iter_mut().enumerate() {
            col.push(rec.get(i).map_or(Cell::Missing, parse_csv_cell));
        }
    }
    Ok(typed_table(name, headers, columns))
}

fn json_cell(v: &Value) -> Cell {
    match v {
        Value::Null => Cell::Missing,
        Value::Bool(b) => Cell::Bool(*b),
        Value::Number(n) => n.as_f64().map_or(Cell::Missing, Cell::Number),
        Value::String(s) if s.is_empty() => Cell::Missing,
        Value::String(s) => Cell::Text(s.clone()),
        other => Cell::Text(other.to_string()),
    }
}

/// Columns in first-seen key order across all records.
fn records_to_table(name: &str, records: &[&Map<String, Value>]) -> Table {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        for k in r.keys() {
            if !names.contains(k) {
                names.push(k.clone());
            }
        }
    }
    let columns = names
        .iter()
        .map(|n| {
            records
                .iter()
                .map(|r| r.get(n).map_or(Cell::Missing, json_cell))
                .collect()
        })
        .collect();
    typed_table(name, names, columns)
}

fn lat_lon_keys(r: &Map<String, Value>) -> Option<LatLon> {
    let get = |keys: &[&str]| {
        r.iter()
            .find(|(k, _)| keys.iter().any(|x| k.eq_ignore_ascii_case(x)))
            .and_then(|(_, v)| v.as_f64())
    };
    Some(LatLon::new(
        get(&["lat", "latitude"])?,
        get(&["lon", "lng", "longitude"])?,
    ))
}

/// A JSON array of flat records. When every record carries lat/lon keys the
/// rows also get point geometry.
pub fn read_json_records(path: &Path, name: &str) -> Result<(Table, Option<Vec<Geometry>>), IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| IngestError::Path(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))?;
    let arr = v
        .as_array()
        .ok_or_else(|| IngestError::Format(format!("{}: expected a JSON array", path.display())))?;
    let records = arr
        .iter()
        .map(|r| {
            r.as_object()
                .ok_or_else(|| IngestError::Format("array items must be objects".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = records_to_table(name, &records);
    let points: Option<Vec<Geometry>> = records
        .iter()
        .map(|r| lat_lon_keys(r).map(Geometry::Point))
        .collect();
    Ok((table, points.filter(|p| !p.is_empty())))
}

fn position(v: &Value) -> Result<LatLon, IngestError> {
    let a = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| IngestError::Format(format!("bad GeoJSON position {v}")))?;
    let lon = a[0].as_f64();
    let lat = a[1].as_f64();
    match (lat, lon) {
        (Some(lat), Some(lon)) => Ok(LatLon::new(lat, lon)),
        _ => Err(IngestError::Format(format!("bad GeoJSON position {v}"))),
    }
}

fn line(v: &Value) -> Result<Vec<LatLon>, IngestError> {
    v.as_array()
        .ok_or_else(|| IngestError::Format("LineString coordinates must be an array".into()))?
        .iter()
        .map(position)
        .collect()
}

/// Geometries of one GeoJSON geometry object; multi-geometries yield one entry per part.
fn geometries(g: &Value) -> Result<Vec<Geometry>, IngestError> {
    let coords = &g["coordinates"];
    match g["type"].as_str() {
        Some("Point") => Ok(vec![Geometry::Point(position(coords)?)]),
        Some("MultiPoint") => coords
            .as_array()
            .into_iter()
            .flatten()
            .map(|p| position(p).map(Geometry::Point))
            .collect(),
        Some("LineString") => Ok(vec![Geometry::Polyline(line(coords)?)]),
        Some("MultiLineString") => coords
            .as_array()
            .into_iter()
            .flatten()
            .map(|l| line(l).map(Geometry::Polyline))
            .collect(),
        other => Err(IngestError::Format(format!(
            "unsupported GeoJSON geometry {other:?}"
        ))),
    }
}

/// Parses a GeoJSON FeatureCollection into a [`GeoTable`].
pub fn parse_geojson(text: &str, name: &str) -> Result<GeoTable, IngestError> {
    let v: Value = serde_json::from_str(text).map_err(|e| IngestError::Format(e.to_string()))?;
    if v["type"] != "FeatureCollection" {
        return Err(IngestError::Format("expected a GeoJSON FeatureCollection".into()));
    }
    let empty = Map::new();
    let mut props = Vec::new();
    let mut geoms = Vec::new();
    for f in v["features"].as_array().into_iter().flatten() {
        let p = f["properties"].as_object().unwrap_or(&empty);
        for g in geometries(&f["geometry"])? {
            props.push(p);
            geoms.push(g);
        }
    }
    GeoTable::new(records_to_table(name, &props), geoms)
}

pub fn read_geojson(path: &Path, name: &str) -> Result<GeoTable, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| IngestError::Path(format!("{}: {e}", path.display())))?;
    parse_geojson(&text, name)
        .map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))
}

/// Every `*.txt` file in a directory (or the file itself): id = file stem,
/// title = first line, text = the rest.
pub fn read_documents(path: &Path) -> Result<Vec<Document>, IngestError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| IngestError::Path(format!("{}: {e}", path.display())))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut by_id = BTreeMap::new();
    for f in files {
        let text = std::fs::read_to_string(&f)
            .map_err(|e| IngestError::Path(format!("{}: {e}", f.display())))?;
        let (title, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
        let id = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        by_id.insert(
            id.clone(),
            Document {
                id,
                title: title.trim().to_string(),
                text: body.trim().to_string(),
            },
        );
    }
    Ok(by_id.into_values().collect())
}

/// Serializes polylines and points back to a GeoJSON FeatureCollection.
pub fn to_geojson(gt: &GeoTable) -> Value {
    let features: Vec<Value> = gt
        .geometry
        .iter()
        .zip(&gt.table.rows)
        .map(|(g, row)| {
            let props: Map<String, Value> = gt
                .table
                .columns
                .iter()
                .zip(row)
                .map(|(c, v)| (c.name.clone(), serde_json::to_value(v).expect("cell serializes")))
                .collect();
            serde_json::json!({
                "type": "Feature",
                "properties": props,
                "geometry": geometry_json(g),
            })
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": features})
}

pub fn geometry_json(g: &Geometry) -> Value {
    match g {
        Geometry::Point(p) => serde_json::json!({"type": "Point", "coordinates": [p.lon, p.lat]}),
        Geometry::Polyline(l) => serde_json::json!({
            "type": "LineString",
            "coordinates": l.iter().map(|p| [p.lon, p.lat]).collect::<Vec<_>>(),
        }),
    }
}
