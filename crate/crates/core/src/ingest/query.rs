use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::table::{Cell, Column, ColumnType, Table};
use super::IngestError;

/// Named tables available to [`run_query`].
pub type TableStore = BTreeMap<String, Table>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOp {
    #[serde(rename = "=", alias = "==")]
    Eq,
    #[serde(rename = "!=", alias = "≠")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "contains")]
    Contains,
}

impl FilterOp {
    pub const SYMBOLS: [&'static str; 7] = ["=", "!=", "<", "<=", ">", ">=", "contains"];

    pub fn parse(s: &str) -> Option<FilterOp> {
        serde_json::from_value(Value::String(s.trim().to_string())).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub op: FilterOp,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "fn")]
    pub func: AggFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sort {
    pub column: String,
    #[serde(default)]
    pub direction: Direction,
}

/// A structured, validated replacement for a query-language string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableQuery {
    pub table: String,
    #[serde(default)]
    pub filters: Vec<Filter>,
    /// Columns to keep; empty keeps all.
    #[serde(default)]
    pub project: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<Sort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

impl TableQuery {
    pub fn all(table: impl Into<String>) -> Self {
        TableQuery {
            table: table.into(),
            filters: vec![],
            project: vec![],
            aggregate: None,
            sort: None,
            limit: None,
        }
    }
}

enum Operand {
    Number(f64),
    Text(String),
    Bool(bool),
}

fn coerce(filter: &Filter, ty: ColumnType) -> Result<Operand, IngestError> {
    let mismatch = || {
        IngestError::TypeMismatch(format!(
            "`{}` {:?} {} on a {:?} column",
            filter.column, filter.op, filter.value, ty
        ))
    };
    let numeric_op = matches!(
        filter.op,
        FilterOp::Lt | FilterOp::Le | FilterOp::Gt | FilterOp::Ge
    );
    match ty {
        ColumnType::Number => {
            if filter.op == FilterOp::Contains {
                return Err(mismatch());
            }
            match &filter.value {
                Value::Number(n) => n.as_f64().map(Operand::Number).ok_or_else(mismatch),
                Value::String(s) => s.trim().parse().map(Operand::Number).map_err(|_| mismatch()),
                _ => Err(mismatch()),
            }
        }
        ColumnType::Text => {
            if numeric_op {
                return Err(mismatch());
            }
            match &filter.value {
                Value::String(s) => Ok(Operand::Text(s.to_lowercase())),
                Value::Number(n) => Ok(Operand::Text(n.to_string())),
                Value::Bool(b) => Ok(Operand::Text(b.to_string())),
                _ => Err(mismatch()),
            }
        }
        ColumnType::Boolean => {
            if !matches!(filter.op, FilterOp::Eq | FilterOp::Ne) {
                return Err(mismatch());
            }
            match &filter.value {
                Value::Bool(b) => Ok(Operand::Bool(*b)),
                Value::String(s) if s.eq_ignore_ascii_case("true") => Ok(Operand::Bool(true)),
                Value::String(s) if s.eq_ignore_ascii_case("false") => Ok(Operand::Bool(false)),
                _ => Err(mismatch()),
            }
        }
    }
}

fn matches(cell: &Cell, op: FilterOp, rhs: &Operand) -> bool {
    match (cell, rhs) {
        (Cell::Number(x), Operand::Number(y)) => match op {
            FilterOp::Eq => x == y,
            FilterOp::Ne => x != y,
            FilterOp::Lt => x < y,
            FilterOp::Le => x <= y,
            FilterOp::Gt => x > y,
            FilterOp::Ge => x >= y,
            FilterOp::Contains => false,
        },
        // text comparison is case-insensitive
        (Cell::Text(s), Operand::Text(t)) => {
            let s = s.to_lowercase();
            match op {
                FilterOp::Eq => s == *t,
                FilterOp::Ne => s != *t,
                FilterOp::Contains => s.contains(t.as_str()),
                _ => false,
            }
        }
        (Cell::Bool(a), Operand::Bool(b)) => match op {
            FilterOp::Eq => a == b,
            FilterOp::Ne => a != b,
            _ => false,
        },
        _ => false,
    }
}

fn cmp_cells(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Missing, Cell::Missing) => Ordering::Equal,
        (Cell::Missing, _) => Ordering::Greater,
        (_, Cell::Missing) => Ordering::Less,
        (Cell::Number(x), Cell::Number(y)) => x.total_cmp(y),
        (Cell::Bool(x), Cell::Bool(y)) => x.cmp(y),
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
        _ => a.to_string().cmp(&b.to_string()),
    }
}

fn aggregate(t: &Table, agg: &Aggregate) -> Result<Table, IngestError> {
    let (name, values): (String, Vec<f64>) = match (&agg.column, agg.func) {
        (None, AggFn::Count) => ("count".into(), vec![]),
        (None, f) => {
            return Err(IngestError::UnknownColumn(format!(
                "{f:?} aggregation needs a column"
            )))
        }
        (Some(c), f) => {
            let i = t.require_column(c)?;
            if f != AggFn::Count && t.columns[i].ty != ColumnType::Number {
                return Err(IngestError::TypeMismatch(format!(
                    "{f:?} over non-numeric column `{c}`"
                )));
            }
            let vals = t.rows.iter().filter_map(|r| r[i].as_f64()).collect();
            (format!("{}({c})", format!("{f:?}").to_lowercase()), vals)
        }
    };
    let present = match &agg.column {
        None => t.rows.len(),
        Some(c) => {
            let i = t.require_column(c)?;
            t.rows.iter().filter(|r| !r[i].is_missing()).count()
        }
    };
    let cell = match agg.func {
        AggFn::Count => Cell::Number(present as f64),
        AggFn::Sum => Cell::Number(values.iter().sum()),
        AggFn::Min => values.iter().copied().reduce(f64::min).map_or(Cell::Missing, Cell::Number),
        AggFn::Max => values.iter().copied().reduce(f64::max).map_or(Cell::Missing, Cell::Number),
        AggFn::Avg if values.is_empty() => Cell::Missing,
        AggFn::Avg => Cell::Number(values.iter().sum::<f64>() / values.len() as f64),
    };
    let mut out = Table::new(t.name.clone(), vec![Column::new(name, ColumnType::Number)]);
    out.rows.push(vec![cell]);
    Ok(out)
}

/// Filters (conjunctive), then projection, aggregation, sort and limit.
pub fn run_query(store: &TableStore, q: &TableQuery) -> Result<Table, IngestError> {
    let table = store
        .get(&q.table)
        .ok_or_else(|| IngestError::UnknownTable(q.table.clone()))?;
    let mut checks = Vec::with_capacity(q.filters.len());
    for f in &q.filters {
        let i = table.require_column(&f.column)?;
        checks.push((i, f.op, coerce(f, table.columns[i].ty)?));
    }
    let mut current = Table::new(table.name.clone(), table.columns.clone());
    current.rows = table
        .rows
        .iter()
        .filter(|r| checks.iter().all(|(i, op, rhs)| matches(&r[*i], *op, rhs)))
        .cloned()
        .collect();
    if !q.project.is_empty() {
        current = current.project(&q.project)?;
    }
    if let Some(agg) = &q.aggregate {
        current = aggregate(&current, agg)?;
    }
    if let Some(sort) = &q.sort {
        let i = current.require_column(&sort.column)?;
        current.rows.sort_by(|a, b| {
            let o = cmp_cells(&a[i], &b[i]);
            match sort.direction {
                Direction::Asc => o,
                Direction::Desc => o.reverse(),
            }
        });
    }
    if let Some(n) = q.limit {
        current.rows.truncate(n);
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    /// Five events; two have severity "high" (rows 1 and 4).
    fn events() -> TableStore {
        let mut t = Table::new(
            "events",
            vec![
                Column::new("type", ColumnType::Text),
                Column::new("severity", ColumnType::Text),
                Column::new("delay_min", ColumnType::Number),
            ],
        );
        for (ty, sev, d) in [
            ("construction", "low", 5.0),
            ("collision", "high", 40.0),
            ("closure", "medium", 15.0),
            ("construction", "low", 2.0),
            ("weather", "high", 30.0),
        ] {
            t.push_row(vec![Cell::text(ty), Cell::text(sev), Cell::Number(d)])
                .unwrap();
        }
        [("events".to_string(), t)].into()
    }

    fn q(v: Value) -> TableQuery {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn filter_and_project() {
        let out = run_query(
            &events(),
            &q(json!({"table": "events", "filters": [{"column": "severity", "op": "=", "value": "high"}], "project": ["type"]})),
        )
        .unwrap();
        assert_eq!(out.columns.len(), 1);
        assert_eq!(out.rows, vec![vec![Cell::text("collision")], vec![Cell::text("weather")]]);
    }

    #[test]
    fn count_over_empty_result_is_zero() {
        let out = run_query(
            &events(),
            &q(json!({"table": "events", "filters": [{"column": "severity", "op": "=", "value": "none"}], "aggregate": {"fn": "count"}})),
        )
        .unwrap();
        assert_eq!(out.rows, vec![vec![Cell::Number(0.0)]]);
    }

    #[test]
    fn avg_of_two_and_four() {
        let mut t = Table::new("n", vec![Column::new("x", ColumnType::Number)]);
        t.push_row(vec![Cell::Number(2.0)]).unwrap();
        t.push_row(vec![Cell::Number(4.0)]).unwrap();
        let store: TableStore = [("n".to_string(), t)].into();
        let out = run_query(&store, &q(json!({"table": "n", "aggregate": {"fn": "avg", "column": "x"}}))).unwrap();
        assert_eq!(out.rows, vec![vec![Cell::Number(3.0)]]);
    }

    #[test]
    fn sort_desc_then_limit() {
        let out = run_query(
            &events(),
            &q(json!({"table": "events", "sort": {"column": "delay_min", "direction": "desc"}, "limit": 2, "project": ["delay_min"]})),
        )
        .unwrap();
        assert_eq!(out.rows, vec![vec![Cell::Number(40.0)], vec![Cell::Number(30.0)]]);
    }

    #[test]
    fn errors() {
        let s = events();
        assert!(matches!(run_query(&s, &TableQuery::all("nope")), Err(IngestError::UnknownTable(_))));
        assert!(matches!(
            run_query(&s, &q(json!({"table": "events", "project": ["zzz"]}))),
            Err(IngestError::UnknownColumn(_))
        ));
        assert!(matches!(
            run_query(&s, &q(json!({"table": "events", "filters": [{"column": "type", "op": ">", "value": 3}]}))),
            Err(IngestError::TypeMismatch(_))
        ));
    }

    #[test]
    fn unicode_operator_aliases() {
        assert_eq!(FilterOp::parse("≥"), Some(FilterOp::Ge));
        assert_eq!(FilterOp::parse("contains"), Some(FilterOp::Contains));
        assert_eq!(FilterOp::parse("~"), None);
    }

    #[test]
    fn identity_query() {
        let s = events();
        assert_eq!(run_query(&s, &TableQuery::all("events")).unwrap(), s["events"]);
    }
}
