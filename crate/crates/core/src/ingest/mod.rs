//! The data plane behind information retrieval: resource loading, attribute
//! projection, geocoding, spatial filtering, visual annotation, an in-memory
//! table store with structured queries, and lexical document retrieval.

mod docs;
mod gazetteer;
mod load;
mod query;
mod table;
mod vqa;

use thiserror::Error;

use crate::agent::ProviderError;

pub use docs::{retrieve_documents, retrieve_with, tokenize, Document, DocumentScorer, LexicalScorer, ScoredDocument};
pub use gazetteer::{normalize_name, Gazetteer};
pub use load::{
    geometry_json, load_resource, parse_geojson, read_csv, read_documents, read_geojson,
    read_json_records, resource_path, to_geojson, Loaded,
};
pub use query::{run_query, AggFn, Aggregate, Direction, Filter, FilterOp, Sort, TableQuery, TableStore};
pub use table::{fill_missing, spatial_filter, Cell, Column, ColumnType, GeoTable, Geometry, Table};
pub use vqa::{visual_annotate, StubVisualAnswerer, VisualAnswerer, VQA_COLUMN};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("path error: {0}")]
    Path(String),
    #[error("unknown attribute {0}")]
    UnknownAttribute(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("place `{0}` not found")]
    NameNotFound(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}
