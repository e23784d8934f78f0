//! Metadata-guided query answering over transport data, with a
//! constraint-aware route planner.
//!
//! Numeric code is generic over [`scalar::Scalar`]; the aliases below fix it
//! to `f64` or `f32`.

pub mod agent;
pub mod catalog;
pub mod geo;
pub mod scalar;
pub mod ingest;
pub mod roadgraph;
pub mod planner;
pub mod pipeline;

pub use scalar::Scalar;

pub type RoadGraph64 = roadgraph::RoadGraph<f64>;
pub type RoadGraph32 = roadgraph::RoadGraph<f32>;
pub type RouteModel64 = planner::RouteModel<f64>;
pub type RouteModel32 = planner::RouteModel<f32>;
pub type RouteResult64 = planner::RouteResult<f64>;
pub type RouteResult32 = planner::RouteResult<f32>;
pub type LatLon64 = geo::LatLon<f64>;
pub type LatLon32 = geo::LatLon<f32>;
