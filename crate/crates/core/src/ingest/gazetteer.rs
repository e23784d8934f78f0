use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::LatLon;

use super::IngestError;

/// Offline place-name lookup: normalized name to WGS84 coordinate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gazetteer {
    places: BTreeMap<String, LatLon>,
}

/// Trim, case-fold and collapse inner whitespace.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl Gazetteer {
    pub fn new<I, S>(entries: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = (S, LatLon)>,
        S: AsRef<str>,
    {
        let mut places = BTreeMap::new();
        for (name, p) in entries {
            if !p.is_valid() {
                return Err(IngestError::Format(format!(
                    "gazetteer entry `{}` has invalid coordinates",
                    name.as_ref()
                )));
            }
            places.insert(normalize_name(name.as_ref()), p);
        }
        Ok(Gazetteer { places })
    }

    /// JSON object mapping name to `[lat, lon]`.
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let raw: BTreeMap<String, [f64; 2]> =
            serde_json::from_str(text).map_err(|e| IngestError::Format(e.to_string()))?;
        Self::new(raw.into_iter().map(|(k, [lat, lon])| (k, LatLon::new(lat, lon))))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Path(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.places.keys().map(String::as_str)
    }

    pub fn geocode(&self, name: &str) -> Result<LatLon, IngestError> {
        self.places
            .get(&normalize_name(name))
            .copied()
            .ok_or_else(|| IngestError::NameNotFound(name.to_string()))
    }
}
