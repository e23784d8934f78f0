use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::ProviderError;

use super::table::{Cell, Column, ColumnType, Table};
use super::IngestError;

/// Name of the column [`visual_annotate`] appends.
pub const VQA_COLUMN: &str = "vqa_answer";

/// Answers a natural-language question about one image reference.
pub trait VisualAnswerer: Send + Sync {
    fn answer(&self, image: &str, question: &str) -> Result<String, ProviderError>;
}

/// Canned answers per image reference, with an optional fallback.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StubVisualAnswerer {
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
    #[serde(default)]
    pub default: Option<String>,
}

impl StubVisualAnswerer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Path(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| IngestError::Format(e.to_string()))
    }
}

impl VisualAnswerer for StubVisualAnswerer {
    fn answer(&self, image: &str, _question: &str) -> Result<String, ProviderError> {
        self.answers
            .get(image)
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| ProviderError::BadResponse(format!("no stub answer for image `{image}`")))
    }
}

/// Asks `vqa` about every row's image and appends the answers as a text column.
pub fn visual_annotate(
    t: &Table,
    image_column: &str,
    question: &str,
    vqa: &dyn VisualAnswerer,
) -> Result<Table, IngestError> {
    let i = t.require_column(image_column)?;
    let mut out = t.clone();
    out.columns.push(Column::new(VQA_COLUMN, ColumnType::Text));
    for row in &mut out.rows {
        let answer = match &row[i] {
            Cell::Missing => Cell::Missing,
            image => Cell::Text(vqa.answer(&image.to_string(), question)?),
        };
        row.push(answer);
    }
    Ok(out)
}
