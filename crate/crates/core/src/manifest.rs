//! JSON sidecar binding matrix rows to morph series and text labels.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "records": [
//!     { "row": 0, "series_id": "s0000", "morph_index": 0,
//!       "gender": "female", "source_group": "Black", "target_group": "White" }
//!   ],
//!   "labels": [
//!     { "row": 0, "name": "Black", "prompt": "a photo of a Black person" }
//!   ]
//! }
//! ```
//!
//! Record rows index the image matrix. Label rows index the label matrix,
//! which may be the image matrix itself when an audit ships a single file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::matrix::{write_atomic, EmbeddingMatrix};

pub const SCHEMA_VERSION: u32 = 1;
pub const SERIES_LEN: usize = 21;
pub const MAX_MORPH_INDEX: usize = SERIES_LEN - 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDescriptor {
    pub row: usize,
    pub series_id: String,
    pub morph_index: usize,
    pub gender: String,
    pub source_group: String,
    pub target_group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDescriptor {
    pub row: usize,
    pub name: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    #[serde(default)]
    pub records: Vec<RecordDescriptor>,
    #[serde(default)]
    pub labels: Vec<LabelDescriptor>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            records: Vec::new(),
            labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    UnsupportedSchema { version: u32 },
    RecordRowOutOfRange { row: usize, rows: usize },
    LabelRowOutOfRange { label: String, row: usize, rows: usize },
    DuplicateRecordRow { row: usize },
    MorphIndexOutOfRange { series_id: String, morph_index: usize },
    DuplicateMorphIndex { series_id: String, morph_index: usize },
    MissingMorphIndex { series_id: String, morph_index: usize },
    DuplicateLabel { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnsupportedSchema { version } => {
                write!(f, "unsupported schema version {version}")
            }
            Violation::RecordRowOutOfRange { row, rows } => {
                write!(f, "record row {row} out of range for {rows}-row image matrix")
            }
            Violation::LabelRowOutOfRange { label, row, rows } => {
                write!(f, "label {label:?} row {row} out of range for {rows}-row label matrix")
            }
            Violation::DuplicateRecordRow { row } => {
                write!(f, "row {row} referenced by more than one record")
            }
            Violation::MorphIndexOutOfRange {
                series_id,
                morph_index,
            } => write!(f, "series {series_id:?}: morph index {morph_index} > {MAX_MORPH_INDEX}"),
            Violation::DuplicateMorphIndex {
                series_id,
                morph_index,
            } => write!(f, "series {series_id:?}: duplicate morph index {morph_index}"),
            Violation::MissingMorphIndex {
                series_id,
                morph_index,
            } => write!(f, "series {series_id:?}: missing morph index {morph_index}"),
            Violation::DuplicateLabel { name } => write!(f, "duplicate label name {name:?}"),
        }
    }
}

/// One morph series: image rows ordered by morph index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Series {
    pub id: String,
    pub rows: [usize; SERIES_LEN],
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AuditError::Parse(format!("manifest: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn label(&self, name: &str) -> Result<&LabelDescriptor> {
        self.labels
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| AuditError::LabelNotFound(name.to_string()))
    }

    /// Series in order of first appearance, each with rows sorted by morph
    /// index. Fails with the full violation list if the records do not form
    /// complete series.
    pub fn series(&self) -> Result<Vec<Series>> {
        let violations = self.record_violations(None);
        if !violations.is_empty() {
            return Err(AuditError::InvalidManifest(violations));
        }
        let mut order: Vec<&str> = Vec::new();
        let mut slots: HashMap<&str, [usize; SERIES_LEN]> = HashMap::new();
        for r in &self.records {
            let entry = slots.entry(&r.series_id).or_insert_with(|| {
                order.push(&r.series_id);
                [0; SERIES_LEN]
            });
            entry[r.morph_index] = r.row;
        }
        Ok(order
            .into_iter()
            .map(|id| Series {
                id: id.to_string(),
                rows: slots[id],
            })
            .collect())
    }

    /// Record lookup by image row.
    pub fn record_for_row(&self) -> HashMap<usize, &RecordDescriptor> {
        self.records.iter().map(|r| (r.row, r)).collect()
    }

    fn record_violations(&self, image_rows: Option<usize>) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen_rows = BTreeSet::new();
        let mut by_series: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut series_order: Vec<&str> = Vec::new();
        for r in &self.records {
            if let Some(rows) = image_rows {
                if r.row >= rows {
                    out.push(Violation::RecordRowOutOfRange { row: r.row, rows });
                }
            }
            if !seen_rows.insert(r.row) {
                out.push(Violation::DuplicateRecordRow { row: r.row });
            }
            by_series
                .entry(&r.series_id)
                .or_insert_with(|| {
                    series_order.push(&r.series_id);
                    Vec::new()
                })
                .push(r.morph_index);
        }
        for id in series_order {
            let indices = &by_series[id];
            let mut present = [false; SERIES_LEN];
            for &k in indices {
                if k > MAX_MORPH_INDEX {
                    out.push(Violation::MorphIndexOutOfRange {
                        series_id: id.to_string(),
                        morph_index: k,
                    });
                } else if present[k] {
                    out.push(Violation::DuplicateMorphIndex {
                        series_id: id.to_string(),
                        morph_index: k,
                    });
                } else {
                    present[k] = true;
                }
            }
            for (k, _) in present.iter().enumerate().filter(|(_, p)| !**p) {
                out.push(Violation::MissingMorphIndex {
                    series_id: id.to_string(),
                    morph_index: k,
                });
            }
        }
        out
    }

    fn label_violations(&self, label_rows: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        for l in &self.labels {
            if l.row >= label_rows {
                out.push(Violation::LabelRowOutOfRange {
                    label: l.name.clone(),
                    row: l.row,
                    rows: label_rows,
                });
            }
            if !names.insert(l.name.as_str()) {
                out.push(Violation::DuplicateLabel {
                    name: l.name.clone(),
                });
            }
        }
        out
    }
}

/// Checks every manifest invariant against a single matrix holding both
/// images and labels. An empty report means the manifest is valid.
pub fn validate_manifest(man: &DatasetManifest, m: &EmbeddingMatrix) -> Vec<Violation> {
    validate_manifest_split(man, m, m)
}

/// As [`validate_manifest`], with labels stored in their own matrix.
pub fn validate_manifest_split(
    man: &DatasetManifest,
    images: &EmbeddingMatrix,
    labels: &EmbeddingMatrix,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if man.schema_version != SCHEMA_VERSION {
        out.push(Violation::UnsupportedSchema {
            version: man.schema_version,
        });
    }
    out.extend(man.record_violations(Some(images.rows())));
    out.extend(man.label_violations(labels.rows()));
    out
}
