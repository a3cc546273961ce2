//! Canonical feature tables: CSV ingestion, validation, per-speaker
//! normalization and emotion-vs-neutral task construction.
//!
//! A table is a header row whose first four columns are
//! `utterance_id,speaker_id,dataset_id,emotion_label` followed by one or
//! more numeric feature columns. Embedding and acoustic representations are
//! kept in separate tables and joined on `utterance_id`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Metadata columns every table starts with, in this order.
pub const METADATA_COLUMNS: [&str; 4] = ["utterance_id", "speaker_id", "dataset_id", "emotion_label"];

/// Label used for the negative class unless overridden.
pub const DEFAULT_NEUTRAL_LABEL: &str = "neutral";

/// Per-speaker standard deviations at or below this (relative to the
/// column's magnitude) are treated as zero variance.
pub(crate) const ZERO_VARIANCE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub dataset_id: String,
    pub emotion_label: String,
    pub values: Vec<f64>,
}

/// One representation (embedding or acoustic) of a set of utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    rows: Vec<UtteranceRecord>,
    feature_names: Vec<String>,
    representation_id: String,
}

impl FeatureTable {
    /// Builds a table, checking every invariant. Row numbers in errors are
    /// 1-based data rows (the header is not counted).
    pub fn new(
        rows: Vec<UtteranceRecord>,
        feature_names: Vec<String>,
        representation_id: impl Into<String>,
    ) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::NoFeatures);
        }
        let mut seen = HashSet::with_capacity(feature_names.len());
        for name in &feature_names {
            if name.is_empty() {
                return Err(Error::MissingColumn("<empty feature name>".into()));
            }
            if METADATA_COLUMNS.contains(&name.as_str()) || !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        let mut ids = HashSet::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let row_no = i + 1;
            if row.utterance_id.is_empty() {
                return Err(Error::InvalidRow {
                    row: row_no,
                    message: "empty utterance_id".into(),
                });
            }
            if row.speaker_id.is_empty() {
                return Err(Error::InvalidRow {
                    row: row_no,
                    message: "empty speaker_id".into(),
                });
            }
            if row.emotion_label.is_empty() {
                return Err(Error::InvalidRow {
                    row: row_no,
                    message: "empty emotion_label".into(),
                });
            }
            if row.values.len() != feature_names.len() {
                return Err(Error::InvalidRow {
                    row: row_no,
                    message: format!(
                        "expected {} feature values, found {}",
                        feature_names.len(),
                        row.values.len()
                    ),
                });
            }
            if let Some(j) = row.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidValue {
                    row: row_no,
                    column: feature_names[j].clone(),
                    reason: format!("non-finite value {}", row.values[j]),
                });
            }
            if !ids.insert(row.utterance_id.as_str()) {
                return Err(Error::DuplicateUtterance(row.utterance_id.clone()));
            }
        }
        Ok(Self {
            rows,
            feature_names,
            representation_id: representation_id.into(),
        })
    }

    pub fn rows(&self) -> &[UtteranceRecord] {
        &self.rows
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn representation_id(&self) -> &str {
        &self.representation_id
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Map from utterance_id to row index.
    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.utterance_id.as_str(), i))
            .collect()
    }

    /// Distinct emotion labels with their counts, sorted by label.
    pub fn label_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rows {
            *counts.entry(r.emotion_label.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

/// Reads and validates a canonical table from any reader.
pub fn read_feature_table<R: Read>(reader: R, representation_id: &str) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, expected) in METADATA_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(*expected) {
            return Err(Error::MissingColumn((*expected).to_string()));
        }
    }
    let feature_names: Vec<String> = headers.iter().skip(METADATA_COLUMNS.len()).map(str::to_string).collect();
    let width = headers.len();

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        if record.len() != width {
            return Err(Error::InvalidRow {
                row: row_no,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .skip(METADATA_COLUMNS.len())
            .zip(&feature_names)
            .map(|(field, column)| parse_value(field, row_no, column))
            .collect::<Result<Vec<_>>>()?;
        rows.push(UtteranceRecord {
            utterance_id: record[0].to_string(),
            speaker_id: record[1].to_string(),
            dataset_id: record[2].to_string(),
            emotion_label: record[3].to_string(),
            values,
        });
    }
    FeatureTable::new(rows, feature_names, representation_id)
}

fn parse_value(field: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::InvalidValue {
        row,
        column: column.to_string(),
        reason: format!("not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::InvalidValue {
            row,
            column: column.to_string(),
            reason: format!("non-finite value {field:?}"),
        });
    }
    Ok(v)
}

/// Loads a table from disk; row order is preserved.
pub fn load_feature_table(path: impl AsRef<Path>, representation_id: &str) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(std::io::BufReader::new(file), representation_id)
}

/// Writes the canonical CSV form. Values use the shortest representation
/// that parses back to the same `f64`, so a load/write/load cycle is exact.
pub fn write_feature_table<W: Write>(table: &FeatureTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let header = METADATA_COLUMNS
        .iter()
        .copied()
        .chain(table.feature_names.iter().map(String::as_str));
    wtr.write_record(header)?;
    let mut fields: Vec<String> = Vec::with_capacity(METADATA_COLUMNS.len() + table.n_features());
    for row in &table.rows {
        fields.clear();
        fields.push(row.utterance_id.clone());
        fields.push(row.speaker_id.clone());
        fields.push(row.dataset_id.clone());
        fields.push(row.emotion_label.clone());
        fields.extend(row.values.iter().map(|v| v.to_string()));
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_feature_table(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_table(table, std::io::BufWriter::new(file))
}

/// Population mean and standard deviation of a slice.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

pub(crate) fn is_zero_variance(mean: f64, std: f64) -> bool {
    std <= ZERO_VARIANCE_RTOL * (1.0 + mean.abs())
}

/// Z-scores every feature column within each speaker, using that speaker's
/// mean and population standard deviation over all of their utterances.
/// Columns that are constant for a speaker become 0 for that speaker.
pub fn speaker_normalize(table: &FeatureTable) -> FeatureTable {
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        by_speaker.entry(r.speaker_id.as_str()).or_default().push(i);
    }
    let mut rows = table.rows.clone();
    for members in by_speaker.values() {
        for j in 0..table.n_features() {
            let column = members.iter().map(|&i| table.rows[i].values[j]);
            let (mean, std) = mean_std(column);
            let zero_var = is_zero_variance(mean, std);
            for &i in members {
                rows[i].values[j] = if zero_var {
                    0.0
                } else {
                    (table.rows[i].values[j] - mean) / std
                };
            }
        }
    }
    FeatureTable {
        rows,
        feature_names: table.feature_names.clone(),
        representation_id: table.representation_id.clone(),
    }
}

/// Emotion-vs-neutral classification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTask {
    pub emotion: String,
    pub x: DMatrix<f64>,
    /// `true` for the emotion, `false` for neutral.
    pub y: Vec<bool>,
    pub groups: Vec<String>,
    pub column_names: Vec<String>,
    pub utterance_ids: Vec<String>,
}

impl BinaryTask {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    /// Projects onto the named columns, in the order given.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<BinaryTask> {
        let lookup: HashMap<&str, usize> = self
            .column_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let idx = names
            .iter()
            .map(|n| {
                lookup
                    .get(n.as_ref())
                    .copied()
                    .ok_or_else(|| Error::UnknownColumn(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BinaryTask {
            emotion: self.emotion.clone(),
            x: self.x.select_columns(&idx),
            y: self.y.clone(),
            groups: self.groups.clone(),
            column_names: idx.iter().map(|&i| self.column_names[i].clone()).collect(),
            utterance_ids: self.utterance_ids.clone(),
        })
    }
}

/// Filters `table` to the `emotion` and `neutral_label` rows (source order
/// preserved) and optionally projects onto `columns`.
pub fn make_binary_task(
    table: &FeatureTable,
    emotion: &str,
    neutral_label: &str,
    columns: Option<&[String]>,
) -> Result<BinaryTask> {
    let selected: Vec<&UtteranceRecord> = table
        .rows
        .iter()
        .filter(|r| r.emotion_label == emotion || r.emotion_label == neutral_label)
        .collect();
    if !selected.iter().any(|r| r.emotion_label == emotion) {
        return Err(Error::MissingLabel(emotion.to_string()));
    }
    if !selected.iter().any(|r| r.emotion_label == neutral_label) {
        return Err(Error::MissingLabel(neutral_label.to_string()));
    }
    let col_idx: Vec<usize> = match columns {
        Some(cols) => cols
            .iter()
            .map(|c| table.column_index(c).ok_or_else(|| Error::UnknownColumn(c.clone())))
            .collect::<Result<_>>()?,
        None => (0..table.n_features()).collect(),
    };
    let x = DMatrix::from_fn(selected.len(), col_idx.len(), |i, j| selected[i].values[col_idx[j]]);
    Ok(BinaryTask {
        emotion: emotion.to_string(),
        x,
        y: selected.iter().map(|r| r.emotion_label == emotion).collect(),
        groups: selected.iter().map(|r| r.speaker_id.clone()).collect(),
        column_names: col_idx.iter().map(|&j| table.feature_names[j].clone()).collect(),
        utterance_ids: selected.iter().map(|r| r.utterance_id.clone()).collect(),
    })
}
