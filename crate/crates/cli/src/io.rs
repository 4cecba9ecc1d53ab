//! Dataset wire format and artifact files.
//!
//! Datasets are JSONL, one record per line:
//! `{"id": ..., "r1": ..., "r2": ..., "label": ...?, "soft": [c, d, n]?}`.
//! Unknown fields are preserved on round-trip. Split manifests are plain
//! text, one id per line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use petreq_core::data::{
    Dataset, Example, Label, LabeledExample, Provenance, RequirementPair, SoftLabel,
    SoftLabeledExample,
};
use petreq_core::error::{Error, Result};

/// One JSONL dataset record. `label` and `soft` are optional; any other
/// fields ride along untouched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub r1: String,
    pub r2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft: Option<[f64; 3]>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| {
            Error::KindMismatch(format!(
                "{}:{}: malformed record: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a labeled dataset; a record without a label is a kind mismatch.
pub fn read_labeled(path: &Path, provenance: Provenance) -> Result<Dataset<LabeledExample>> {
    let records = read_records(path)?;
    let examples = records
        .into_iter()
        .map(|r| {
            let label = r.label.ok_or_else(|| {
                Error::KindMismatch(format!(
                    "{}: record `{}` has no label but a labeled dataset was expected",
                    path.display(),
                    r.id
                ))
            })?;
            Ok(LabeledExample::new(
                RequirementPair::new(r.id, r.r1, r.r2)?,
                label,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, provenance)
}

/// Reads just the requirement pairs, ignoring any label or soft fields.
pub fn read_pairs(path: &Path, provenance: Provenance) -> Result<Dataset<RequirementPair>> {
    let records = read_records(path)?;
    let pairs = records
        .into_iter()
        .map(|r| RequirementPair::new(r.id, r.r1, r.r2))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(pairs, provenance)
}

/// Reads a soft-labeled dataset; every record must carry a `soft` vector.
pub fn read_soft(path: &Path) -> Result<Dataset<SoftLabeledExample>> {
    let records = read_records(path)?;
    let examples = records
        .into_iter()
        .map(|r| {
            let soft = r.soft.ok_or_else(|| {
                Error::KindMismatch(format!(
                    "{}: record `{}` has no soft label",
                    path.display(),
                    r.id
                ))
            })?;
            Ok(SoftLabeledExample {
                pair: RequirementPair::new(r.id, r.r1, r.r2)?,
                soft: SoftLabel::new(soft)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, Provenance::Unlabeled)
}

pub fn labeled_to_records(dataset: &Dataset<LabeledExample>) -> Vec<DatasetRecord> {
    dataset
        .iter()
        .map(|e| DatasetRecord {
            id: e.pair.id().to_string(),
            r1: e.pair.r1().to_string(),
            r2: e.pair.r2().to_string(),
            label: Some(e.label),
            soft: None,
            extra: serde_json::Map::new(),
        })
        .collect()
}

pub fn pairs_to_records(dataset: &Dataset<RequirementPair>) -> Vec<DatasetRecord> {
    dataset
        .iter()
        .map(|p| DatasetRecord {
            id: p.id().to_string(),
            r1: p.r1().to_string(),
            r2: p.r2().to_string(),
            label: None,
            soft: None,
            extra: serde_json::Map::new(),
        })
        .collect()
}

pub fn soft_to_records(dataset: &Dataset<SoftLabeledExample>) -> Vec<DatasetRecord> {
    dataset
        .iter()
        .map(|e| DatasetRecord {
            id: e.pair.id().to_string(),
            r1: e.pair.r1().to_string(),
            r2: e.pair.r2().to_string(),
            label: None,
            soft: Some(*e.soft.probabilities()),
            extra: serde_json::Map::new(),
        })
        .collect()
}

/// One predicted label per line: `{"id": ..., "label": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: Label,
}

pub fn write_predictions(path: &Path, predictions: &[PredictionRecord]) -> Result<()> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| {
            Error::KindMismatch(format!(
                "{}:{}: malformed prediction: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Split manifests: one id per line, exact replay.
pub fn write_id_list<E: Example>(path: &Path, dataset: &Dataset<E>) -> Result<()> {
    let mut out = String::new();
    for id in dataset.ids() {
        out.push_str(id);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Appends one JSON object per line; used for training logs.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for item in items {
        serde_json::to_writer(&mut file, item).map_err(Error::from)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
