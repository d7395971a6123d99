//! DocVQA-format split files.
//!
//! A split file is JSON with a top-level `"data"` array; each entry carries
//! `"questionId"`, `"question"`, `"image"` (relative to the dataset root) and
//! `"answers"`. Other keys are ignored.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub question_id: String,
    pub question: String,
    /// Relative to the dataset root.
    pub image_path: PathBuf,
    pub answers: Vec<String>,
}

impl QARecord {
    pub fn image_file(&self, root: &Path) -> PathBuf {
        root.join(&self.image_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    /// Position in the split file's `data` array.
    pub index: usize,
    pub question_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub records: Vec<QARecord>,
    pub skipped: Vec<SkippedRecord>,
    /// SHA-256 of the split file bytes.
    pub digest: String,
}

fn question_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_record(entry: &Value) -> std::result::Result<QARecord, String> {
    let qid = entry
        .get("questionId")
        .and_then(question_id)
        .ok_or("missing questionId")?;
    let question = entry
        .get("question")
        .and_then(Value::as_str)
        .filter(|q| !q.trim().is_empty())
        .ok_or("missing question")?;
    let image = entry
        .get("image")
        .and_then(Value::as_str)
        .filter(|i| !i.is_empty())
        .ok_or("missing image")?;
    let answers: Vec<String> = entry
        .get("answers")
        .and_then(Value::as_array)
        .ok_or("missing answers")?
        .iter()
        .filter_map(|a| a.as_str().map(str::to_string))
        .collect();
    if answers.is_empty() {
        return Err("no string answers".into());
    }
    Ok(QARecord {
        question_id: qid,
        question: question.to_string(),
        image_path: PathBuf::from(image),
        answers,
    })
}

/// Loads and validates a split file. Records with missing fields or missing
/// image files are skipped and reported; duplicate ids are an error.
pub fn load_dataset(root: &Path, split_file: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(split_file).map_err(|e| Error::io(split_file, e))?;
    let doc: Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", split_file.display())))?;
    let data = doc
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Format(format!("{}: no top-level \"data\" array", split_file.display())))?;

    let mut records = Vec::with_capacity(data.len());
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for (index, entry) in data.iter().enumerate() {
        let record = match parse_record(entry) {
            Ok(r) => r,
            Err(reason) => {
                log::warn!("skipping record {index}: {reason}");
                skipped.push(SkippedRecord {
                    index,
                    question_id: entry.get("questionId").and_then(question_id),
                    reason,
                });
                continue;
            }
        };
        if !seen.insert(record.question_id.clone()) {
            return Err(Error::DuplicateQuestion(record.question_id));
        }
        let image = record.image_file(root);
        if !image.is_file() {
            log::warn!("skipping {}: image {} not found", record.question_id, image.display());
            skipped.push(SkippedRecord {
                index,
                question_id: Some(record.question_id),
                reason: format!("image not found: {}", record.image_path.display()),
            });
            continue;
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        records,
        skipped,
        digest: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Writes one JSON object per skipped record.
pub fn write_skip_report(path: &Path, skipped: &[SkippedRecord]) -> Result<()> {
    let mut out = Vec::new();
    for s in skipped {
        serde_json::to_writer(&mut out, s)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}
