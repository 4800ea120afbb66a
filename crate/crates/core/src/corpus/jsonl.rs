use std::fs;
use std::io::Write;
use std::path::Path;

use super::cluster::{split_multinews, DocumentCluster, RawCluster, MULTINEWS_SEPARATOR};
use super::vocab::Vocabulary;
use crate::error::{AcmError, Result};

/// Parses cluster records, one JSON object per non-blank line.
pub fn read_raw_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawCluster>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AcmError::io(path, e))?;
    parse_raw_jsonl(&text, path)
}

pub fn parse_raw_jsonl(text: &str, path: &Path) -> Result<Vec<RawCluster>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| AcmError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| err(format!("invalid JSON: {e}")))?;
        if value.get("documents").is_none() {
            return Err(err("record is missing the \"documents\" key".into()));
        }
        let raw: RawCluster =
            serde_json::from_value(value).map_err(|e| err(format!("invalid cluster record: {e}")))?;
        out.push(raw);
    }
    Ok(out)
}

pub fn save_jsonl(clusters: &[RawCluster], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for c in clusters {
        serde_json::to_writer(&mut buf, c).expect("cluster serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| AcmError::io(path, e))?;
    f.write_all(&buf).map_err(|e| AcmError::io(path, e))
}

/// Loads and tokenizes clusters. Documents in MultiNews form (several
/// documents joined by `|||||` in one string) are split first.
pub fn load_jsonl(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<DocumentCluster>> {
    let path = path.as_ref();
    read_raw_jsonl(path)?
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let expanded;
            let raw = if raw.documents.iter().any(|d| d.contains(MULTINEWS_SEPARATOR)) {
                expanded = RawCluster {
                    documents: raw.documents.iter().flat_map(|d| split_multinews(d)).collect(),
                    ..raw.clone()
                };
                &expanded
            } else {
                raw
            };
            DocumentCluster::from_raw(raw, vocab).map_err(|e| AcmError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
