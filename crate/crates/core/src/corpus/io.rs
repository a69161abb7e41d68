//! JSON-lines readers and writers for corpus inputs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ApiRecord, CorpusError, LineSpan, SourceKind};

#[derive(Debug, Deserialize)]
struct ApiRecordLine {
    api_name: String,
    project: String,
    signature: String,
    description: String,
    #[serde(default)]
    example_code: Option<String>,
    defining_file: String,
    class_name: String,
    class_line_start: u32,
    class_line_end: u32,
}

/// An issue thread or Q&A pair as mined, before composition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub project: String,
    pub title: String,
    pub body: String,
    /// Comments (issues) or answers (Q&A) in chronological order.
    #[serde(default, alias = "comments", alias = "answers")]
    pub replies: Vec<String>,
}

fn for_each_line<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_api_records(path: &Path) -> Result<Vec<ApiRecord>, CorpusError> {
    for_each_line::<ApiRecordLine>(path)?
        .into_iter()
        .map(|l| {
            let span = LineSpan::new(l.class_line_start, l.class_line_end).ok_or_else(|| {
                CorpusError::InvalidSpan {
                    api: l.api_name.clone(),
                    start: l.class_line_start,
                    end: l.class_line_end,
                }
            })?;
            Ok(ApiRecord {
                api_name: l.api_name,
                project: l.project,
                signature: l.signature,
                description: l.description,
                example_code: l.example_code,
                defining_file: l.defining_file,
                class_name: l.class_name,
                class_line_span: span,
            })
        })
        .collect()
}

/// Reads issue or Q&A documents. `expected` rejects lines of another kind.
pub fn read_raw_documents(path: &Path, expected: Option<SourceKind>) -> Result<Vec<RawDocument>, CorpusError> {
    let docs: Vec<RawDocument> = for_each_line(path)?;
    if let Some(kind) = expected {
        if let Some((i, d)) = docs.iter().enumerate().find(|(_, d)| d.source_kind != kind) {
            return Err(CorpusError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("document {} has source_kind {}, expected {kind}", d.doc_id, d.source_kind),
            });
        }
    }
    Ok(docs)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
