//! Annotation JSONL and frame-manifest loading.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_core::{synthetic_manifest, Frame, TaskAnnotation};

use crate::error::DatasetError;

/// A validated annotation plus the optional scene object list carried on
/// the same JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedAnnotation {
    pub line: usize,
    pub annotation: TaskAnnotation,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub annotations: Vec<IngestedAnnotation>,
    pub rejections: Vec<Rejection>,
}

/// Reads one annotation per line. Bad lines are logged and skipped; a source
/// with no records at all is an error.
pub fn ingest_annotations<R: BufRead>(source: R) -> Result<Ingested, DatasetError> {
    let mut out = Ingested::default();
    let mut records = 0;
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        match parse_line(&line) {
            Ok((annotation, objects)) => out.annotations.push(IngestedAnnotation {
                line: i + 1,
                annotation,
                objects,
            }),
            Err(reason) => out.rejections.push(Rejection { line: i + 1, reason }),
        }
    }
    if records == 0 {
        return Err(DatasetError::NoAnnotations);
    }
    Ok(out)
}

pub fn ingest_file(path: &Path) -> Result<Ingested, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::Source(format!("{}: {e}", path.display())))?;
    ingest_annotations(BufReader::new(file))
}

fn parse_line(line: &str) -> Result<(TaskAnnotation, Vec<String>), String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let objects = match value.get("objects") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| format!("objects: {e}"))?,
    };
    let annotation: TaskAnnotation =
        serde_json::from_value(value).map_err(|e| format!("schema: {e}"))?;
    let annotation = annotation.validated().map_err(|e| e.to_string())?;
    Ok((annotation, objects))
}

/// Reads a frame manifest: a JSON list of `{"ts": number, "uri": string}`.
pub fn load_manifest(path: &Path) -> Result<Vec<Frame>, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DatasetError::Source(format!("{}: {e}", path.display())))?;
    let frames: Vec<Frame> = serde_json::from_str(&text)
        .map_err(|e| DatasetError::Source(format!("{}: {e}", path.display())))?;
    if frames.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(DatasetError::Source(format!(
            "{}: timestamps must be non-decreasing",
            path.display()
        )));
    }
    Ok(frames)
}

/// Where frame manifests come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifestSource {
    /// `video_ref` is a manifest path, relative to this directory unless absolute.
    Files(PathBuf),
    /// Frames are synthesized at this rate up to the last step's end.
    Synthetic { fps: f64 },
}

impl ManifestSource {
    pub fn resolve(&self, a: &TaskAnnotation) -> Result<Vec<Frame>, DatasetError> {
        match self {
            ManifestSource::Files(base) => load_manifest(&base.join(&a.video_ref)),
            ManifestSource::Synthetic { fps } => {
                Ok(synthetic_manifest(a.end_time(), *fps, &a.video_ref))
            }
        }
    }
}
