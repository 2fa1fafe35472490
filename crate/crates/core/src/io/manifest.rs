//! JSONL frame manifests and annotation files.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scene::SceneAttributes;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    #[default]
    Empty,
    Draft,
    Done,
}

/// One image of a dataset with its optional parametric annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub image_path: String,
    pub calib_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<SceneAttributes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<FrameStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
}

impl FrameRecord {
    pub fn new(frame_id: impl Into<String>, image_path: impl Into<String>, calib_id: impl Into<String>) -> Self {
        FrameRecord {
            frame_id: frame_id.into(),
            image_path: image_path.into(),
            calib_id: calib_id.into(),
            attributes: None,
            object_count: None,
            annotation_seconds: None,
            status: None,
            revision: None,
        }
    }

    /// Status, inferred from the annotation when not recorded.
    pub fn effective_status(&self) -> FrameStatus {
        self.status.unwrap_or(if self.attributes.is_some() {
            FrameStatus::Done
        } else {
            FrameStatus::Empty
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: duplicate frame_id `{frame_id}` (first on line {first})")]
    Duplicate {
        frame_id: String,
        line: usize,
        first: usize,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parse manifest text; blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<FrameRecord>, ManifestError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(line).map_err(|e| ManifestError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(&first) = seen.get(&record.frame_id) {
            return Err(ManifestError::Duplicate {
                frame_id: record.frame_id,
                line: line_no,
                first,
            });
        }
        seen.insert(record.frame_id.clone(), line_no);
        records.push(record);
    }
    Ok(records)
}

pub fn load_manifest(path: &Path) -> Result<Vec<FrameRecord>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    parse_manifest(&text)
}

pub fn manifest_to_string(records: &[FrameRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records always serialize"));
        out.push('\n');
    }
    out
}

/// Write the manifest atomically: a temporary file in the same directory is
/// renamed over `path`, so readers never observe a partial file.
pub fn save_manifest(records: &[FrameRecord], path: &Path) -> Result<(), ManifestError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_error(path))?;
    tmp.write_all(manifest_to_string(records).as_bytes())
        .map_err(io_error(path))?;
    tmp.as_file().sync_all().map_err(io_error(path))?;
    tmp.persist(path).map_err(|e| io_error(path)(e.error))?;
    Ok(())
}

/// One line of an annotation file, parsed independently of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationLine {
    pub line: usize,
    /// The record's `frame_id`, or the zero-padded line number for bare
    /// annotations.
    pub id: String,
    pub object_count: Option<u32>,
    pub attributes: Result<SceneAttributes, String>,
}

/// Read an annotation file whose lines are either bare annotations or frame
/// records. Bad lines are returned as errors in place so batch jobs can skip
/// them; only an unreadable file fails as a whole.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationLine>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    Ok(parse_annotations(&text))
}

pub fn parse_annotations(text: &str) -> Vec<AnnotationLine> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            let line_no = idx + 1;
            let fallback_id = format!("{line_no:06}");
            let value: serde_json::Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(e) => {
                    return AnnotationLine {
                        line: line_no,
                        id: fallback_id,
                        object_count: None,
                        attributes: Err(e.to_string()),
                    }
                }
            };
            if value.get("frame_id").is_some() {
                match serde_json::from_value::<FrameRecord>(value) {
                    Ok(record) => AnnotationLine {
                        line: line_no,
                        attributes: record
                            .attributes
                            .ok_or_else(|| format!("frame `{}` has no attributes", record.frame_id)),
                        id: record.frame_id,
                        object_count: record.object_count,
                    },
                    Err(e) => AnnotationLine {
                        line: line_no,
                        id: fallback_id,
                        object_count: None,
                        attributes: Err(e.to_string()),
                    },
                }
            } else {
                AnnotationLine {
                    line: line_no,
                    id: fallback_id,
                    object_count: None,
                    attributes: serde_json::from_value(value).map_err(|e| e.to_string()),
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{sample, to_json, SampleRanges};

    fn records(n: u64) -> Vec<FrameRecord> {
        (0..n)
            .map(|i| {
                let mut r = FrameRecord::new(format!("f{i:04}"), format!("img/{i}.png"), "kitti");
                if i % 3 != 0 {
                    r.attributes = Some(sample(i, &SampleRanges::default()).unwrap());
                    r.object_count = Some((i % 11) as u32);
                    r.annotation_seconds = Some(i as f64 * 0.1 + 1.0 / 3.0);
                    r.status = Some(FrameStatus::Draft);
                    r.revision = Some(i);
                }
                r
            })
            .collect()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let recs = records(100);
        save_manifest(&recs, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), recs);
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        assert!(parse_manifest("").unwrap().is_empty());
        assert!(parse_manifest("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_named() {
        let line = r#"{"frame_id":"a","image_path":"x","calib_id":"c"}"#;
        let text = format!("{line}\n{line}\n");
        match parse_manifest(&text) {
            Err(ManifestError::Duplicate { frame_id, line, first }) => {
                assert_eq!((frame_id.as_str(), line, first), ("a", 2, 1))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_line_numbered() {
        let text = "{\"frame_id\":\"a\",\"image_path\":\"x\",\"calib_id\":\"c\"}\nnot json\n";
        assert!(matches!(parse_manifest(text), Err(ManifestError::Line { line: 2, .. })));
    }

    #[test]
    fn annotations_accept_bare_and_records() {
        let theta = sample(3, &SampleRanges::default()).unwrap();
        let mut rec = FrameRecord::new("x7", "i.png", "c");
        rec.attributes = Some(theta);
        rec.object_count = Some(4);
        let text = format!(
            "{}\n{}\n\n{}\n{}\n",
            to_json(&theta),
            serde_json::to_string(&rec).unwrap(),
            r#"{"frame_id":"bare","image_path":"i","calib_id":"c"}"#,
            "{\"schema_version\":1}"
        );
        let lines = parse_annotations(&text);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].attributes, Ok(theta));
        assert_eq!(lines[0].id, "000001");
        assert_eq!(lines[1].id, "x7");
        assert_eq!(lines[1].object_count, Some(4));
        assert!(lines[2].attributes.is_err());
        assert_eq!(lines[2].line, 4);
        assert!(lines[3].attributes.is_err());
    }
}
