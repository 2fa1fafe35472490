//! KITTI calibration text.
//!
//! A KITTI calibration file holds one projection matrix per camera as
//! `KEY: v v v ...`. Only intrinsics are read from it; the ground-plane
//! mount (height and pitch) and the image size come from configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraError, CameraModel};

pub const PROJECTION_KEY: &str = "P2";

/// Extrinsics and image size that the calibration file does not carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub height: f64,
    pub pitch: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for CameraMount {
    fn default() -> Self {
        CameraMount {
            height: 1.65,
            pitch: 0.0,
            image_width: 1242,
            image_height: 375,
        }
    }
}

/// A named camera, as listed in a calibration JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibRecord {
    pub calib_id: String,
    pub camera: CameraModel,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CalibError {
    #[error("calibration is not UTF-8 (byte {offset})")]
    NotUtf8 { offset: usize },
    #[error("missing `{key}:` line")]
    MissingKey { key: &'static str },
    #[error("line {line}: `{key}:` appears more than once (first on line {first})")]
    DuplicateKey {
        key: &'static str,
        line: usize,
        first: usize,
    },
    #[error("line {line}: `{key}:` needs {expected} values, found {found}")]
    Arity {
        key: &'static str,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: `{token}` is not a number")]
    BadNumber {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("line {line}, column {column}: `{token}` is not finite")]
    NonFinite {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("line {line}: {source}")]
    Camera {
        line: usize,
        #[source]
        source: CameraError,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Read fx, fy, cx, cy from the `P2:` projection matrix.
pub fn parse_kitti_calib(text: &str, mount: CameraMount) -> Result<CameraModel, CalibError> {
    let mut found: Option<(usize, [f64; 12])> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(rest) = raw_line
            .trim_start()
            .strip_prefix(PROJECTION_KEY)
            .and_then(|r| r.strip_prefix(':'))
        else {
            continue;
        };
        if let Some((first, _)) = found {
            return Err(CalibError::DuplicateKey {
                key: PROJECTION_KEY,
                line: line_no,
                first,
            });
        }
        let rest_offset = raw_line.len() - rest.len();
        let tokens = tokens_with_columns(raw_line, rest_offset);
        if tokens.len() != 12 {
            return Err(CalibError::Arity {
                key: PROJECTION_KEY,
                line: line_no,
                expected: 12,
                found: tokens.len(),
            });
        }
        let mut values = [0.0; 12];
        for (slot, (column, token)) in values.iter_mut().zip(tokens) {
            let value: f64 = token.parse().map_err(|_| CalibError::BadNumber {
                line: line_no,
                column,
                token: token.to_string(),
            })?;
            if !value.is_finite() {
                return Err(CalibError::NonFinite {
                    line: line_no,
                    column,
                    token: token.to_string(),
                });
            }
            *slot = value;
        }
        found = Some((line_no, values));
    }
    let (line, p) = found.ok_or(CalibError::MissingKey {
        key: PROJECTION_KEY,
    })?;
    CameraModel::new(
        p[0],
        p[5],
        p[2],
        p[6],
        mount.image_width,
        mount.image_height,
        mount.height,
        mount.pitch,
    )
    .map_err(|source| CalibError::Camera { line, source })
}

/// Whitespace-separated tokens of `line` after byte `start`, with 1-based
/// character columns.
fn tokens_with_columns(line: &str, start: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut token_start = None;
    for (byte, ch) in line[start..].char_indices() {
        let at = start + byte;
        match (ch.is_whitespace(), token_start) {
            (false, None) => token_start = Some(at),
            (true, Some(s)) => {
                out.push((line[..s].chars().count() + 1, &line[s..at]));
                token_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = token_start {
        out.push((line[..s].chars().count() + 1, &line[s..]));
    }
    out
}

pub fn parse_kitti_calib_bytes(bytes: &[u8], mount: CameraMount) -> Result<CameraModel, CalibError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CalibError::NotUtf8 {
        offset: e.valid_up_to(),
    })?;
    parse_kitti_calib(text, mount)
}

pub fn load_kitti_calib(path: &Path, mount: CameraMount) -> Result<CameraModel, CalibError> {
    let bytes = std::fs::read(path).map_err(|e| CalibError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_kitti_calib_bytes(&bytes, mount)
}
