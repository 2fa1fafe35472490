//! Semantic grid files: palette PNG, or raw bytes (`u32` LE rows, `u32` LE
//! cols, then one class byte per cell in row-major order).

use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{ImageFormat, RgbImage};

use crate::grid::{SemanticClass, SemanticGrid};

pub const RAW_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Png,
    Raw,
}

impl GridFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GridFormat::Png => "png",
            GridFormat::Raw => "raw",
        }
    }
}

impl FromStr for GridFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "png" => Ok(GridFormat::Png),
            "raw" => Ok(GridFormat::Raw),
            other => Err(format!("unknown grid format `{other}` (expected png or raw)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GridFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error("pixel (row {row}, col {col}) has off-palette color {rgb:?}")]
    OffPalette { row: usize, col: usize, rgb: [u8; 3] },
    #[error("raw grid shorter than its {RAW_HEADER_LEN}-byte header ({len} bytes)")]
    Header { len: usize },
    #[error("raw grid of {rows}x{cols} needs {expected} payload bytes, found {actual}")]
    Size {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("raw byte {index} holds {value}, not a class label")]
    BadLabel { index: usize, value: u8 },
}

pub fn encode_png(grid: &SemanticGrid) -> Result<Vec<u8>, GridFileError> {
    let image = RgbImage::from_fn(grid.cols() as u32, grid.rows() as u32, |x, y| {
        image::Rgb(grid.get(y as usize, x as usize).color())
    });
    let mut out = Cursor::new(Vec::new());
    image.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<SemanticGrid, GridFileError> {
    let image = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
    let (cols, rows) = (image.width() as usize, image.height() as usize);
    let mut labels = Vec::with_capacity(rows * cols);
    for (i, pixel) in image.pixels().enumerate() {
        let class = SemanticClass::from_color(pixel.0).ok_or(GridFileError::OffPalette {
            row: i / cols,
            col: i % cols,
            rgb: pixel.0,
        })?;
        labels.push(class);
    }
    Ok(SemanticGrid::from_labels(rows, cols, labels).expect("pixel count matches dimensions"))
}

pub fn encode_raw(grid: &SemanticGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + grid.labels().len());
    out.extend_from_slice(&(grid.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.cols() as u32).to_le_bytes());
    out.extend_from_slice(&grid.to_bytes());
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<SemanticGrid, GridFileError> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(GridFileError::Header { len: bytes.len() });
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let payload = &bytes[RAW_HEADER_LEN..];
    let expected = rows.checked_mul(cols);
    if expected != Some(payload.len()) {
        return Err(GridFileError::Size {
            rows,
            cols,
            expected: expected.unwrap_or(usize::MAX),
            actual: payload.len(),
        });
    }
    let labels = payload
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            SemanticClass::from_u8(value).ok_or(GridFileError::BadLabel {
                index: RAW_HEADER_LEN + index,
                value,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SemanticGrid::from_labels(rows, cols, labels).expect("payload length checked"))
}

pub fn export_grid(grid: &SemanticGrid, format: GridFormat, path: &Path) -> Result<(), GridFileError> {
    let bytes = match format {
        GridFormat::Png => encode_png(grid)?,
        GridFormat::Raw => encode_raw(grid),
    };
    std::fs::write(path, bytes).map_err(|source| GridFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn import_grid(path: &Path, format: GridFormat) -> Result<SemanticGrid, GridFileError> {
    let bytes = std::fs::read(path).map_err(|source| GridFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        GridFormat::Png => decode_png(&bytes),
        GridFormat::Raw => decode_raw(&bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> SemanticGrid {
        SemanticGrid::from_fn(7, 5, |r, c| SemanticClass::ALL[(r * 5 + c * 3) % 6])
    }

    #[test]
    fn png_round_trip() {
        let g = pattern();
        assert_eq!(decode_png(&encode_png(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn raw_round_trip_and_size() {
        let g = pattern();
        assert_eq!(decode_raw(&encode_raw(&g)).unwrap(), g);
        let big = SemanticGrid::filled(256, 128, SemanticClass::Road);
        assert_eq!(encode_raw(&big).len(), 8 + 32768);
    }

    #[test]
    fn off_palette_pixel() {
        let mut image = RgbImage::from_pixel(4, 3, image::Rgb(SemanticClass::Road.color()));
        image.put_pixel(2, 1, image::Rgb([1, 2, 3]));
        let mut bytes = Cursor::new(Vec::new());
        image.write_to(&mut bytes, ImageFormat::Png).unwrap();
        match decode_png(&bytes.into_inner()) {
            Err(GridFileError::OffPalette { row, col, rgb }) => {
                assert_eq!((row, col, rgb), (1, 2, [1, 2, 3]))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn raw_errors() {
        assert!(matches!(decode_raw(&[1, 0, 0]), Err(GridFileError::Header { len: 3 })));
        let mut bytes = encode_raw(&pattern());
        bytes.pop();
        assert!(matches!(decode_raw(&bytes), Err(GridFileError::Size { .. })));
        let mut bytes = encode_raw(&pattern());
        bytes[10] = 9;
        assert!(matches!(
            decode_raw(&bytes),
            Err(GridFileError::BadLabel { index: 10, value: 9 })
        ));
        let huge = [255u8, 255, 255, 255, 255, 255, 255, 255];
        assert!(matches!(decode_raw(&huge), Err(GridFileError::Size { .. })));
    }

    #[test]
    fn garbage_png() {
        assert!(decode_png(b"not a png").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = pattern();
        for format in [GridFormat::Png, GridFormat::Raw] {
            let path = dir.path().join(format!("g.{}", format.extension()));
            export_grid(&g, format, &path).unwrap();
            assert_eq!(import_grid(&path, format).unwrap(), g);
        }
    }
}
