//! Calibration parsing, frame manifests and grid image files.

pub mod calib;
pub mod grid_file;
pub mod manifest;

pub use calib::{parse_kitti_calib, parse_kitti_calib_bytes, CalibError, CalibRecord, CameraMount};
pub use grid_file::{
    decode_png, decode_raw, encode_png, encode_raw, export_grid, import_grid, GridFileError,
    GridFormat,
};
pub use manifest::{
    load_manifest, manifest_to_string, parse_annotations, parse_manifest, read_annotations, save_manifest, AnnotationLine, FrameRecord,
    FrameStatus, ManifestError,
};
