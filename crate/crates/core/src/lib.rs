//! Parametric road layouts and the label pipeline built on them.
//!
//! A scene is described by 26 interpretable attributes ([`scene`]): flags
//! such as "left side road exists", lane counts, and continuous values such
//! as lane width or distance to a crosswalk. From that description alone the
//! crate derives:
//!
//! - a top-view semantic grid ([`render`]),
//! - a perspective label map for a calibrated camera over a flat ground,
//!   and the inverse mapping back to the top view ([`camera`]),
//! - soft-bin targets and the losses of a model that predicts the attributes
//!   ([`supervision`]),
//! - attribute and segmentation metrics ([`metrics`]).
//!
//! [`io`] reads KITTI calibrations and JSONL manifests and writes grids,
//! [`cli`] drives batch jobs, and [`service`] is the HTTP backend of an
//! annotation tool.
//!
//! ```
//! use roadlayout::grid::{GridSpec, SemanticClass};
//! use roadlayout::render::render;
//! use roadlayout::scene::SceneAttributes;
//!
//! let grid = render(&SceneAttributes::default(), &GridSpec::default()).unwrap();
//! assert!(grid.count(SemanticClass::Road) > 0);
//! ```
//!
//! The `examples/` directory has one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod cli;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod render;
pub mod scene;
pub mod service;
pub mod supervision;
