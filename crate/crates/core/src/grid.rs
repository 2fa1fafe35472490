//! Label grids shared by the top-view and perspective pipelines.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Semantic label of one grid cell or image pixel.
///
/// The first five are the supervised classes; `Unknown` only appears after
/// projecting perspective labels into the top view, on cells the camera
/// cannot see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SemanticClass {
    Background = 0,
    Road = 1,
    Sidewalk = 2,
    LaneBoundary = 3,
    Crosswalk = 4,
    Unknown = 5,
}

/// Number of supervised classes (everything except `Unknown`).
pub const NUM_CLASSES: usize = 5;

impl SemanticClass {
    pub const SUPERVISED: [SemanticClass; NUM_CLASSES] = [
        SemanticClass::Background,
        SemanticClass::Road,
        SemanticClass::Sidewalk,
        SemanticClass::LaneBoundary,
        SemanticClass::Crosswalk,
    ];

    pub const ALL: [SemanticClass; 6] = [
        SemanticClass::Background,
        SemanticClass::Road,
        SemanticClass::Sidewalk,
        SemanticClass::LaneBoundary,
        SemanticClass::Crosswalk,
        SemanticClass::Unknown,
    ];

    /// The layout classes averaged by per-image IoU.
    pub const LAYOUT: [SemanticClass; 4] = [
        SemanticClass::Road,
        SemanticClass::Sidewalk,
        SemanticClass::LaneBoundary,
        SemanticClass::Crosswalk,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_u8(value: u8) -> Option<Self> {
        Self::ALL.get(value as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Background => "background",
            SemanticClass::Road => "road",
            SemanticClass::Sidewalk => "sidewalk",
            SemanticClass::LaneBoundary => "lane_boundary",
            SemanticClass::Crosswalk => "crosswalk",
            SemanticClass::Unknown => "unknown",
        }
    }

    /// Fixed RGB palette used for PNG export.
    pub fn color(self) -> [u8; 3] {
        match self {
            SemanticClass::Background => [64, 64, 64],
            SemanticClass::Road => [128, 64, 128],
            SemanticClass::Sidewalk => [244, 35, 232],
            SemanticClass::LaneBoundary => [255, 255, 255],
            SemanticClass::Crosswalk => [220, 220, 0],
            SemanticClass::Unknown => [0, 0, 0],
        }
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.color() == rgb)
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry of the top-view grid. Row 0 is the far edge; the ego camera's
/// ground footprint sits at the bottom-center of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Forward extent in meters.
    pub depth_extent: f64,
    /// Full lateral extent in meters, split evenly left and right.
    pub lateral_extent: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 256,
            cols: 128,
            depth_extent: 60.0,
            lateral_extent: 30.0,
        }
    }
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, depth_extent: f64, lateral_extent: f64) -> Self {
        GridSpec {
            rows,
            cols,
            depth_extent,
            lateral_extent,
        }
    }

    /// Same extents at a different resolution.
    pub fn with_resolution(&self, rows: usize, cols: usize) -> Self {
        GridSpec { rows, cols, ..*self }
    }

    pub fn cell_depth(&self) -> f64 {
        self.depth_extent / self.rows as f64
    }

    pub fn cell_width(&self) -> f64 {
        self.lateral_extent / self.cols as f64
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ground coordinates `(x, z)` of the center of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let z = (self.rows as f64 - row as f64 - 0.5) * self.cell_depth();
        let x = (col as f64 + 0.5 - self.cols as f64 / 2.0) * self.cell_width();
        (x, z)
    }

    pub fn contains_point(&self, x: f64, z: f64) -> bool {
        (0.0..=self.depth_extent).contains(&z) && x.abs() <= self.lateral_extent / 2.0
    }

    /// Cell containing the ground point, or `None` outside the grid extent.
    pub fn cell_at(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        if !self.contains_point(x, z) || self.is_empty() {
            return None;
        }
        let k = ((z / self.cell_depth()).floor() as usize).min(self.rows - 1);
        let col = ((x / self.cell_width() + self.cols as f64 / 2.0).floor() as usize)
            .min(self.cols - 1);
        Some((self.rows - 1 - k, col))
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

/// Row-major grid of class labels.
#[derive(Clone, PartialEq, Eq)]
pub struct SemanticGrid {
    rows: usize,
    cols: usize,
    labels: Vec<SemanticClass>,
}

impl fmt::Debug for SemanticGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemanticGrid")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("histogram", &self.histogram())
            .finish()
    }
}

impl SemanticGrid {
    pub fn filled(rows: usize, cols: usize, class: SemanticClass) -> Self {
        SemanticGrid {
            rows,
            cols,
            labels: vec![class; rows * cols],
        }
    }

    pub fn from_labels(
        rows: usize,
        cols: usize,
        labels: Vec<SemanticClass>,
    ) -> Result<Self, GridError> {
        if labels.len() != rows * cols {
            return Err(GridError::ShapeMismatch {
                expected: (rows, cols),
                actual: (labels.len(), 1),
            });
        }
        Ok(SemanticGrid { rows, cols, labels })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> SemanticClass,
    ) -> Self {
        let mut labels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                labels.push(f(r, c));
            }
        }
        SemanticGrid { rows, cols, labels }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn labels(&self) -> &[SemanticClass] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> SemanticClass {
        self.labels[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: SemanticClass) {
        self.labels[row * self.cols + col] = class;
    }

    pub fn check_shape(&self, other: &SemanticGrid) -> Result<(), GridError> {
        if self.shape() != other.shape() {
            return Err(GridError::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    /// Label bytes in row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.labels.iter().map(|c| *c as u8).collect()
    }

    pub fn flip_horizontal(&self) -> SemanticGrid {
        SemanticGrid::from_fn(self.rows, self.cols, |r, c| self.get(r, self.cols - 1 - c))
    }

    /// Per-class cell counts, indexed by [`SemanticClass::index`].
    pub fn histogram(&self) -> [usize; 6] {
        let mut counts = [0usize; 6];
        for label in &self.labels {
            counts[label.index()] += 1;
        }
        counts
    }

    pub fn count(&self, class: SemanticClass) -> usize {
        self.histogram()[class.index()]
    }

    /// True when all nine cells of the 3x3 neighborhood of `(row, col)` lie
    /// in the grid and carry the same label.
    pub fn is_uniform_3x3(&self, row: usize, col: usize) -> bool {
        if row == 0 || col == 0 || row + 1 >= self.rows || col + 1 >= self.cols {
            return false;
        }
        let center = self.get(row, col);
        (row - 1..=row + 1).all(|r| (col - 1..=col + 1).all(|c| self.get(r, c) == center))
    }

    /// Halve the resolution by 2x2 majority vote. Ties go to the class the
    /// renderer paints on top, so thin lines survive.
    pub fn downsample_majority(&self) -> SemanticGrid {
        const PRIORITY: [SemanticClass; 6] = [
            SemanticClass::Unknown,
            SemanticClass::Background,
            SemanticClass::Sidewalk,
            SemanticClass::Road,
            SemanticClass::Crosswalk,
            SemanticClass::LaneBoundary,
        ];
        let rows = self.rows / 2;
        let cols = self.cols / 2;
        SemanticGrid::from_fn(rows, cols, |r, c| {
            let mut counts = [0u8; 6];
            for dr in 0..2 {
                for dc in 0..2 {
                    counts[self.get(2 * r + dr, 2 * c + dc).index()] += 1;
                }
            }
            PRIORITY
                .into_iter()
                .max_by_key(|c| counts[c.index()])
                .expect("six classes")
        })
    }
}

/// Per-class cell counts of a grid.
pub fn class_histogram(grid: &SemanticGrid) -> [usize; 6] {
    grid.histogram()
}
