//! Pinhole camera over a flat ground plane.
//!
//! World frame: `x` right, `z` forward along the ground, camera optical
//! center `height` meters above the ground point `(0, 0)`. The camera may be
//! pitched about its horizontal axis (positive pitch looks down); yaw and roll
//! are zero. Under this model every pixel below the horizon sees exactly one
//! ground point, so labels can be moved between the perspective image and the
//! top-view grid in closed form without any depth estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{GridError, GridSpec, SemanticClass, SemanticGrid};

/// Minimum camera-frame depth for a point to count as in front of the camera.
pub const MIN_DEPTH: f64 = 1e-6;
/// Ray hits farther than this multiple of the grid depth are discarded.
pub const FAR_GUARD_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Optical center height above the ground plane, meters.
    pub height: f64,
    /// Radians; positive tilts the optical axis toward the ground.
    pub pitch: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CameraError {
    #[error("invalid camera: {0}")]
    Invalid(String),
    #[error("ground point ({x}, {z}) is at or behind the camera (depth {depth})")]
    BehindCamera { x: f64, z: f64, depth: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_width: u32,
        image_height: u32,
        height: f64,
        pitch: f64,
    ) -> Result<Self, CameraError> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
            height,
            pitch,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.height, self.pitch]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CameraError::Invalid("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::Invalid(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.height <= 0.0 {
            return Err(CameraError::Invalid(format!(
                "height must be positive, got {}",
                self.height
            )));
        }
        if self.pitch.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(CameraError::Invalid(format!(
                "|pitch| must be below pi/2, got {}",
                self.pitch
            )));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(CameraError::Invalid("image dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Camera-frame coordinates of the ground point `(x, 0, z)`; `y` points
    /// down in the image.
    fn to_camera_frame(self, x: f64, z: f64) -> (f64, f64, f64) {
        let (sin, cos) = self.pitch.sin_cos();
        (
            x,
            self.height * cos - z * sin,
            self.height * sin + z * cos,
        )
    }

    fn project_camera_frame(&self, (x, y, depth): (f64, f64, f64)) -> (f64, f64) {
        (self.cx + self.fx * x / depth, self.cy + self.fy * y / depth)
    }

    /// Project a ground point into the image. The result may fall outside the
    /// image bounds.
    pub fn ground_to_image(&self, x: f64, z: f64) -> Result<(f64, f64), CameraError> {
        let p = self.to_camera_frame(x, z);
        if !(p.2 > MIN_DEPTH) {
            return Err(CameraError::BehindCamera { x, z, depth: p.2 });
        }
        Ok(self.project_camera_frame(p))
    }

    /// Intersect the viewing ray through `(u, v)` with the ground plane.
    /// Returns `None` at or above the horizon and for hits beyond `max_depth`.
    pub fn image_to_ground_within(&self, u: f64, v: f64, max_depth: f64) -> Option<(f64, f64)> {
        let a = (u - self.cx) / self.fx;
        let b = (v - self.cy) / self.fy;
        let (sin, cos) = self.pitch.sin_cos();
        // Ray direction (a, b, 1) rotated back into the level frame.
        let down = b * cos + sin;
        let forward = cos - b * sin;
        if !(down > 0.0) {
            return None;
        }
        let t = self.height / down;
        let (x, z) = (t * a, t * forward);
        if !(z <= max_depth) {
            return None;
        }
        Some((x, z))
    }

    /// [`image_to_ground_within`](Self::image_to_ground_within) with the far
    /// guard set for the default 60 m grid.
    pub fn image_to_ground(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        self.image_to_ground_within(u, v, FAR_GUARD_FACTOR * GridSpec::default().depth_extent)
    }

    /// True when the projection lands inside the pixel area `[0, W) x [0, H)`
    /// with positive depth.
    pub fn sees(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let (u, v) = self.ground_to_image(x, z).ok()?;
        let inside = u >= 0.0
            && u < self.image_width as f64
            && v >= 0.0
            && v < self.image_height as f64;
        inside.then_some((v as usize, u as usize))
    }
}

pub fn ground_to_image(cam: &CameraModel, x: f64, z: f64) -> Result<(f64, f64), CameraError> {
    cam.ground_to_image(x, z)
}

pub fn image_to_ground(cam: &CameraModel, u: f64, v: f64) -> Option<(f64, f64)> {
    cam.image_to_ground(u, v)
}

fn check_spec(grid: &SemanticGrid, spec: &GridSpec) -> Result<(), GridError> {
    if grid.shape() != (spec.rows, spec.cols) {
        return Err(GridError::ShapeMismatch {
            expected: (spec.rows, spec.cols),
            actual: grid.shape(),
        });
    }
    Ok(())
}

/// Back-project a complete top-view label grid into the camera image.
///
/// Every pixel takes the label of the grid cell its center ray hits. Because
/// the top-view source is complete, regions that objects would hide in a real
/// photo still receive layout labels. Pixels whose ray misses the ground or
/// the grid extent are `Background`.
pub fn bev_to_perspective(
    bev: &SemanticGrid,
    spec: &GridSpec,
    cam: &CameraModel,
) -> Result<SemanticGrid, CameraError> {
    check_spec(bev, spec)?;
    let width = cam.image_width as usize;
    let height = cam.image_height as usize;
    let max_depth = FAR_GUARD_FACTOR * spec.depth_extent;
    let labels: Vec<SemanticClass> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..width).map(move |col| {
                cam.image_to_ground_within(col as f64 + 0.5, row as f64 + 0.5, max_depth)
                    .and_then(|(x, z)| spec.cell_at(x, z))
                    .map_or(SemanticClass::Background, |(r, c)| bev.get(r, c))
            })
        })
        .collect();
    Ok(SemanticGrid::from_labels(height, width, labels)?)
}

/// Map perspective labels onto the top-view grid (inverse perspective
/// mapping). Cells the camera cannot see become `Unknown`.
pub fn perspective_to_bev(
    persp: &SemanticGrid,
    cam: &CameraModel,
    spec: &GridSpec,
) -> Result<SemanticGrid, CameraError> {
    let expected = (cam.image_height as usize, cam.image_width as usize);
    if persp.shape() != expected {
        return Err(GridError::ShapeMismatch {
            expected,
            actual: persp.shape(),
        }
        .into());
    }
    let labels: Vec<SemanticClass> = (0..spec.rows)
        .into_par_iter()
        .flat_map_iter(|r| {
            (0..spec.cols).map(move |c| {
                let (x, z) = spec.cell_center(r, c);
                cam.sees(x, z)
                    .map_or(SemanticClass::Unknown, |(v, u)| persp.get(v, u))
            })
        })
        .collect();
    Ok(SemanticGrid::from_labels(spec.rows, spec.cols, labels)?)
}

/// Row-major visibility of each top-view cell center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask {
    pub rows: usize,
    pub cols: usize,
    pub visible: Vec<bool>,
}

impl VisibilityMask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.visible[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }
}

pub fn visibility_mask(cam: &CameraModel, spec: &GridSpec) -> VisibilityMask {
    let mut visible = Vec::with_capacity(spec.len());
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let (x, z) = spec.cell_center(r, c);
            visible.push(cam.sees(x, z).is_some());
        }
    }
    VisibilityMask {
        rows: spec.rows,
        cols: spec.cols,
        visible,
    }
}
