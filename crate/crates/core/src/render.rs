//! Rasterize a parametric scene into a top-view semantic grid.
//!
//! Geometry is evaluated at cell centers only, with no anti-aliasing, so the
//! output is bit-exact across runs and platforms. Primitives are painted in a
//! fixed order (background, sidewalk, road, crosswalk, lane boundary) and a
//! later primitive wins a cell.
//!
//! Every lateral test is written as a closed interval in a frame whose sign
//! flips under mirroring, which makes rendering the mirrored scene produce
//! exactly the horizontally flipped grid.

use std::f64::consts::FRAC_PI_2;

use crate::grid::{GridSpec, SemanticClass, SemanticGrid};
use crate::scene::{self, BinaryAttr, ContinuousAttr, MulticlassAttr, SceneAttributes, SceneError};

/// Painted width of lane boundary lines, in meters.
pub const LINE_WIDTH: f64 = 0.25;
/// Center-to-center spacing of the two lines of a delimiter.
pub const DELIMITER_SPACING: f64 = 0.5;
/// Length of a crosswalk band along the road it crosses.
pub const CROSSWALK_LENGTH: f64 = 3.0;
/// Gap between the main road edge and a side-road crosswalk.
pub const SIDE_CROSSWALK_SETBACK: f64 = 1.0;
/// Depth of the full-width road patch drawn when the ego is in an intersection.
pub const INTERSECTION_DEPTH: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign of the lateral coordinate on this side.
    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Centerline {
    Straight {
        x: f64,
    },
    /// Arc around `(center_x, 0)`. `turn` is +1 for a left curve, -1 for right.
    Arc {
        center_x: f64,
        radius: f64,
        turn: f64,
    },
}

/// Position of a ground point relative to the main road.
#[derive(Debug, Clone, Copy)]
struct RoadFrame {
    /// Arc length along the ego-lane centerline.
    along: f64,
    /// Signed lateral offset from the ego-lane centerline, right positive.
    lateral: f64,
}

impl Centerline {
    fn frame(&self, x: f64, z: f64) -> Option<RoadFrame> {
        match *self {
            Centerline::Straight { x: cx } => Some(RoadFrame {
                along: z,
                lateral: x - cx,
            }),
            Centerline::Arc {
                center_x,
                radius,
                turn,
            } => {
                let dx = x - center_x;
                let r = dx.hypot(z);
                let angle = z.atan2(turn * dx);
                if !(0.0..=FRAC_PI_2).contains(&angle) {
                    return None;
                }
                Some(RoadFrame {
                    along: radius * angle,
                    lateral: turn * (r - radius),
                })
            }
        }
    }

    /// Point at arc length `along`, with unit tangent and the outward unit
    /// normal toward `side`.
    fn pose(&self, along: f64, side: Side) -> ((f64, f64), (f64, f64), (f64, f64)) {
        match *self {
            Centerline::Straight { x } => ((x, along), (0.0, 1.0), (side.sign(), 0.0)),
            Centerline::Arc {
                center_x,
                radius,
                turn,
            } => {
                let angle = along / radius;
                let (sin, cos) = angle.sin_cos();
                let point = (center_x + turn * radius * cos, radius * sin);
                let tangent = (-turn * sin, cos);
                let normal = (side.sign() * cos, side.sign() * turn * sin);
                (point, tangent, normal)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SideRoad {
    side: Side,
    anchor: (f64, f64),
    tangent: (f64, f64),
    normal: (f64, f64),
    half_width: f64,
    /// Main road half width on this side.
    edge: f64,
    /// Lowest normal coordinate covered; negative for T-junctions so the
    /// side road spans the whole main road.
    reach: f64,
    crosswalk: bool,
}

impl SideRoad {
    /// Coordinates of a point along and away from the side road's axis.
    fn local(&self, x: f64, z: f64) -> (f64, f64) {
        let dx = x - self.anchor.0;
        let dz = z - self.anchor.1;
        (
            dx * self.tangent.0 + dz * self.tangent.1,
            dx * self.normal.0 + dz * self.normal.1,
        )
    }

    fn covers(&self, along: f64, away: f64) -> bool {
        along >= -self.half_width && along <= self.half_width && away >= self.reach
    }

    fn crosswalk_covers(&self, along: f64, away: f64) -> bool {
        let start = self.edge + SIDE_CROSSWALK_SETBACK;
        self.crosswalk
            && along >= -self.half_width
            && along <= self.half_width
            && away >= start
            && away <= start + CROSSWALK_LENGTH
    }
}

/// Scene geometry resolved from the attributes, independent of the grid.
#[derive(Debug, Clone)]
struct Layout {
    centerline: Centerline,
    half_left: f64,
    half_right: f64,
    /// Main road ends at this arc length (T-junction).
    end: f64,
    sidewalk_left: Option<f64>,
    sidewalk_right: Option<f64>,
    boundaries: Vec<f64>,
    delimiter: Option<(f64, f64)>,
    crosswalks: Vec<f64>,
    side_roads: Vec<SideRoad>,
    intersection: bool,
}

impl Layout {
    fn new(theta: &SceneAttributes) -> Self {
        let lane_width = theta[ContinuousAttr::LaneWidth];
        let lanes_left = theta[MulticlassAttr::LanesLeft] as f64;
        let lanes_right = theta[MulticlassAttr::LanesRight] as f64;
        let ego_x = -theta[ContinuousAttr::EgoLateralOffset];
        let half_left = (lanes_left + 0.5) * lane_width;
        let half_right = (lanes_right + 0.5) * lane_width;

        let centerline = if theta[BinaryAttr::MainRoadCurves] {
            let radius = theta[ContinuousAttr::CurveRadius];
            let turn = if theta[BinaryAttr::CurveDirectionLeft] {
                1.0
            } else {
                -1.0
            };
            Centerline::Arc {
                center_x: ego_x - turn * radius,
                radius,
                turn,
            }
        } else {
            Centerline::Straight { x: ego_x }
        };

        // Boundaries are generated outward from the ego lane on each side so
        // that mirroring maps each offset to its exact negation.
        let mut boundaries = Vec::new();
        for j in 0..=theta[MulticlassAttr::LanesLeft] {
            boundaries.push(-((j as f64 + 0.5) * lane_width));
        }
        for j in 0..=theta[MulticlassAttr::LanesRight] {
            boundaries.push((j as f64 + 0.5) * lane_width);
        }

        let delimiter = (theta[BinaryAttr::DelimiterExists] && !theta[BinaryAttr::OneWay]).then(|| {
            let middle = (half_right - half_left) / 2.0;
            (middle - DELIMITER_SPACING / 2.0, middle + DELIMITER_SPACING / 2.0)
        });

        let mut crosswalks = Vec::new();
        if theta[BinaryAttr::CrosswalkNearExists] {
            crosswalks.push(theta[ContinuousAttr::CrosswalkNearDistance]);
        }
        if theta[BinaryAttr::CrosswalkFarExists] {
            crosswalks.push(theta[ContinuousAttr::CrosswalkFarDistance]);
        }

        let t_junction = theta[BinaryAttr::MainRoadEndsAtT];
        let mut side_roads = Vec::new();
        let sides = [
            (
                Side::Left,
                BinaryAttr::LeftSideRoadExists,
                ContinuousAttr::LeftSideRoadDistance,
                ContinuousAttr::LeftSideRoadWidth,
                BinaryAttr::CrosswalkOnLeftSideRoad,
                half_left,
                half_right,
            ),
            (
                Side::Right,
                BinaryAttr::RightSideRoadExists,
                ContinuousAttr::RightSideRoadDistance,
                ContinuousAttr::RightSideRoadWidth,
                BinaryAttr::CrosswalkOnRightSideRoad,
                half_right,
                half_left,
            ),
        ];
        for (side, exists, distance, width, crosswalk, edge, opposite) in sides {
            if !theta[exists] {
                continue;
            }
            let (anchor, tangent, normal) = centerline.pose(theta[distance], side);
            side_roads.push(SideRoad {
                side,
                anchor,
                tangent,
                normal,
                half_width: theta[width] / 2.0,
                edge,
                reach: if t_junction { -opposite } else { 0.0 },
                crosswalk: theta[crosswalk],
            });
        }

        let end = if t_junction {
            side_roads
                .iter()
                .map(|road| match road.side {
                    Side::Left => theta[ContinuousAttr::LeftSideRoadDistance],
                    Side::Right => theta[ContinuousAttr::RightSideRoadDistance],
                })
                .fold(f64::INFINITY, f64::min)
        } else {
            f64::INFINITY
        };

        let sidewalk_width = theta[ContinuousAttr::SidewalkWidth];
        Layout {
            centerline,
            half_left,
            half_right,
            end,
            sidewalk_left: theta[BinaryAttr::SidewalkLeftExists].then_some(sidewalk_width),
            sidewalk_right: theta[BinaryAttr::SidewalkRightExists].then_some(sidewalk_width),
            boundaries,
            delimiter,
            crosswalks,
            side_roads,
            intersection: theta[BinaryAttr::EgoInIntersection],
        }
    }

    fn classify(&self, x: f64, z: f64) -> SemanticClass {
        let frame = self.centerline.frame(x, z);
        let on_main_extent = frame.filter(|f| f.along >= 0.0 && f.along <= self.end);
        let main = on_main_extent
            .filter(|f| f.lateral >= -self.half_left && f.lateral <= self.half_right);

        let mut side_hits = [false; 2];
        let mut side_crosswalk = false;
        for road in &self.side_roads {
            let (along, away) = road.local(x, z);
            if road.covers(along, away) {
                side_hits[road.side as usize] = true;
                side_crosswalk |= road.crosswalk_covers(along, away);
            }
        }
        let in_intersection = self.intersection && (0.0..=INTERSECTION_DEPTH).contains(&z);
        let road = main.is_some() || side_hits[0] || side_hits[1] || in_intersection;

        let mut class = SemanticClass::Background;
        if let Some(f) = on_main_extent {
            let left = self.sidewalk_left.is_some_and(|w| {
                f.lateral >= -self.half_left - w && f.lateral <= -self.half_left
            });
            let right = self.sidewalk_right.is_some_and(|w| {
                f.lateral >= self.half_right && f.lateral <= self.half_right + w
            });
            if left || right {
                class = SemanticClass::Sidewalk;
            }
        }
        if !road {
            return class;
        }
        class = SemanticClass::Road;

        if side_crosswalk {
            class = SemanticClass::Crosswalk;
        }
        if let Some(f) = main {
            if self
                .crosswalks
                .iter()
                .any(|&d| f.along >= d && f.along <= d + CROSSWALK_LENGTH)
            {
                class = SemanticClass::Crosswalk;
            }
            if !in_intersection && self.on_line(f.lateral, &side_hits) {
                class = SemanticClass::LaneBoundary;
            }
        }
        class
    }

    fn on_line(&self, lateral: f64, side_hits: &[bool; 2]) -> bool {
        let half = LINE_WIDTH / 2.0;
        let near = |offset: f64| lateral >= offset - half && lateral <= offset + half;
        // Edge lines are painted just inside the road so they survive the
        // road membership test; road edges stay open where a side road joins.
        let left_edge = !side_hits[Side::Left as usize]
            && lateral >= -self.half_left
            && lateral <= -self.half_left + LINE_WIDTH;
        let right_edge = !side_hits[Side::Right as usize]
            && lateral >= self.half_right - LINE_WIDTH
            && lateral <= self.half_right;
        let hit_boundary = left_edge
            || right_edge
            || self
                .boundaries
                .iter()
                .any(|&b| b != -self.half_left && b != self.half_right && near(b));
        hit_boundary || self.delimiter.is_some_and(|(a, b)| near(a) || near(b))
    }
}

/// Render the scene's top-view semantics.
pub fn render(theta: &SceneAttributes, spec: &GridSpec) -> Result<SemanticGrid, SceneError> {
    scene::ensure_valid(theta)?;
    let layout = Layout::new(theta);
    Ok(SemanticGrid::from_fn(spec.rows, spec.cols, |r, c| {
        let (x, z) = spec.cell_center(r, c);
        layout.classify(x, z)
    }))
}
