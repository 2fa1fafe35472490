//! Parametric top-view scene description.
//!
//! A scene is described by 14 binary flags, 2 lane counts and 10 continuous
//! measurements. Several attributes only make sense when a parent flag is set
//! (a side-road width without a side road, say); [`AttributeMask`] records which
//! entries are meaningful for a given scene and everything downstream
//! (targets, losses, metrics) skips the inactive ones.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const NUM_BINARY: usize = 14;
pub const NUM_MULTICLASS: usize = 2;
pub const NUM_CONTINUOUS: usize = 10;

/// Number of classes for each lane count (0 through 5 lanes).
pub const LANE_CLASSES: usize = 6;
pub const MAX_LANES: u8 = (LANE_CLASSES - 1) as u8;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryAttr {
    OneWay,
    LeftSideRoadExists,
    RightSideRoadExists,
    MainRoadEndsAtT,
    CrosswalkNearExists,
    CrosswalkFarExists,
    CrosswalkOnLeftSideRoad,
    CrosswalkOnRightSideRoad,
    SidewalkLeftExists,
    SidewalkRightExists,
    DelimiterExists,
    MainRoadCurves,
    CurveDirectionLeft,
    EgoInIntersection,
}

impl BinaryAttr {
    pub const ALL: [BinaryAttr; NUM_BINARY] = [
        BinaryAttr::OneWay,
        BinaryAttr::LeftSideRoadExists,
        BinaryAttr::RightSideRoadExists,
        BinaryAttr::MainRoadEndsAtT,
        BinaryAttr::CrosswalkNearExists,
        BinaryAttr::CrosswalkFarExists,
        BinaryAttr::CrosswalkOnLeftSideRoad,
        BinaryAttr::CrosswalkOnRightSideRoad,
        BinaryAttr::SidewalkLeftExists,
        BinaryAttr::SidewalkRightExists,
        BinaryAttr::DelimiterExists,
        BinaryAttr::MainRoadCurves,
        BinaryAttr::CurveDirectionLeft,
        BinaryAttr::EgoInIntersection,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryAttr::OneWay => "one_way",
            BinaryAttr::LeftSideRoadExists => "left_side_road_exists",
            BinaryAttr::RightSideRoadExists => "right_side_road_exists",
            BinaryAttr::MainRoadEndsAtT => "main_road_ends_at_T",
            BinaryAttr::CrosswalkNearExists => "crosswalk_near_exists",
            BinaryAttr::CrosswalkFarExists => "crosswalk_far_exists",
            BinaryAttr::CrosswalkOnLeftSideRoad => "crosswalk_on_left_side_road",
            BinaryAttr::CrosswalkOnRightSideRoad => "crosswalk_on_right_side_road",
            BinaryAttr::SidewalkLeftExists => "sidewalk_left_exists",
            BinaryAttr::SidewalkRightExists => "sidewalk_right_exists",
            BinaryAttr::DelimiterExists => "delimiter_exists",
            BinaryAttr::MainRoadCurves => "main_road_curves",
            BinaryAttr::CurveDirectionLeft => "curve_direction_left",
            BinaryAttr::EgoInIntersection => "ego_in_intersection",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// The flag that must hold for this attribute to be meaningful.
    pub fn gate(self) -> Option<Gate> {
        match self {
            BinaryAttr::CrosswalkOnLeftSideRoad => Some(Gate::Set(BinaryAttr::LeftSideRoadExists)),
            BinaryAttr::CrosswalkOnRightSideRoad => {
                Some(Gate::Set(BinaryAttr::RightSideRoadExists))
            }
            BinaryAttr::CurveDirectionLeft => Some(Gate::Set(BinaryAttr::MainRoadCurves)),
            BinaryAttr::DelimiterExists => Some(Gate::Unset(BinaryAttr::OneWay)),
            _ => None,
        }
    }

    /// The left/right counterpart, for attributes that come in pairs.
    pub fn mirrored(self) -> Self {
        match self {
            BinaryAttr::LeftSideRoadExists => BinaryAttr::RightSideRoadExists,
            BinaryAttr::RightSideRoadExists => BinaryAttr::LeftSideRoadExists,
            BinaryAttr::CrosswalkOnLeftSideRoad => BinaryAttr::CrosswalkOnRightSideRoad,
            BinaryAttr::CrosswalkOnRightSideRoad => BinaryAttr::CrosswalkOnLeftSideRoad,
            BinaryAttr::SidewalkLeftExists => BinaryAttr::SidewalkRightExists,
            BinaryAttr::SidewalkRightExists => BinaryAttr::SidewalkLeftExists,
            other => other,
        }
    }
}

impl fmt::Display for BinaryAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lane counts beside the ego lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MulticlassAttr {
    LanesLeft,
    LanesRight,
}

impl MulticlassAttr {
    pub const ALL: [MulticlassAttr; NUM_MULTICLASS] =
        [MulticlassAttr::LanesLeft, MulticlassAttr::LanesRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MulticlassAttr::LanesLeft => "lanes_left",
            MulticlassAttr::LanesRight => "lanes_right",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn mirrored(self) -> Self {
        match self {
            MulticlassAttr::LanesLeft => MulticlassAttr::LanesRight,
            MulticlassAttr::LanesRight => MulticlassAttr::LanesLeft,
        }
    }
}

impl fmt::Display for MulticlassAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Continuous measurements, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContinuousAttr {
    LaneWidth,
    LeftSideRoadDistance,
    RightSideRoadDistance,
    LeftSideRoadWidth,
    RightSideRoadWidth,
    CrosswalkNearDistance,
    CrosswalkFarDistance,
    SidewalkWidth,
    CurveRadius,
    EgoLateralOffset,
}

impl ContinuousAttr {
    pub const ALL: [ContinuousAttr; NUM_CONTINUOUS] = [
        ContinuousAttr::LaneWidth,
        ContinuousAttr::LeftSideRoadDistance,
        ContinuousAttr::RightSideRoadDistance,
        ContinuousAttr::LeftSideRoadWidth,
        ContinuousAttr::RightSideRoadWidth,
        ContinuousAttr::CrosswalkNearDistance,
        ContinuousAttr::CrosswalkFarDistance,
        ContinuousAttr::SidewalkWidth,
        ContinuousAttr::CurveRadius,
        ContinuousAttr::EgoLateralOffset,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ContinuousAttr::LaneWidth => "lane_width",
            ContinuousAttr::LeftSideRoadDistance => "left_side_road_distance",
            ContinuousAttr::RightSideRoadDistance => "right_side_road_distance",
            ContinuousAttr::LeftSideRoadWidth => "left_side_road_width",
            ContinuousAttr::RightSideRoadWidth => "right_side_road_width",
            ContinuousAttr::CrosswalkNearDistance => "crosswalk_near_distance",
            ContinuousAttr::CrosswalkFarDistance => "crosswalk_far_distance",
            ContinuousAttr::SidewalkWidth => "sidewalk_width",
            ContinuousAttr::CurveRadius => "curve_radius",
            ContinuousAttr::EgoLateralOffset => "ego_lateral_offset",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Closed value range. For `ego_lateral_offset` this is the widest range;
    /// validation further restricts it to half the lane width.
    pub fn range(self) -> (f64, f64) {
        match self {
            ContinuousAttr::LaneWidth => (2.5, 5.0),
            ContinuousAttr::LeftSideRoadDistance
            | ContinuousAttr::RightSideRoadDistance
            | ContinuousAttr::CrosswalkNearDistance
            | ContinuousAttr::CrosswalkFarDistance => (0.0, 60.0),
            ContinuousAttr::LeftSideRoadWidth | ContinuousAttr::RightSideRoadWidth => (3.0, 12.0),
            ContinuousAttr::SidewalkWidth => (1.0, 4.0),
            ContinuousAttr::CurveRadius => (20.0, 1000.0),
            ContinuousAttr::EgoLateralOffset => (-2.5, 2.5),
        }
    }

    pub fn gate(self) -> Option<Gate> {
        match self {
            ContinuousAttr::LeftSideRoadDistance | ContinuousAttr::LeftSideRoadWidth => {
                Some(Gate::Set(BinaryAttr::LeftSideRoadExists))
            }
            ContinuousAttr::RightSideRoadDistance | ContinuousAttr::RightSideRoadWidth => {
                Some(Gate::Set(BinaryAttr::RightSideRoadExists))
            }
            ContinuousAttr::CrosswalkNearDistance => {
                Some(Gate::Set(BinaryAttr::CrosswalkNearExists))
            }
            ContinuousAttr::CrosswalkFarDistance => Some(Gate::Set(BinaryAttr::CrosswalkFarExists)),
            ContinuousAttr::CurveRadius => Some(Gate::Set(BinaryAttr::MainRoadCurves)),
            _ => None,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            ContinuousAttr::LeftSideRoadDistance => ContinuousAttr::RightSideRoadDistance,
            ContinuousAttr::RightSideRoadDistance => ContinuousAttr::LeftSideRoadDistance,
            ContinuousAttr::LeftSideRoadWidth => ContinuousAttr::RightSideRoadWidth,
            ContinuousAttr::RightSideRoadWidth => ContinuousAttr::LeftSideRoadWidth,
            other => other,
        }
    }
}

impl fmt::Display for ContinuousAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Activation condition of a gated attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Set(BinaryAttr),
    Unset(BinaryAttr),
}

impl Gate {
    pub fn is_open(self, flags: &[bool; NUM_BINARY]) -> bool {
        match self {
            Gate::Set(parent) => flags[parent.index()],
            Gate::Unset(parent) => !flags[parent.index()],
        }
    }

    pub fn parent(self) -> BinaryAttr {
        match self {
            Gate::Set(p) | Gate::Unset(p) => p,
        }
    }
}

/// The parametric layout of one scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneAttributes {
    pub binary: [bool; NUM_BINARY],
    pub multiclass: [u8; NUM_MULTICLASS],
    pub continuous: [f64; NUM_CONTINUOUS],
}

impl Default for SceneAttributes {
    /// A single straight two-way ego lane of 3.5 m with nothing else present.
    fn default() -> Self {
        let mut continuous = [0.0; NUM_CONTINUOUS];
        continuous[ContinuousAttr::LaneWidth.index()] = 3.5;
        continuous[ContinuousAttr::SidewalkWidth.index()] = 2.0;
        SceneAttributes {
            binary: [false; NUM_BINARY],
            multiclass: [0; NUM_MULTICLASS],
            continuous,
        }
    }
}

impl Index<BinaryAttr> for SceneAttributes {
    type Output = bool;
    fn index(&self, attr: BinaryAttr) -> &bool {
        &self.binary[attr.index()]
    }
}

impl IndexMut<BinaryAttr> for SceneAttributes {
    fn index_mut(&mut self, attr: BinaryAttr) -> &mut bool {
        &mut self.binary[attr.index()]
    }
}

impl Index<MulticlassAttr> for SceneAttributes {
    type Output = u8;
    fn index(&self, attr: MulticlassAttr) -> &u8 {
        &self.multiclass[attr.index()]
    }
}

impl IndexMut<MulticlassAttr> for SceneAttributes {
    fn index_mut(&mut self, attr: MulticlassAttr) -> &mut u8 {
        &mut self.multiclass[attr.index()]
    }
}

impl Index<ContinuousAttr> for SceneAttributes {
    type Output = f64;
    fn index(&self, attr: ContinuousAttr) -> &f64 {
        &self.continuous[attr.index()]
    }
}

impl IndexMut<ContinuousAttr> for SceneAttributes {
    fn index_mut(&mut self, attr: ContinuousAttr) -> &mut f64 {
        &mut self.continuous[attr.index()]
    }
}

/// Which attributes carry meaning for a particular scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMask {
    pub active_binary: [bool; NUM_BINARY],
    pub active_multiclass: [bool; NUM_MULTICLASS],
    pub active_continuous: [bool; NUM_CONTINUOUS],
}

impl AttributeMask {
    pub fn all_active() -> Self {
        AttributeMask {
            active_binary: [true; NUM_BINARY],
            active_multiclass: [true; NUM_MULTICLASS],
            active_continuous: [true; NUM_CONTINUOUS],
        }
    }

    pub fn none_active() -> Self {
        AttributeMask {
            active_binary: [false; NUM_BINARY],
            active_multiclass: [false; NUM_MULTICLASS],
            active_continuous: [false; NUM_CONTINUOUS],
        }
    }

    /// Mask implied by a set of binary flags. Never fails; see [`active_mask`]
    /// for the validating entry point.
    pub fn from_flags(flags: &[bool; NUM_BINARY]) -> Self {
        let mut mask = Self::all_active();
        for attr in BinaryAttr::ALL {
            if let Some(gate) = attr.gate() {
                mask.active_binary[attr.index()] = gate.is_open(flags);
            }
        }
        for attr in ContinuousAttr::ALL {
            if let Some(gate) = attr.gate() {
                mask.active_continuous[attr.index()] = gate.is_open(flags);
            }
        }
        mask
    }

    pub fn binary(&self, attr: BinaryAttr) -> bool {
        self.active_binary[attr.index()]
    }

    pub fn continuous(&self, attr: ContinuousAttr) -> bool {
        self.active_continuous[attr.index()]
    }

    pub fn count_active(&self) -> usize {
        self.active_binary.iter().filter(|a| **a).count()
            + self.active_multiclass.iter().filter(|a| **a).count()
            + self.active_continuous.iter().filter(|a| **a).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by(|a, b| a.field.cmp(&b.field).then_with(|| a.message.cmp(&b.message)));
        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(ValidationReport),
    #[error("inconsistent sampling range for {field}: {message}")]
    InconsistentRange { field: String, message: String },
    #[error("annotation parse error: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u64),
}

/// Check every range and consistency rule. Inactive continuous entries are
/// not range-checked since they carry no meaning.
pub fn validate(theta: &SceneAttributes) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |field: &str, message: String| {
        violations.push(Violation {
            field: field.to_string(),
            message,
        })
    };
    let mask = AttributeMask::from_flags(&theta.binary);

    for attr in MulticlassAttr::ALL {
        let n = theta[attr];
        if n > MAX_LANES {
            push(attr.name(), format!("{n} outside 0..={MAX_LANES}"));
        }
    }

    for attr in ContinuousAttr::ALL {
        let value = theta[attr];
        if !value.is_finite() {
            push(attr.name(), format!("non-finite value {value}"));
            continue;
        }
        if !mask.continuous(attr) {
            continue;
        }
        let (lo, hi) = attr.range();
        if value < lo || value > hi {
            push(attr.name(), format!("{value} outside [{lo}, {hi}]"));
        }
    }

    let lane_width = theta[ContinuousAttr::LaneWidth];
    let offset = theta[ContinuousAttr::EgoLateralOffset];
    if lane_width.is_finite() && offset.is_finite() && offset.abs() > lane_width / 2.0 {
        push(
            ContinuousAttr::EgoLateralOffset.name(),
            format!("|{offset}| exceeds half the lane width {}", lane_width / 2.0),
        );
    }

    if theta[BinaryAttr::CrosswalkNearExists] && theta[BinaryAttr::CrosswalkFarExists] {
        let near = theta[ContinuousAttr::CrosswalkNearDistance];
        let far = theta[ContinuousAttr::CrosswalkFarDistance];
        if !(far > near) {
            push(
                ContinuousAttr::CrosswalkFarDistance.name(),
                format!("far crosswalk at {far} is not beyond near crosswalk at {near}"),
            );
        }
    }

    if theta[BinaryAttr::MainRoadEndsAtT]
        && !theta[BinaryAttr::LeftSideRoadExists]
        && !theta[BinaryAttr::RightSideRoadExists]
    {
        push(
            BinaryAttr::MainRoadEndsAtT.name(),
            "T-junction requires at least one side road".to_string(),
        );
    }

    ValidationReport::from_violations(violations)
}

pub fn ensure_valid(theta: &SceneAttributes) -> Result<(), SceneError> {
    let report = validate(theta);
    if report.ok {
        Ok(())
    } else {
        Err(SceneError::Invalid(report))
    }
}

pub fn active_mask(theta: &SceneAttributes) -> Result<AttributeMask, SceneError> {
    ensure_valid(theta)?;
    Ok(AttributeMask::from_flags(&theta.binary))
}

/// Reflect the scene about the ego's forward axis.
pub fn mirror(theta: &SceneAttributes) -> SceneAttributes {
    let mut out = *theta;
    for attr in BinaryAttr::ALL {
        out[attr.mirrored()] = theta[attr];
    }
    for attr in MulticlassAttr::ALL {
        out[attr.mirrored()] = theta[attr];
    }
    for attr in ContinuousAttr::ALL {
        out[attr.mirrored()] = theta[attr];
    }
    if theta[BinaryAttr::MainRoadCurves] {
        out[BinaryAttr::CurveDirectionLeft] = !theta[BinaryAttr::CurveDirectionLeft];
    }
    out[ContinuousAttr::EgoLateralOffset] = -theta[ContinuousAttr::EgoLateralOffset];
    out
}

/// Optional overrides for [`sample`]. Unset entries fall back to the schema
/// ranges and fair coin flips.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleRanges {
    pub flags: [Option<bool>; NUM_BINARY],
    pub lanes: [Option<(u8, u8)>; NUM_MULTICLASS],
    pub continuous: [Option<(f64, f64)>; NUM_CONTINUOUS],
}

impl SampleRanges {
    pub fn with_flag(mut self, attr: BinaryAttr, value: bool) -> Self {
        self.flags[attr.index()] = Some(value);
        self
    }

    pub fn with_lanes(mut self, attr: MulticlassAttr, lo: u8, hi: u8) -> Self {
        self.lanes[attr.index()] = Some((lo, hi));
        self
    }

    pub fn with_range(mut self, attr: ContinuousAttr, lo: f64, hi: f64) -> Self {
        self.continuous[attr.index()] = Some((lo, hi));
        self
    }

    /// All flags forced off; remaining entries still random.
    pub fn all_flags_off() -> Self {
        SampleRanges {
            flags: [Some(false); NUM_BINARY],
            ..Default::default()
        }
    }

    fn check(&self) -> Result<(), SceneError> {
        for attr in MulticlassAttr::ALL {
            if let Some((lo, hi)) = self.lanes[attr.index()] {
                if lo > hi || hi > MAX_LANES {
                    return Err(SceneError::InconsistentRange {
                        field: attr.name().to_string(),
                        message: format!("[{lo}, {hi}] is empty or exceeds {MAX_LANES}"),
                    });
                }
            }
        }
        for attr in ContinuousAttr::ALL {
            if let Some((lo, hi)) = self.continuous[attr.index()] {
                let (slo, shi) = attr.range();
                if !(lo <= hi) || lo < slo || hi > shi {
                    return Err(SceneError::InconsistentRange {
                        field: attr.name().to_string(),
                        message: format!("[{lo}, {hi}] is empty or leaves [{slo}, {shi}]"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Draw a valid scene. The result depends only on `seed` and `ranges`.
pub fn sample(seed: u64, ranges: &SampleRanges) -> Result<SceneAttributes, SceneError> {
    ranges.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut flags = [false; NUM_BINARY];
    for attr in BinaryAttr::ALL {
        let coin = rng.random_bool(0.5);
        flags[attr.index()] = ranges.flags[attr.index()].unwrap_or(coin);
    }
    let forced = |attr: BinaryAttr| ranges.flags[attr.index()].is_some();
    let t_junction = BinaryAttr::MainRoadEndsAtT.index();
    if flags[t_junction]
        && !flags[BinaryAttr::LeftSideRoadExists.index()]
        && !flags[BinaryAttr::RightSideRoadExists.index()]
    {
        if !forced(BinaryAttr::MainRoadEndsAtT) {
            flags[t_junction] = false;
        } else if !forced(BinaryAttr::LeftSideRoadExists) {
            flags[BinaryAttr::LeftSideRoadExists.index()] = true;
        } else if !forced(BinaryAttr::RightSideRoadExists) {
            flags[BinaryAttr::RightSideRoadExists.index()] = true;
        } else {
            return Err(SceneError::InconsistentRange {
                field: BinaryAttr::MainRoadEndsAtT.name().to_string(),
                message: "forced T-junction with both side roads forced absent".to_string(),
            });
        }
    }
    // Gated flags are cleared when their parent is closed.
    for attr in BinaryAttr::ALL {
        if let Some(gate) = attr.gate() {
            if !gate.is_open(&flags) {
                flags[attr.index()] = false;
            }
        }
    }

    let mut theta = SceneAttributes {
        binary: flags,
        multiclass: [0; NUM_MULTICLASS],
        continuous: [0.0; NUM_CONTINUOUS],
    };
    for attr in MulticlassAttr::ALL {
        let (lo, hi) = ranges.lanes[attr.index()].unwrap_or((0, MAX_LANES));
        theta[attr] = rng.random_range(lo..=hi);
    }

    let mask = AttributeMask::from_flags(&flags);
    let range_of =
        |attr: ContinuousAttr| ranges.continuous[attr.index()].unwrap_or_else(|| attr.range());
    let mut draw = |lo: f64, hi: f64| -> f64 {
        if lo < hi {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };

    for attr in ContinuousAttr::ALL {
        let (lo, hi) = range_of(attr);
        let value = match attr {
            ContinuousAttr::EgoLateralOffset => {
                let half = theta[ContinuousAttr::LaneWidth] / 2.0;
                let (lo, hi) = (lo.max(-half), hi.min(half));
                if lo > hi {
                    return Err(SceneError::InconsistentRange {
                        field: attr.name().to_string(),
                        message: format!("no offset within half lane width {half}"),
                    });
                }
                draw(lo, hi)
            }
            ContinuousAttr::CrosswalkFarDistance
                if mask.continuous(ContinuousAttr::CrosswalkNearDistance) =>
            {
                let near = theta[ContinuousAttr::CrosswalkNearDistance];
                draw(lo.max(near), hi)
            }
            _ if mask.continuous(attr) => draw(lo, hi),
            _ => 0.0,
        };
        theta[attr] = if mask.continuous(attr) { value } else { 0.0 };
    }

    let report = validate(&theta);
    if !report.ok {
        return Err(SceneError::InconsistentRange {
            field: report.violations[0].field.clone(),
            message: report.to_string(),
        });
    }
    Ok(theta)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationWire {
    binary: BTreeMap<String, bool>,
    continuous: BTreeMap<String, f64>,
    multiclass: BTreeMap<String, u8>,
    schema_version: u64,
}

impl From<&SceneAttributes> for AnnotationWire {
    fn from(theta: &SceneAttributes) -> Self {
        AnnotationWire {
            binary: BinaryAttr::ALL
                .into_iter()
                .map(|a| (a.name().to_string(), theta[a]))
                .collect(),
            continuous: ContinuousAttr::ALL
                .into_iter()
                .map(|a| (a.name().to_string(), theta[a]))
                .collect(),
            multiclass: MulticlassAttr::ALL
                .into_iter()
                .map(|a| (a.name().to_string(), theta[a]))
                .collect(),
            schema_version: SCHEMA_VERSION as u64,
        }
    }
}

impl TryFrom<AnnotationWire> for SceneAttributes {
    type Error = SceneError;

    fn try_from(wire: AnnotationWire) -> Result<Self, SceneError> {
        if wire.schema_version != SCHEMA_VERSION as u64 {
            return Err(SceneError::UnsupportedVersion(wire.schema_version));
        }
        let mut theta = SceneAttributes {
            binary: [false; NUM_BINARY],
            multiclass: [0; NUM_MULTICLASS],
            continuous: [0.0; NUM_CONTINUOUS],
        };
        take_group(&wire.binary, "binary", &BinaryAttr::ALL, |a| a.name(), |a, v| {
            theta[a] = v
        })?;
        take_group(
            &wire.multiclass,
            "multiclass",
            &MulticlassAttr::ALL,
            |a| a.name(),
            |a, v| theta[a] = v,
        )?;
        take_group(
            &wire.continuous,
            "continuous",
            &ContinuousAttr::ALL,
            |a| a.name(),
            |a, v| theta[a] = v,
        )?;
        Ok(theta)
    }
}

fn take_group<A: Copy, V: Copy>(
    map: &BTreeMap<String, V>,
    group: &str,
    attrs: &[A],
    name: impl Fn(A) -> &'static str,
    mut set: impl FnMut(A, V),
) -> Result<(), SceneError> {
    for &attr in attrs {
        match map.get(name(attr)) {
            Some(v) => set(attr, *v),
            None => {
                return Err(SceneError::Parse(format!(
                    "missing field `{group}.{}`",
                    name(attr)
                )))
            }
        }
    }
    if let Some(unknown) = map.keys().find(|k| !attrs.iter().any(|a| name(*a) == k.as_str())) {
        return Err(SceneError::Parse(format!("unknown field `{group}.{unknown}`")));
    }
    Ok(())
}

impl Serialize for SceneAttributes {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        AnnotationWire::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SceneAttributes {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // Version is checked before the field layout so a future schema gets
        // a version error rather than a confusing field error.
        let value = serde_json::Value::deserialize(deserializer)?;
        scene_from_value(value).map_err(serde::de::Error::custom)
    }
}

fn scene_from_value(value: serde_json::Value) -> Result<SceneAttributes, SceneError> {
    let version = value
        .get("schema_version")
        .ok_or_else(|| SceneError::Parse("missing field `schema_version`".to_string()))?;
    match version.as_u64() {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(SceneError::UnsupportedVersion(v)),
        None => {
            return Err(SceneError::Parse(format!(
                "schema_version must be an unsigned integer, got {version}"
            )))
        }
    }
    let wire: AnnotationWire =
        serde_json::from_value(value).map_err(|e| SceneError::Parse(e.to_string()))?;
    SceneAttributes::try_from(wire)
}

/// Canonical annotation JSON (keys sorted alphabetically at every level).
pub fn to_json(theta: &SceneAttributes) -> String {
    serde_json::to_string(&AnnotationWire::from(theta)).expect("annotation serialization")
}

pub fn from_json(text: &str) -> Result<SceneAttributes, SceneError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
    scene_from_value(value)
}

/// Attribute schema as exposed to annotation clients.
#[derive(Debug, Clone, Serialize)]
pub struct AttributeSchema {
    pub schema_version: u32,
    pub binary: Vec<SchemaEntry>,
    pub multiclass: Vec<SchemaEntry>,
    pub continuous: Vec<SchemaEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemaEntry {
    pub name: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gated_by: Option<&'static str>,
    /// True when the gate opens on the parent flag being false.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub gate_inverted: bool,
}

fn gate_fields(gate: Option<Gate>) -> (Option<&'static str>, bool) {
    match gate {
        Some(Gate::Set(p)) => (Some(p.name()), false),
        Some(Gate::Unset(p)) => (Some(p.name()), true),
        None => (None, false),
    }
}

pub fn schema() -> AttributeSchema {
    AttributeSchema {
        schema_version: SCHEMA_VERSION,
        binary: BinaryAttr::ALL
            .into_iter()
            .map(|a| {
                let (gated_by, gate_inverted) = gate_fields(a.gate());
                SchemaEntry {
                    name: a.name(),
                    min: None,
                    max: None,
                    gated_by,
                    gate_inverted,
                }
            })
            .collect(),
        multiclass: MulticlassAttr::ALL
            .into_iter()
            .map(|a| SchemaEntry {
                name: a.name(),
                min: Some(0.0),
                max: Some(MAX_LANES as f64),
                gated_by: None,
                gate_inverted: false,
            })
            .collect(),
        continuous: ContinuousAttr::ALL
            .into_iter()
            .map(|a| {
                let (lo, hi) = a.range();
                let (gated_by, gate_inverted) = gate_fields(a.gate());
                SchemaEntry {
                    name: a.name(),
                    min: Some(lo),
                    max: Some(hi),
                    gated_by,
                    gate_inverted,
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn everything_on() -> SceneAttributes {
        let mut theta = SceneAttributes { binary: [true; NUM_BINARY], ..Default::default() };
        theta[BinaryAttr::OneWay] = false;
        theta.multiclass = [2, 1];
        theta[ContinuousAttr::LeftSideRoadDistance] = 20.0;
        theta[ContinuousAttr::RightSideRoadDistance] = 25.0;
        theta[ContinuousAttr::LeftSideRoadWidth] = 7.0;
        theta[ContinuousAttr::RightSideRoadWidth] = 8.0;
        theta[ContinuousAttr::CrosswalkNearDistance] = 10.0;
        theta[ContinuousAttr::CrosswalkFarDistance] = 30.0;
        theta[ContinuousAttr::CurveRadius] = 300.0;
        theta[ContinuousAttr::EgoLateralOffset] = 0.4;
        theta
    }

    #[test]
    fn cardinalities() {
        assert_eq!(BinaryAttr::ALL.len(), 14);
        assert_eq!(MulticlassAttr::ALL.len(), 2);
        assert_eq!(ContinuousAttr::ALL.len(), 10);
        for (i, a) in BinaryAttr::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(BinaryAttr::from_name(a.name()), Some(*a));
        }
        for (i, a) in ContinuousAttr::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
        }
    }

    #[test]
    fn sampled_scene_is_valid() {
        let theta = sample(3, &SampleRanges::default()).unwrap();
        let report = validate(&theta);
        assert!(report.ok, "{report}");
        assert!(report.violations.is_empty());
    }

    #[test]
    fn negative_lane_width_is_reported() {
        let mut theta = SceneAttributes::default();
        theta[ContinuousAttr::LaneWidth] = -1.0;
        let report = validate(&theta);
        assert!(!report.ok);
        assert!(report.violations.iter().any(|v| v.field == "lane_width"));
    }

    #[test]
    fn t_junction_without_side_road_is_reported() {
        let mut theta = SceneAttributes::default();
        theta[BinaryAttr::MainRoadEndsAtT] = true;
        let report = validate(&theta);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "main_road_ends_at_T");
    }

    #[test]
    fn violations_sorted_by_field() {
        let mut theta = SceneAttributes::default();
        theta[ContinuousAttr::SidewalkWidth] = 9.0;
        theta[ContinuousAttr::LaneWidth] = 9.0;
        theta[BinaryAttr::MainRoadEndsAtT] = true;
        theta.multiclass = [7, 0];
        let fields: Vec<_> = validate(&theta)
            .violations
            .into_iter()
            .map(|v| v.field)
            .collect();
        let mut sorted = fields.clone();
        sorted.sort();
        assert_eq!(fields, sorted);
        assert_eq!(fields.len(), 4);
    }

    #[test]
    fn crosswalk_order_rule() {
        let mut theta = SceneAttributes::default();
        theta[BinaryAttr::CrosswalkNearExists] = true;
        theta[BinaryAttr::CrosswalkFarExists] = true;
        theta[ContinuousAttr::CrosswalkNearDistance] = 20.0;
        theta[ContinuousAttr::CrosswalkFarDistance] = 20.0;
        assert!(!validate(&theta).ok);
        theta[ContinuousAttr::CrosswalkFarDistance] = 20.5;
        assert!(validate(&theta).ok);
    }

    #[test]
    fn offset_limited_by_lane_width() {
        let mut theta = SceneAttributes::default();
        theta[ContinuousAttr::LaneWidth] = 3.0;
        theta[ContinuousAttr::EgoLateralOffset] = 1.6;
        let report = validate(&theta);
        assert_eq!(report.violations[0].field, "ego_lateral_offset");
    }

    #[test]
    fn inactive_values_not_range_checked() {
        let mut theta = SceneAttributes::default();
        theta[ContinuousAttr::CurveRadius] = 0.0;
        theta[ContinuousAttr::LeftSideRoadWidth] = 0.0;
        assert!(validate(&theta).ok);
    }

    #[test]
    fn mask_all_existence_flags() {
        let mask = active_mask(&everything_on()).unwrap();
        assert_eq!(mask, AttributeMask::all_active());
        assert_eq!(mask.count_active(), 26);
    }

    #[test]
    fn mask_left_side_road_gating() {
        let mut theta = everything_on();
        theta[BinaryAttr::LeftSideRoadExists] = false;
        let mask = active_mask(&theta).unwrap();
        assert!(!mask.continuous(ContinuousAttr::LeftSideRoadDistance));
        assert!(!mask.continuous(ContinuousAttr::LeftSideRoadWidth));
        assert!(!mask.binary(BinaryAttr::CrosswalkOnLeftSideRoad));
        assert!(mask.continuous(ContinuousAttr::RightSideRoadWidth));
    }

    #[test]
    fn mask_curve_gating() {
        let mut theta = everything_on();
        theta[BinaryAttr::MainRoadCurves] = false;
        let mask = active_mask(&theta).unwrap();
        assert!(!mask.continuous(ContinuousAttr::CurveRadius));
        assert!(!mask.binary(BinaryAttr::CurveDirectionLeft));
    }

    #[test]
    fn mask_delimiter_gated_on_two_way() {
        let mut theta = everything_on();
        theta[BinaryAttr::OneWay] = true;
        assert!(!active_mask(&theta).unwrap().binary(BinaryAttr::DelimiterExists));
    }

    #[test]
    fn mask_rejects_invalid_scene() {
        let mut theta = SceneAttributes::default();
        theta[ContinuousAttr::LaneWidth] = 0.5;
        assert!(matches!(active_mask(&theta), Err(SceneError::Invalid(_))));
    }

    #[test]
    fn mirror_moves_side_road() {
        let mut theta = SceneAttributes::default();
        theta[BinaryAttr::RightSideRoadExists] = true;
        theta[ContinuousAttr::RightSideRoadDistance] = 17.0;
        theta[ContinuousAttr::RightSideRoadWidth] = 6.0;
        theta[BinaryAttr::OneWay] = true;
        let m = mirror(&theta);
        assert!(m[BinaryAttr::LeftSideRoadExists]);
        assert!(!m[BinaryAttr::RightSideRoadExists]);
        assert_eq!(m[ContinuousAttr::LeftSideRoadDistance], 17.0);
        assert_eq!(m[ContinuousAttr::LeftSideRoadWidth], 6.0);
        assert_eq!(m[ContinuousAttr::RightSideRoadDistance], 0.0);
        assert!(m[BinaryAttr::OneWay]);
        assert_eq!(mirror(&m), theta);
    }

    #[test]
    fn mirror_flips_curve_only_when_curving() {
        let mut theta = everything_on();
        let m = mirror(&theta);
        assert!(!m[BinaryAttr::CurveDirectionLeft]);
        assert_eq!(m[ContinuousAttr::EgoLateralOffset], -0.4);
        theta[BinaryAttr::MainRoadCurves] = false;
        theta[BinaryAttr::CurveDirectionLeft] = false;
        assert!(!mirror(&theta)[BinaryAttr::CurveDirectionLeft]);
    }

    #[test]
    fn sample_is_deterministic() {
        let a = to_json(&sample(7, &SampleRanges::default()).unwrap());
        let b = to_json(&sample(7, &SampleRanges::default()).unwrap());
        assert_eq!(a, b);
        let c = to_json(&sample(8, &SampleRanges::default()).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn thousand_samples_validate() {
        for seed in 0..1000 {
            let theta = sample(seed, &SampleRanges::default()).unwrap();
            assert!(validate(&theta).ok, "seed {seed}");
            let mask = AttributeMask::from_flags(&theta.binary);
            for attr in ContinuousAttr::ALL {
                if !mask.continuous(attr) {
                    assert_eq!(theta[attr], 0.0);
                }
            }
            for attr in BinaryAttr::ALL {
                if !mask.binary(attr) {
                    assert!(!theta[attr], "seed {seed} {attr}");
                }
            }
        }
    }

    #[test]
    fn sample_respects_overrides() {
        let ranges = SampleRanges::all_flags_off()
            .with_lanes(MulticlassAttr::LanesLeft, 0, 0)
            .with_lanes(MulticlassAttr::LanesRight, 0, 0)
            .with_range(ContinuousAttr::LaneWidth, 3.5, 3.5);
        for seed in 0..20 {
            let theta = sample(seed, &ranges).unwrap();
            assert_eq!(theta.multiclass, [0, 0]);
            assert_eq!(theta[ContinuousAttr::LaneWidth], 3.5);
            assert_eq!(theta.binary, [false; NUM_BINARY]);
        }
    }

    #[test]
    fn sample_rejects_inverted_range() {
        let ranges = SampleRanges::default().with_range(ContinuousAttr::LaneWidth, 4.0, 3.0);
        assert!(matches!(
            sample(1, &ranges),
            Err(SceneError::InconsistentRange { .. })
        ));
        let ranges = SampleRanges::default().with_lanes(MulticlassAttr::LanesLeft, 3, 1);
        assert!(sample(1, &ranges).is_err());
    }

    #[test]
    fn forced_t_junction_gets_a_side_road() {
        let ranges = SampleRanges::all_flags_off().with_flag(BinaryAttr::MainRoadEndsAtT, true);
        let ranges = SampleRanges {
            flags: {
                let mut f = ranges.flags;
                f[BinaryAttr::LeftSideRoadExists.index()] = None;
                f
            },
            ..ranges
        };
        let theta = sample(5, &ranges).unwrap();
        assert!(theta[BinaryAttr::MainRoadEndsAtT]);
        assert!(theta[BinaryAttr::LeftSideRoadExists]);
    }

    #[test]
    fn json_round_trip_and_canonical_order() {
        let theta = sample(11, &SampleRanges::default()).unwrap();
        let text = to_json(&theta);
        assert_eq!(from_json(&text).unwrap(), theta);
        let keys: Vec<usize> = ["\"binary\"", "\"continuous\"", "\"multiclass\"", "\"schema_version\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(text.find("\"crosswalk_far_exists\"").unwrap() < text.find("\"one_way\"").unwrap());
    }

    #[test]
    fn json_missing_field_is_named() {
        let theta = SceneAttributes::default();
        let mut value: serde_json::Value = serde_json::from_str(&to_json(&theta)).unwrap();
        value["continuous"].as_object_mut().unwrap().remove("lane_width");
        let err = from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("lane_width"), "{err}");
    }

    #[test]
    fn json_wrong_version() {
        let theta = SceneAttributes::default();
        let text = to_json(&theta).replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(from_json(&text), Err(SceneError::UnsupportedVersion(2))));
    }

    #[test]
    fn json_wrong_type() {
        let theta = SceneAttributes::default();
        let text = to_json(&theta).replace("\"one_way\":false", "\"one_way\":\"no\"");
        assert!(matches!(from_json(&text), Err(SceneError::Parse(_))));
    }

    #[test]
    fn schema_counts_and_gating() {
        let s = schema();
        assert_eq!((s.binary.len(), s.multiclass.len(), s.continuous.len()), (14, 2, 10));
        let radius = s.continuous.iter().find(|e| e.name == "curve_radius").unwrap();
        assert_eq!(radius.gated_by, Some("main_road_curves"));
        assert_eq!((radius.min, radius.max), (Some(20.0), Some(1000.0)));
    }
}
