//! Evaluation metrics: attribute accuracy, F1 and MSE for the parametric
//! prediction, per-class IoU and accuracy for semantic grids, and per-image
//! IoU binned by the number of road participants in the image.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{GridError, GridSpec, SemanticClass, SemanticGrid};
use crate::render::render;
use crate::scene::{
    self, AttributeMask, BinaryAttr, ContinuousAttr, MulticlassAttr, SceneAttributes, SceneError,
};

/// Object counts at or above this value share the last occlusion bin.
pub const MAX_OBJECT_BIN: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {what} has {actual} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("frame {index}: {source}")]
    Scene {
        index: usize,
        #[source]
        source: SceneError,
    },
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), MetricsError> {
    if expected == actual {
        Ok(())
    } else {
        Err(MetricsError::LengthMismatch {
            what,
            expected,
            actual,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeScores {
    pub accu_bi: f64,
    pub accu_mc: f64,
    pub f1: f64,
    pub mse: f64,
}

/// Positive-class confusion counts for one binary attribute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl BinaryCounts {
    pub fn add(&mut self, pred: bool, gt: bool) {
        match (pred, gt) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// F1 of the positive class, or `None` when neither prediction nor
    /// ground truth is ever positive. Zero when precision + recall is zero.
    pub fn f1(&self) -> Option<f64> {
        if self.tp + self.fp + self.fn_ == 0 {
            return None;
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        Some(if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        })
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Attribute-level scores of decoded predictions against ground truth.
///
/// `masks[i]` marks the attributes that are meaningful for `gts[i]`;
/// inactive entries do not contribute. Accuracies and F1 are averaged over
/// attributes (each attribute's rate taken over its active samples); MSE is
/// pooled over every active continuous entry after dividing the error by the
/// attribute's range. An attribute group with no active entry scores 1 for
/// accuracy and F1 and 0 for MSE.
pub fn attribute_metrics(
    preds: &[SceneAttributes],
    gts: &[SceneAttributes],
    masks: &[AttributeMask],
) -> Result<AttributeScores, MetricsError> {
    check_len("predictions", gts.len(), preds.len())?;
    check_len("masks", gts.len(), masks.len())?;
    if gts.is_empty() {
        return Err(MetricsError::Empty);
    }

    let samples = || preds.iter().zip(gts).zip(masks);

    let accu_bi = mean(BinaryAttr::ALL.into_iter().filter_map(|attr| {
        let i = attr.index();
        mean(
            samples()
                .filter(|(_, m)| m.active_binary[i])
                .map(|((p, g), _)| (p.binary[i] == g.binary[i]) as u8 as f64),
        )
    }))
    .unwrap_or(1.0);

    let accu_mc = mean(MulticlassAttr::ALL.into_iter().filter_map(|attr| {
        let i = attr.index();
        mean(
            samples()
                .filter(|(_, m)| m.active_multiclass[i])
                .map(|((p, g), _)| (p.multiclass[i] == g.multiclass[i]) as u8 as f64),
        )
    }))
    .unwrap_or(1.0);

    let f1 = mean(BinaryAttr::ALL.into_iter().filter_map(|attr| {
        let i = attr.index();
        let mut counts = BinaryCounts::default();
        for ((p, g), _) in samples().filter(|(_, m)| m.active_binary[i]) {
            counts.add(p.binary[i], g.binary[i]);
        }
        counts.f1()
    }))
    .unwrap_or(1.0);

    let mse = mean(samples().flat_map(|((p, g), m)| {
        ContinuousAttr::ALL
            .into_iter()
            .filter(|attr| m.active_continuous[attr.index()])
            .map(|attr| {
                let (lo, hi) = attr.range();
                let e = (p[attr] - g[attr]) / (hi - lo);
                e * e
            })
    }))
    .unwrap_or(0.0);

    Ok(AttributeScores {
        accu_bi,
        accu_mc,
        f1,
        mse,
    })
}

/// Dataset-level confusion counts, indexed `[gt][pred]` by class index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 6]; 6],
}

impl ConfusionMatrix {
    /// Accumulate one prediction/ground-truth pair. Cells whose ground truth
    /// is `Unknown` are skipped.
    pub fn add(&mut self, pred: &SemanticGrid, gt: &SemanticGrid) -> Result<(), GridError> {
        gt.check_shape(pred)?;
        for (p, g) in pred.labels().iter().zip(gt.labels()) {
            if *g != SemanticClass::Unknown {
                self.counts[g.index()][p.index()] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(mut self, other: &ConfusionMatrix) -> ConfusionMatrix {
        for g in 0..6 {
            for p in 0..6 {
                self.counts[g][p] += other.counts[g][p];
            }
        }
        self
    }

    pub fn score(&self, class: SemanticClass) -> ClassScore {
        let k = class.index();
        let tp = self.counts[k][k];
        let gt_total: u64 = self.counts[k].iter().sum();
        let pred_total: u64 = (0..6).map(|g| self.counts[g][k]).sum();
        let union = gt_total + pred_total - tp;
        ClassScore {
            iou: (union > 0).then(|| tp as f64 / union as f64),
            accuracy: (gt_total > 0).then(|| tp as f64 / gt_total as f64),
        }
    }
}

/// IoU and accuracy (recall) of one class; `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub iou: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Per-class scores over the five supervised classes, keyed by class name.
pub type SegmentationScores = BTreeMap<String, ClassScore>;

/// Aggregate per-class IoU and accuracy over a dataset of grids.
pub fn segmentation_metrics(
    preds: &[SemanticGrid],
    gts: &[SemanticGrid],
) -> Result<SegmentationScores, MetricsError> {
    check_len("predictions", gts.len(), preds.len())?;
    let matrix = preds
        .par_iter()
        .zip(gts)
        .map(|(p, g)| {
            let mut m = ConfusionMatrix::default();
            m.add(p, g).map(|_| m)
        })
        .try_reduce(ConfusionMatrix::default, |a, b| Ok(a.merge(&b)))?;
    Ok(SemanticClass::SUPERVISED
        .into_iter()
        .map(|class| (class.name().to_string(), matrix.score(class)))
        .collect())
}

/// Mean IoU over the layout classes (road, sidewalk, lane boundary,
/// crosswalk) present in the ground truth of a single image. `None` when
/// none of them is present.
pub fn per_image_iou(pred: &SemanticGrid, gt: &SemanticGrid) -> Result<Option<f64>, GridError> {
    let mut matrix = ConfusionMatrix::default();
    matrix.add(pred, gt)?;
    Ok(mean(SemanticClass::LAYOUT.into_iter().filter_map(|class| {
        let present = matrix.counts[class.index()].iter().sum::<u64>() > 0;
        present.then(|| matrix.score(class).iou).flatten()
    })))
}

/// Mean per-image IoU by number of road participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionTable {
    /// Bin `k` holds images with `k` objects; bin 8 holds 8 or more. Empty
    /// bins are absent.
    pub bins: BTreeMap<usize, f64>,
    pub images: BTreeMap<usize, usize>,
    /// Mean over all images.
    pub average: Option<f64>,
}

impl OcclusionTable {
    /// Two-line text table with columns `0 .. 8` and `Avg`; empty bins show `-`.
    pub fn to_table_string(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut header: Vec<String> = (0..=MAX_OBJECT_BIN).map(|k| k.to_string()).collect();
        header.push("Avg".into());
        let mut row: Vec<String> = (0..=MAX_OBJECT_BIN)
            .map(|k| fmt(self.bins.get(&k).copied()))
            .collect();
        row.push(fmt(self.average));
        let width = row.iter().chain(&header).map(String::len).max().unwrap_or(1);
        let line = |cells: &[String]| {
            cells
                .iter()
                .map(|c| format!("{c:>width$}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!("{}\n{}", line(&header), line(&row))
    }
}

pub fn occlusion_binned_iou(
    per_image_iou: &[f64],
    object_counts: &[usize],
) -> Result<OcclusionTable, MetricsError> {
    check_len("object counts", per_image_iou.len(), object_counts.len())?;
    let mut sums = BTreeMap::new();
    let mut images = BTreeMap::new();
    for (&iou, &count) in per_image_iou.iter().zip(object_counts) {
        let bin = count.min(MAX_OBJECT_BIN);
        *sums.entry(bin).or_insert(0.0) += iou;
        *images.entry(bin).or_insert(0usize) += 1;
    }
    let bins = sums
        .iter()
        .map(|(&k, &s)| (k, s / images[&k] as f64))
        .collect();
    Ok(OcclusionTable {
        bins,
        images,
        average: mean(per_image_iou.iter().copied()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub accu_bi: f64,
    pub accu_mc: f64,
    pub f1: f64,
    pub mse: f64,
    /// Top-view IoU and accuracy of the rendered prediction against the
    /// rendered ground truth.
    pub per_class: SegmentationScores,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub occlusion_table: Option<OcclusionTable>,
}

/// Score predicted scenes against ground-truth scenes: attribute metrics on
/// the parameters, segmentation metrics on their top-view renderings, and,
/// when object counts are supplied, the occlusion table.
pub fn evaluate_scenes(
    preds: &[SceneAttributes],
    gts: &[SceneAttributes],
    object_counts: Option<&[usize]>,
    spec: &GridSpec,
) -> Result<EvalReport, MetricsError> {
    check_len("predictions", gts.len(), preds.len())?;
    if let Some(counts) = object_counts {
        check_len("object counts", gts.len(), counts.len())?;
    }
    let masks = gts
        .iter()
        .enumerate()
        .map(|(index, g)| scene::active_mask(g).map_err(|source| MetricsError::Scene { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = attribute_metrics(preds, gts, &masks)?;

    let render_all = |scenes: &[SceneAttributes]| {
        scenes
            .par_iter()
            .enumerate()
            .map(|(index, s)| render(s, spec).map_err(|source| MetricsError::Scene { index, source }))
            .collect::<Result<Vec<_>, _>>()
    };
    let pred_grids = render_all(preds)?;
    let gt_grids = render_all(gts)?;
    let per_class = segmentation_metrics(&pred_grids, &gt_grids)?;

    let occlusion_table = match object_counts {
        Some(counts) => {
            let mut ious = Vec::new();
            let mut kept = Vec::new();
            for ((p, g), &count) in pred_grids.iter().zip(&gt_grids).zip(counts) {
                if let Some(iou) = per_image_iou(p, g)? {
                    ious.push(iou);
                    kept.push(count);
                }
            }
            Some(occlusion_binned_iou(&ious, &kept)?)
        }
        None => None,
    };

    Ok(EvalReport {
        frames: gts.len(),
        accu_bi: scores.accu_bi,
        accu_mc: scores.accu_mc,
        f1: scores.f1,
        mse: scores.mse,
        per_class,
        occlusion_table,
    })
}
