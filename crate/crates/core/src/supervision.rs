//! Training targets derived from a parametric annotation, and the forward
//! losses for the parametric, top-view and perspective heads.
//!
//! Continuous attributes are supervised as 100-bin distributions: a Gaussian
//! of fixed width centered on the true value, sampled at the bin centers and
//! normalized. All functions here are pure and independent of any trainer.

use serde::{Deserialize, Serialize};

use crate::grid::{GridError, SemanticClass, SemanticGrid, NUM_CLASSES};
use crate::scene::{
    self, AttributeMask, BinaryAttr, ContinuousAttr, MulticlassAttr, SceneAttributes, SceneError,
    LANE_CLASSES, NUM_BINARY, NUM_CONTINUOUS, NUM_MULTICLASS,
};

pub const NUM_BINS: usize = 100;
/// Default Gaussian width in units of bin width.
pub const DEFAULT_SIGMA_BINS: f64 = 1.5;
/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SupervisionError {
    #[error("empty bin range [{lo}, {hi}]")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("invalid sigma {0}")]
    InvalidSigma(f64),
    #[error("distribution sums to {sum}, not 1")]
    Unnormalized { sum: f64 },
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no labeled cells to supervise")]
    NothingToSupervise,
    #[error("non-finite loss input {name}={value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("negative loss weight {name}={value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftBinDistribution {
    pub probs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl SoftBinDistribution {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.probs.len() as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        bin_center(self.lo, self.hi, k)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

fn bin_center(lo: f64, hi: f64, k: usize) -> f64 {
    lo + (k as f64 + 0.5) * (hi - lo) / NUM_BINS as f64
}

/// Encode `value` as a Gaussian-smoothed one-hot over 100 bins spanning
/// `[lo, hi]`. `sigma_bins == 0` gives a hard one-hot.
pub fn soft_bin_encode(
    value: f64,
    lo: f64,
    hi: f64,
    sigma_bins: f64,
) -> Result<SoftBinDistribution, SupervisionError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(SupervisionError::EmptyRange { lo, hi });
    }
    if !(sigma_bins >= 0.0) || !sigma_bins.is_finite() {
        return Err(SupervisionError::InvalidSigma(sigma_bins));
    }
    let value = value.clamp(lo, hi);
    let mut probs = vec![0.0; NUM_BINS];
    if sigma_bins == 0.0 {
        let k = ((NUM_BINS as f64 * (value - lo) / (hi - lo)).floor() as usize).min(NUM_BINS - 1);
        probs[k] = 1.0;
    } else {
        let sigma = sigma_bins * (hi - lo) / NUM_BINS as f64;
        for (k, p) in probs.iter_mut().enumerate() {
            let d = bin_center(lo, hi, k) - value;
            *p = (-d * d / (2.0 * sigma * sigma)).exp();
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            // Sigma so small that every bin underflows; fall back to the nearest bin.
            let k = ((NUM_BINS as f64 * (value - lo) / (hi - lo)).floor() as usize)
                .min(NUM_BINS - 1);
            probs[k] = 1.0;
        } else {
            probs.iter_mut().for_each(|p| *p /= total);
        }
    }
    Ok(SoftBinDistribution { probs, lo, hi })
}

/// Expected value under the distribution.
pub fn soft_bin_decode(dist: &SoftBinDistribution) -> Result<f64, SupervisionError> {
    if dist.probs.len() != NUM_BINS {
        return Err(SupervisionError::ShapeMismatch {
            what: "soft-bin distribution",
            expected: NUM_BINS,
            actual: dist.probs.len(),
        });
    }
    let sum: f64 = dist.probs.iter().sum();
    if !((sum - 1.0).abs() <= 1e-6) || dist.probs.iter().any(|p| *p < 0.0) {
        return Err(SupervisionError::Unnormalized { sum });
    }
    Ok(dist
        .probs
        .iter()
        .enumerate()
        .map(|(k, p)| p * dist.center(k))
        .sum())
}

/// Supervision for the parametric head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTargets {
    pub binary: [u8; NUM_BINARY],
    pub multiclass: [u8; NUM_MULTICLASS],
    /// One distribution per continuous attribute; inactive ones are present
    /// but flagged off in `mask`.
    pub regression: Vec<SoftBinDistribution>,
    pub mask: AttributeMask,
}

/// Encode a scene's attributes with each continuous value spread over its
/// schema range.
pub fn encode_targets(
    theta: &SceneAttributes,
    sigma_bins: f64,
) -> Result<AttributeTargets, SupervisionError> {
    let mask = scene::active_mask(theta)?;
    let mut binary = [0u8; NUM_BINARY];
    for attr in BinaryAttr::ALL {
        binary[attr.index()] = theta[attr] as u8;
    }
    let regression = ContinuousAttr::ALL
        .into_iter()
        .map(|attr| {
            let (lo, hi) = attr.range();
            soft_bin_encode(theta[attr], lo, hi, sigma_bins)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AttributeTargets {
        binary,
        multiclass: theta.multiclass,
        regression,
        mask,
    })
}

/// Decode targets (or a prediction in target form) back to attribute values.
/// Inactive continuous entries decode to 0.
pub fn decode_targets(targets: &AttributeTargets) -> Result<SceneAttributes, SupervisionError> {
    let mut theta = SceneAttributes {
        binary: [false; NUM_BINARY],
        multiclass: targets.multiclass,
        continuous: [0.0; NUM_CONTINUOUS],
    };
    for attr in BinaryAttr::ALL {
        theta[attr] = targets.binary[attr.index()] != 0;
    }
    for attr in ContinuousAttr::ALL {
        if targets.mask.continuous(attr) {
            theta[attr] = soft_bin_decode(&targets.regression[attr.index()])?;
        }
    }
    Ok(theta)
}

/// Output of the parametric head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributePrediction {
    /// Probability of each flag being set.
    pub binary: Vec<f64>,
    /// Distribution over 0..=5 lanes for each lane count.
    pub multiclass: Vec<Vec<f64>>,
    /// 100-bin distribution per continuous attribute.
    pub regression: Vec<Vec<f64>>,
}

impl AttributePrediction {
    /// The prediction that reproduces `targets` exactly.
    pub fn from_targets(targets: &AttributeTargets) -> Self {
        AttributePrediction {
            binary: targets.binary.iter().map(|b| *b as f64).collect(),
            multiclass: targets
                .multiclass
                .iter()
                .map(|&k| {
                    let mut p = vec![0.0; LANE_CLASSES];
                    p[k as usize] = 1.0;
                    p
                })
                .collect(),
            regression: targets.regression.iter().map(|d| d.probs.clone()).collect(),
        }
    }

    fn check_shape(&self) -> Result<(), SupervisionError> {
        let check = |what, expected, actual| {
            if expected == actual {
                Ok(())
            } else {
                Err(SupervisionError::ShapeMismatch {
                    what,
                    expected,
                    actual,
                })
            }
        };
        check("binary predictions", NUM_BINARY, self.binary.len())?;
        check("multiclass predictions", NUM_MULTICLASS, self.multiclass.len())?;
        for dist in &self.multiclass {
            check("lane-count distribution", LANE_CLASSES, dist.len())?;
        }
        check("regression predictions", NUM_CONTINUOUS, self.regression.len())?;
        for dist in &self.regression {
            check("regression distribution", NUM_BINS, dist.len())?;
        }
        Ok(())
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Parametric loss: mean binary cross-entropy over active flags, plus mean
/// cross-entropy over active lane counts, plus mean L1 distance between
/// predicted and target bin distributions over active continuous attributes.
pub fn tpp_loss(
    pred: &AttributePrediction,
    target: &AttributeTargets,
) -> Result<f64, SupervisionError> {
    pred.check_shape()?;
    if target.regression.len() != NUM_CONTINUOUS {
        return Err(SupervisionError::ShapeMismatch {
            what: "regression targets",
            expected: NUM_CONTINUOUS,
            actual: target.regression.len(),
        });
    }

    let (mut bce, mut n_bin) = (0.0, 0);
    for attr in BinaryAttr::ALL {
        let i = attr.index();
        if !target.mask.active_binary[i] {
            continue;
        }
        let p = clamp_prob(pred.binary[i]);
        bce += if target.binary[i] != 0 {
            -p.ln()
        } else {
            -(1.0 - p).ln()
        };
        n_bin += 1;
    }

    let (mut ce, mut n_mc) = (0.0, 0);
    for attr in MulticlassAttr::ALL {
        let i = attr.index();
        if !target.mask.active_multiclass[i] {
            continue;
        }
        let k = target.multiclass[i] as usize;
        if k >= LANE_CLASSES {
            return Err(SupervisionError::ShapeMismatch {
                what: "lane-count target",
                expected: LANE_CLASSES,
                actual: k,
            });
        }
        ce += -clamp_prob(pred.multiclass[i][k]).ln();
        n_mc += 1;
    }

    let (mut l1, mut n_reg) = (0.0, 0);
    for attr in ContinuousAttr::ALL {
        let i = attr.index();
        if !target.mask.active_continuous[i] {
            continue;
        }
        let target_probs = &target.regression[i].probs;
        if target_probs.len() != NUM_BINS {
            return Err(SupervisionError::ShapeMismatch {
                what: "regression target distribution",
                expected: NUM_BINS,
                actual: target_probs.len(),
            });
        }
        l1 += pred.regression[i]
            .iter()
            .zip(target_probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>();
        n_reg += 1;
    }

    Ok(mean(bce, n_bin) + mean(ce, n_mc) + mean(l1, n_reg))
}

/// Per-cell class probabilities for a grid prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, one distribution over the five supervised classes per cell.
    pub probs: Vec<[f64; NUM_CLASSES]>,
}

impl ClassProbabilities {
    pub fn uniform(rows: usize, cols: usize) -> Self {
        ClassProbabilities {
            rows,
            cols,
            probs: vec![[1.0 / NUM_CLASSES as f64; NUM_CLASSES]; rows * cols],
        }
    }

    /// One-hot probabilities of a label grid. `Unknown` cells become uniform.
    pub fn one_hot(grid: &SemanticGrid) -> Self {
        let probs = grid
            .labels()
            .iter()
            .map(|c| {
                if *c == SemanticClass::Unknown {
                    [1.0 / NUM_CLASSES as f64; NUM_CLASSES]
                } else {
                    let mut p = [0.0; NUM_CLASSES];
                    p[c.index()] = 1.0;
                    p
                }
            })
            .collect();
        ClassProbabilities {
            rows: grid.rows(),
            cols: grid.cols(),
            probs,
        }
    }
}

/// Mean per-cell cross-entropy against a label grid. Serves both the
/// top-view loss (against the rendered grid) and the perspective loss
/// (against the back-projected grid). `Unknown` cells are skipped.
pub fn grid_ce_loss(pred: &ClassProbabilities, gt: &SemanticGrid) -> Result<f64, SupervisionError> {
    if (pred.rows, pred.cols) != gt.shape() || pred.probs.len() != gt.labels().len() {
        return Err(GridError::ShapeMismatch {
            expected: gt.shape(),
            actual: (pred.rows, pred.cols),
        }
        .into());
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, label) in pred.probs.iter().zip(gt.labels()) {
        if *label == SemanticClass::Unknown {
            continue;
        }
        total += -clamp_prob(p[label.index()]).ln();
        n += 1;
    }
    if n == 0 {
        return Err(SupervisionError::NothingToSupervise);
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 1.0,
            gamma: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub tpp: f64,
    pub ts: f64,
    pub ps: f64,
    pub total: f64,
    pub weights: LossWeights,
}

/// Weighted sum of the three module losses.
pub fn full_loss(
    tpp: f64,
    ts: f64,
    ps: f64,
    weights: LossWeights,
) -> Result<LossBreakdown, SupervisionError> {
    for (name, value) in [
        ("tpp", tpp),
        ("ts", ts),
        ("ps", ps),
        ("lambda", weights.lambda),
        ("gamma", weights.gamma),
        ("beta", weights.beta),
    ] {
        if !value.is_finite() {
            return Err(SupervisionError::NonFinite { name, value });
        }
    }
    for (name, value) in [
        ("lambda", weights.lambda),
        ("gamma", weights.gamma),
        ("beta", weights.beta),
    ] {
        if value < 0.0 {
            return Err(SupervisionError::NegativeWeight { name, value });
        }
    }
    Ok(LossBreakdown {
        tpp,
        ts,
        ps,
        total: weights.lambda * tpp + weights.gamma * ts + weights.beta * ps,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{sample, SampleRanges};

    #[test]
    fn hard_one_hot_at_low_edge() {
        let d = soft_bin_encode(0.0, 0.0, 60.0, 0.0).unwrap();
        assert_eq!(d.probs[0], 1.0);
        assert_eq!(d.probs.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn hard_one_hot_at_high_edge_clamps() {
        let d = soft_bin_encode(60.0, 0.0, 60.0, 0.0).unwrap();
        assert_eq!(d.probs[99], 1.0);
        let d = soft_bin_encode(75.0, 0.0, 60.0, 0.0).unwrap();
        assert_eq!(d.probs[99], 1.0);
    }

    #[test]
    fn symmetric_peak_at_bin_edge() {
        let d = soft_bin_encode(30.0, 0.0, 60.0, 1.5).unwrap();
        assert!((d.probs[49] - d.probs[50]).abs() < 1e-12);
        let max = d.probs.iter().cloned().fold(0.0, f64::max);
        assert!((d.probs[49] - max).abs() < 1e-12);
        assert!(d.probs[48] < d.probs[49]);
    }

    #[test]
    fn encode_normalized() {
        for (v, lo, hi, s) in [(3.3, 2.5, 5.0, 1.5), (0.0, -2.5, 2.5, 4.0), (999.0, 20.0, 1000.0, 0.3)] {
            let d = soft_bin_encode(v, lo, hi, s).unwrap();
            assert_eq!(d.probs.len(), 100);
            assert!((d.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn encode_rejects_empty_range() {
        assert!(soft_bin_encode(1.0, 2.0, 2.0, 1.0).is_err());
        assert!(soft_bin_encode(1.0, 3.0, 2.0, 1.0).is_err());
        assert!(soft_bin_encode(1.0, 0.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn decode_one_hot() {
        let mut probs = vec![0.0; 100];
        probs[50] = 1.0;
        let d = SoftBinDistribution {
            probs,
            lo: 0.0,
            hi: 60.0,
        };
        assert!((soft_bin_decode(&d).unwrap() - 30.3).abs() < 1e-12);
    }

    #[test]
    fn decode_uniform() {
        let d = SoftBinDistribution {
            probs: vec![0.01; 100],
            lo: 0.0,
            hi: 60.0,
        };
        assert!((soft_bin_decode(&d).unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn decode_rejects_unnormalized() {
        let d = SoftBinDistribution {
            probs: vec![0.02; 100],
            lo: 0.0,
            hi: 60.0,
        };
        assert!(matches!(
            soft_bin_decode(&d),
            Err(SupervisionError::Unnormalized { .. })
        ));
    }

    #[test]
    fn targets_copy_lane_counts_and_gate() {
        let theta = SceneAttributes { multiclass: [2, 0], ..Default::default() };
        let targets = encode_targets(&theta, DEFAULT_SIGMA_BINS).unwrap();
        assert_eq!(targets.multiclass[0], 2);
        assert!(!targets.mask.continuous(ContinuousAttr::LeftSideRoadDistance));
        assert_eq!(targets.regression.len(), 10);
    }

    #[test]
    fn targets_round_trip_active_values() {
        for seed in 0..50 {
            let theta = sample(seed, &SampleRanges::default()).unwrap();
            let targets = encode_targets(&theta, DEFAULT_SIGMA_BINS).unwrap();
            for attr in ContinuousAttr::ALL {
                if !targets.mask.continuous(attr) {
                    continue;
                }
                let dist = &targets.regression[attr.index()];
                let (lo, hi) = attr.range();
                let v = theta[attr];
                let bin = dist.bin_width();
                // Gaussian truncation at the range ends biases the mean; the
                // round trip is exact to half a bin only in the interior.
                if v < lo + 3.0 * bin || v > hi - 3.0 * bin {
                    continue;
                }
                let decoded = soft_bin_decode(dist).unwrap();
                assert!((decoded - v).abs() <= 0.5 * bin, "{attr}: {v} vs {decoded}");
            }
        }
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let theta = sample(4, &SampleRanges::default()).unwrap();
        let targets = encode_targets(&theta, DEFAULT_SIGMA_BINS).unwrap();
        let pred = AttributePrediction::from_targets(&targets);
        let loss = tpp_loss(&pred, &targets).unwrap();
        assert!((0.0..=1e-5).contains(&loss), "{loss}");
    }

    #[test]
    fn half_probability_costs_ln2() {
        let theta = SceneAttributes::default();
        let mut targets = encode_targets(&theta, DEFAULT_SIGMA_BINS).unwrap();
        targets.mask = AttributeMask::none_active();
        targets.mask.active_binary[BinaryAttr::OneWay.index()] = true;
        targets.binary[BinaryAttr::OneWay.index()] = 1;
        let mut pred = AttributePrediction::from_targets(&targets);
        pred.binary[BinaryAttr::OneWay.index()] = 0.5;
        let loss = tpp_loss(&pred, &targets).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn all_inactive_loss_is_zero() {
        let theta = SceneAttributes::default();
        let mut targets = encode_targets(&theta, DEFAULT_SIGMA_BINS).unwrap();
        targets.mask = AttributeMask::none_active();
        let pred = AttributePrediction {
            binary: vec![0.3; 14],
            multiclass: vec![vec![1.0 / 6.0; 6]; 2],
            regression: vec![vec![0.01; 100]; 10],
        };
        assert_eq!(tpp_loss(&pred, &targets).unwrap(), 0.0);
    }

    #[test]
    fn tpp_shape_mismatch() {
        let targets = encode_targets(&SceneAttributes::default(), 1.5).unwrap();
        let mut pred = AttributePrediction::from_targets(&targets);
        pred.regression[3].pop();
        assert!(matches!(
            tpp_loss(&pred, &targets),
            Err(SupervisionError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn grid_ce_examples() {
        let gt = SemanticGrid::from_fn(8, 6, |r, c| SemanticClass::SUPERVISED[(r + c) % 5]);
        let perfect = ClassProbabilities::one_hot(&gt);
        let loss = grid_ce_loss(&perfect, &gt).unwrap();
        assert!(loss <= 1e-5);
        let uniform = ClassProbabilities::uniform(8, 6);
        let loss = grid_ce_loss(&uniform, &gt).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn grid_ce_all_unknown_is_error() {
        let gt = SemanticGrid::filled(4, 4, SemanticClass::Unknown);
        assert_eq!(
            grid_ce_loss(&ClassProbabilities::uniform(4, 4), &gt),
            Err(SupervisionError::NothingToSupervise)
        );
    }

    #[test]
    fn grid_ce_shape_mismatch() {
        let gt = SemanticGrid::filled(4, 4, SemanticClass::Road);
        assert!(grid_ce_loss(&ClassProbabilities::uniform(4, 5), &gt).is_err());
    }

    #[test]
    fn full_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(full_loss(1.0, 2.0, 3.0, w).unwrap().total, 6.0);
        let w = LossWeights {
            lambda: 2.5,
            gamma: 0.0,
            beta: 0.0,
        };
        assert_eq!(full_loss(1.2, 2.0, 3.0, w).unwrap().total, 2.5 * 1.2);
        let w = LossWeights {
            lambda: 0.0,
            gamma: 0.0,
            beta: 0.0,
        };
        assert_eq!(full_loss(1.0, 2.0, 3.0, w).unwrap().total, 0.0);
        assert!(full_loss(f64::NAN, 0.0, 0.0, LossWeights::default()).is_err());
        assert!(full_loss(0.0, f64::INFINITY, 0.0, LossWeights::default()).is_err());
    }
}
