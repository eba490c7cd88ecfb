//! Ground-truth heatmap targets, the pixel-wise matching cost between
//! predicted and true objects, bipartite matching, and the loss suite.

mod gaussian;
mod losses;

pub use gaussian::{gaussian_sigma, render_gaussian, render_gaussian_at, GaussianKernel};
pub use losses::{compute_losses, focal_loss, LossBreakdown};

use crate::assignment::{self, CostMatrix};
use crate::decoder::FramePrediction;
use crate::error::{invalid, Result};
use crate::grid::Heatmap;

/// Smallest probability fed to a logarithm.
pub const MIN_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    /// Box center in frame pixels.
    pub center: (f64, f64),
    /// Box `(width, height)` in frame pixels.
    pub size: (f64, f64),
    pub class_id: usize,
    pub track_id: u64,
}

impl GroundTruthObject {
    /// The object expressed in the coordinates of a `level_dims` grid that
    /// covers a `frame_dims` frame (both `(height, width)`).
    pub fn at_resolution(&self, frame_dims: (usize, usize), level_dims: (usize, usize)) -> Self {
        let sx = level_dims.1 as f64 / frame_dims.1 as f64;
        let sy = level_dims.0 as f64 / frame_dims.0 as f64;
        Self {
            center: (
                (self.center.0 + 0.5) * sx - 0.5,
                (self.center.1 + 0.5) * sy - 0.5,
            ),
            size: (self.size.0 * sx, self.size.1 * sy),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetConfig {
    /// Gaussian radius is `min(w, h) / radius_divisor`; σ is radius / 3.
    pub radius_divisor: f64,
    pub min_sigma: f64,
    pub ce_weight: f64,
    pub focal_weight: f64,
    pub size_weight: f64,
    pub focal_alpha: f64,
    pub focal_beta: f64,
    /// Divide the heatmap L1 term of the matching cost by the pixel count.
    pub normalize_heatmap_l1: bool,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            radius_divisor: 2.0,
            min_sigma: 1.0,
            ce_weight: 0.1,
            focal_weight: 0.5,
            size_weight: 1.0,
            focal_alpha: 2.0,
            focal_beta: 4.0,
            normalize_heatmap_l1: true,
        }
    }
}

/// What a prediction is matched against.
#[derive(Debug, Clone, Copy)]
pub enum MatchTarget<'a> {
    NoObject,
    Object { class_id: usize, heatmap: &'a Heatmap },
}

/// Matching cost of one prediction: `−log p̂(c)` plus, for a real object,
/// the L1 distance between predicted and target heatmaps.
pub fn pixelwise_cost(
    class_dist: &[f64],
    heatmap: &Heatmap,
    target: MatchTarget<'_>,
    config: &TargetConfig,
) -> Result<f64> {
    if class_dist.is_empty() {
        return Err(invalid("empty class distribution"));
    }
    let no_object = class_dist.len() - 1;
    match target {
        MatchTarget::NoObject => Ok(-class_dist[no_object].max(MIN_PROB).ln()),
        MatchTarget::Object {
            class_id,
            heatmap: truth,
        } => {
            if class_id >= no_object {
                return Err(invalid(format!(
                    "class {class_id} is not an object class (no-object is {no_object})"
                )));
            }
            if truth.dims() != heatmap.dims() {
                return Err(invalid(format!(
                    "heatmap dims {:?} vs target {:?}",
                    heatmap.dims(),
                    truth.dims()
                )));
            }
            let mut l1: f64 = heatmap
                .data()
                .iter()
                .zip(truth.data())
                .map(|(a, b)| (a - b).abs())
                .sum();
            if config.normalize_heatmap_l1 {
                l1 /= heatmap.len() as f64;
            }
            Ok(-class_dist[class_id].max(MIN_PROB).ln() + l1)
        }
    }
}

/// Renders every ground-truth object at each prediction level's resolution.
pub(crate) fn level_targets(
    preds: &[FramePrediction],
    gts: &[GroundTruthObject],
    frame_dims: (usize, usize),
    config: &TargetConfig,
) -> Result<Vec<Vec<Heatmap>>> {
    preds
        .iter()
        .map(|p| {
            let (h, w) = p.dims();
            gts.iter()
                .map(|g| render_gaussian(&g.at_resolution(frame_dims, (h, w)), h, w, config))
                .collect()
        })
        .collect()
}

/// `N × K` matching costs summed over all prediction levels.
pub fn cost_matrix(
    preds: &[FramePrediction],
    gts: &[GroundTruthObject],
    frame_dims: (usize, usize),
    config: &TargetConfig,
) -> Result<CostMatrix> {
    let n = preds.first().map_or(0, FramePrediction::num_queries);
    if preds.iter().any(|p| p.num_queries() != n) {
        return Err(invalid("prediction levels disagree on query count"));
    }
    let targets = level_targets(preds, gts, frame_dims, config)?;
    let mut data = vec![0.0; n * gts.len()];
    for (pred, level_targets) in preds.iter().zip(&targets) {
        for i in 0..n {
            for (k, (gt, truth)) in gts.iter().zip(level_targets).enumerate() {
                let target = MatchTarget::Object {
                    class_id: gt.class_id,
                    heatmap: truth,
                };
                data[i * gts.len() + k] +=
                    pixelwise_cost(&pred.class_dist[i], &pred.center[i], target, config)?;
            }
        }
    }
    CostMatrix::new(n, gts.len(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(prediction, ground truth)` pairs sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    /// Predictions assigned to no-object.
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_targets: Vec<usize>,
    pub total_cost: f64,
}

impl MatchResult {
    pub fn target_of(&self, prediction: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|(p, _)| *p == prediction)
            .map(|&(_, g)| g)
    }
}

/// Minimum-cost injection between predictions (rows) and ground truths
/// (columns).
pub fn hungarian_match(cost: &CostMatrix) -> Result<MatchResult> {
    let pairs = assignment::solve(cost)?;
    let total_cost = assignment::total_cost(cost, &pairs);
    let mut row_used = vec![false; cost.rows()];
    let mut col_used = vec![false; cost.cols()];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Ok(MatchResult {
        unmatched_predictions: (0..cost.rows()).filter(|&r| !row_used[r]).collect(),
        unmatched_targets: (0..cost.cols()).filter(|&c| !col_used[c]).collect(),
        pairs,
        total_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarGrid;

    #[test]
    fn perfect_prediction_costs_nothing() {
        let truth = ScalarGrid::new(2, 2, vec![1.0, 0.5, 0.0, 0.25]).unwrap();
        let target = MatchTarget::Object {
            class_id: 0,
            heatmap: &truth,
        };
        let c = pixelwise_cost(&[1.0, 0.0], &truth, target, &TargetConfig::default()).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn no_object_drops_heatmap_term() {
        let map = ScalarGrid::filled(3, 3, 0.9);
        let c = pixelwise_cost(&[0.5, 0.5], &map, MatchTarget::NoObject, &TargetConfig::default())
            .unwrap();
        assert!((c - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let map = ScalarGrid::zeros(1, 1);
        let c = pixelwise_cost(&[1.0, 0.0], &map, MatchTarget::NoObject, &TargetConfig::default())
            .unwrap();
        assert!((c - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn unnormalized_l1_option() {
        let a = ScalarGrid::filled(2, 2, 0.5);
        let b = ScalarGrid::zeros(2, 2);
        let target = MatchTarget::Object {
            class_id: 0,
            heatmap: &b,
        };
        let mut cfg = TargetConfig::default();
        assert!((pixelwise_cost(&[1.0, 0.0], &a, target, &cfg).unwrap() - 0.5).abs() < 1e-15);
        cfg.normalize_heatmap_l1 = false;
        assert!((pixelwise_cost(&[1.0, 0.0], &a, target, &cfg).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_no_object_class_and_dim_mismatch() {
        let a = ScalarGrid::zeros(2, 2);
        let b = ScalarGrid::zeros(3, 2);
        let cfg = TargetConfig::default();
        let bad_class = MatchTarget::Object {
            class_id: 1,
            heatmap: &a,
        };
        assert!(pixelwise_cost(&[0.5, 0.5], &a, bad_class, &cfg).is_err());
        let bad_dims = MatchTarget::Object {
            class_id: 0,
            heatmap: &b,
        };
        assert!(pixelwise_cost(&[0.5, 0.5], &a, bad_dims, &cfg).is_err());
    }

    #[test]
    fn match_result_bookkeeping() {
        let m = CostMatrix::from_rows(&[vec![3.0], vec![1.0], vec![2.0]]).unwrap();
        let r = hungarian_match(&m).unwrap();
        assert_eq!(r.pairs, vec![(1, 0)]);
        assert_eq!(r.unmatched_predictions, vec![0, 2]);
        assert!(r.unmatched_targets.is_empty());
        assert_eq!(r.total_cost, 1.0);
        assert_eq!(r.target_of(1), Some(0));
        assert_eq!(r.target_of(0), None);
    }

    #[test]
    fn resolution_mapping() {
        let g = GroundTruthObject {
            center: (15.5, 7.5),
            size: (8.0, 16.0),
            class_id: 0,
            track_id: 3,
        };
        let l = g.at_resolution((32, 64), (16, 32));
        assert_eq!(l.center, (7.5, 3.5));
        assert_eq!(l.size, (4.0, 8.0));
    }
}
