use super::{level_targets, GroundTruthObject, MatchResult, TargetConfig, MIN_PROB};
use crate::decoder::FramePrediction;
use crate::error::{invalid, Result};
use crate::grid::Heatmap;

/// Loss terms summed over levels; `total` is their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub focal: f64,
    pub size: f64,
    pub total: f64,
}

/// Penalty-reduced pixel-wise focal loss, summed over pixels (not
/// normalized). Pixels where the target equals 1 are positives.
pub fn focal_loss(pred: &Heatmap, target: &Heatmap, alpha: f64, beta: f64) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(invalid(format!(
            "focal loss dims {:?} vs {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let mut loss = 0.0;
    for (&p, &y) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(MIN_PROB, 1.0 - MIN_PROB);
        if y >= 1.0 {
            loss -= (1.0 - p).powf(alpha) * p.ln();
        } else {
            loss -= (1.0 - y).powf(beta) * p.powf(alpha) * (1.0 - p).ln();
        }
    }
    Ok(loss)
}

/// Cross-entropy over all queries (unmatched ones target no-object), focal
/// loss over matched center heatmaps normalized by the object count, and
/// mean absolute size error read at each object's center pixel.
pub fn compute_losses(
    matching: &MatchResult,
    preds: &[FramePrediction],
    gts: &[GroundTruthObject],
    frame_dims: (usize, usize),
    config: &TargetConfig,
) -> Result<LossBreakdown> {
    let targets = level_targets(preds, gts, frame_dims, config)?;
    if let Some(&(p, g)) = matching
        .pairs
        .iter()
        .find(|&&(p, g)| g >= gts.len() || preds.iter().any(|l| p >= l.num_queries()))
    {
        return Err(invalid(format!("match pair ({p}, {g}) out of range")));
    }
    let (mut ce, mut focal, mut size) = (0.0, 0.0, 0.0);
    for (pred, level_targets) in preds.iter().zip(&targets) {
        let n = pred.num_queries();
        if n == 0 {
            continue;
        }
        let no_object = pred.no_object_class();
        let mut level_ce = 0.0;
        for (i, dist) in pred.class_dist.iter().enumerate() {
            let class = matching
                .target_of(i)
                .map_or(no_object, |g| gts[g].class_id);
            level_ce -= dist[class].max(MIN_PROB).ln();
        }
        ce += level_ce / n as f64;

        if matching.pairs.is_empty() {
            continue;
        }
        let (h, w) = pred.dims();
        let mut level_focal = 0.0;
        let mut level_size = 0.0;
        for &(i, g) in &matching.pairs {
            level_focal += focal_loss(
                &pred.center[i],
                &level_targets[g],
                config.focal_alpha,
                config.focal_beta,
            )?;
            let obj = gts[g].at_resolution(frame_dims, (h, w));
            let px = obj.center.0.round().clamp(0.0, (w - 1) as f64) as usize;
            let py = obj.center.1.round().clamp(0.0, (h - 1) as f64) as usize;
            let true_w = gts[g].size.0 / frame_dims.1 as f64;
            let true_h = gts[g].size.1 / frame_dims.0 as f64;
            level_size += 0.5
                * ((pred.size[i].get(px, py, 0) - true_w).abs()
                    + (pred.size[i].get(px, py, 1) - true_h).abs());
        }
        let k = matching.pairs.len() as f64;
        focal += level_focal / k;
        size += level_size / k;
    }
    Ok(LossBreakdown {
        ce,
        focal,
        size,
        total: config.ce_weight * ce + config.focal_weight * focal + config.size_weight * size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarGrid;

    #[test]
    fn saturated_binary_prediction_has_tiny_focal_loss() {
        let target = ScalarGrid::new(2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let pred = ScalarGrid::new(
            2,
            3,
            target
                .data()
                .iter()
                .map(|v| v.clamp(1e-6, 1.0 - 1e-6))
                .collect(),
        )
        .unwrap();
        let l = focal_loss(&pred, &target, 2.0, 4.0).unwrap();
        // oracle: 2 positives at (1e-6)^2·(−ln(1−1e-6)) plus 4 negatives at the same value
        let per_pixel = (1e-6f64).powi(2) * -(1.0 - 1e-6f64).ln();
        assert!((l - 6.0 * per_pixel).abs() < 1e-24);
        assert!(l < 1e-4);
    }

    #[test]
    fn focal_penalty_reduction_near_peak() {
        let target = ScalarGrid::new(1, 2, vec![1.0, 0.9]).unwrap();
        let pred = ScalarGrid::new(1, 2, vec![0.5, 0.5]).unwrap();
        let l = focal_loss(&pred, &target, 2.0, 4.0).unwrap();
        let expected = 0.25 * 2f64.ln() + 0.1f64.powi(4) * 0.25 * 2f64.ln();
        assert!((l - expected).abs() < 1e-15);
    }

    #[test]
    fn focal_dims_checked() {
        let a = ScalarGrid::zeros(1, 2);
        let b = ScalarGrid::zeros(2, 1);
        assert!(focal_loss(&a, &b, 2.0, 4.0).is_err());
    }
}
