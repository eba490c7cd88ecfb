use nalgebra::DMatrix;

use super::attention::{flatten, AttentionMask};
use super::params::DecoderParams;
use super::FramePrediction;
use crate::error::{invalid, Result};
use crate::grid::{FeatureGrid, Heatmap, ScalarGrid};

// Keeps sigmoid outputs strictly inside (0,1) once f64 saturates.
const PROB_EPS: f64 = 1e-12;

fn sigmoid(v: f64) -> f64 {
    (1.0 / (1.0 + (-v).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) fn softmax(row: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = row.clone().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Turns query features into per-query class probabilities, center heatmaps
/// `c[i,h,w] = σ(P̄[h,w]·E_ctr[i])` and size maps
/// `s[i,h,w,j] = σ(P̄[h,w]·E_sz[i,·,j])`.
pub fn predict_heads(
    x: &DMatrix<f64>,
    fused: &FeatureGrid,
    params: &DecoderParams,
    level: usize,
) -> Result<FramePrediction> {
    let d = fused.channels();
    if x.ncols() != d {
        return Err(invalid(format!(
            "query width {} does not match {d} feature channels",
            x.ncols()
        )));
    }
    if params.center_head.output_dim() != d || params.size_head.output_dim() != 2 * d {
        return Err(invalid(format!(
            "head widths {}/{} do not match {d} feature channels",
            params.center_head.output_dim(),
            params.size_head.output_dim()
        )));
    }
    let (h, w) = fused.dims();
    let cls = params.class_head.forward(x);
    let ctr = params.center_head.forward(x);
    let sz = params.size_head.forward(x);
    let flat = flatten(fused);

    let center_logits = &flat * ctr.transpose();
    let size_w = &flat * sz.columns(0, d).transpose();
    let size_h = &flat * sz.columns(d, d).transpose();

    let n = x.nrows();
    let mut center = Vec::with_capacity(n);
    let mut size = Vec::with_capacity(n);
    for i in 0..n {
        let c: Vec<f64> = center_logits.column(i).iter().map(|&v| sigmoid(v)).collect();
        center.push(ScalarGrid::new(h, w, c)?);
        let mut s: Vec<f64> = size_w.column(i).iter().map(|&v| sigmoid(v)).collect();
        s.extend(size_h.column(i).iter().map(|&v| sigmoid(v)));
        size.push(FeatureGrid::new(h, w, 2, s)?);
    }
    let class_dist = cls
        .row_iter()
        .map(|r| softmax(r.iter().copied()))
        .collect();
    Ok(FramePrediction {
        level,
        class_dist,
        center,
        size,
    })
}

/// Entry `(i, p)` is 0 when `c[i](p) > threshold`, the sentinel otherwise.
pub fn update_mask(centers: &[Heatmap], threshold: f64) -> AttentionMask {
    let pixels = centers.first().map_or(0, Heatmap::len);
    let allowed = centers
        .iter()
        .flat_map(|c| c.data().iter().map(move |&v| v > threshold))
        .collect();
    AttentionMask::from_allowed(centers.len(), pixels, allowed).expect("heatmaps share dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hot_pixel_mask() {
        let mut c = ScalarGrid::filled(2, 2, 0.2);
        c.set(1, 0, 0.7);
        let m = update_mask(&[c], 0.5);
        assert_eq!(m.entry(0, 1), 0.0);
        for p in [0, 2, 3] {
            assert_eq!(m.entry(0, p), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn threshold_is_strict() {
        let m = update_mask(&[ScalarGrid::filled(3, 3, 0.5)], 0.5);
        assert!(m.row_blocked(0));
    }

    #[test]
    fn sigmoid_stays_open() {
        assert!(sigmoid(800.0) < 1.0);
        assert!(sigmoid(-800.0) > 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
