//! Flow-guided feature propagation: the previous frame's pixel embeddings
//! are warped onto the current frame and added back with a per-pixel
//! cosine-similarity weight.

use crate::error::{invalid, Result};
use crate::grid::{resize_flow, warp, FeatureGrid, FlowField, ScalarGrid};

/// Norms below this make the cosine undefined; such pixels get weight 0.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    pub fused: FeatureGrid,
    pub weight: ScalarGrid,
}

/// `w(p) = exp(cos(current(p), warped(p)))`, or 0 where either vector is
/// (numerically) zero.
pub fn similarity_weight(current: &FeatureGrid, warped: &FeatureGrid) -> Result<ScalarGrid> {
    current.expect_same_shape(warped)?;
    let (h, w) = current.dims();
    let d = current.channels();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut out = Vec::with_capacity(h * w);
    for p in 0..h * w {
        current.pixel_into(p, &mut a);
        warped.pixel_into(p, &mut b);
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(&b) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        let (na, nb) = (na.sqrt(), nb.sqrt());
        if na < MIN_NORM || nb < MIN_NORM {
            out.push(0.0);
        } else {
            out.push((dot / (na * nb)).clamp(-1.0, 1.0).exp());
        }
    }
    ScalarGrid::new(h, w, out)
}

/// Warps `previous` along `flow` (resized to the feature resolution if
/// needed) and fuses it into `current`.
pub fn propagate(
    current: &FeatureGrid,
    previous: &FeatureGrid,
    flow: &FlowField,
) -> Result<FusedFeature> {
    current.expect_same_shape(previous)?;
    let (h, w) = current.dims();
    if flow.height() == 0 || flow.width() == 0 {
        return Err(invalid("empty flow field"));
    }
    let flow = resize_flow(flow, h, w)?;
    let warped = warp(previous, &flow)?;
    let weight = similarity_weight(current, &warped)?;
    let n = h * w;
    let mut data = current.data().to_vec();
    for c in 0..current.channels() {
        let plane = warped.plane(c);
        for p in 0..n {
            data[c * n + p] += weight.data()[p] * plane[p];
        }
    }
    Ok(FusedFeature {
        fused: FeatureGrid::new(h, w, current.channels(), data)?,
        weight,
    })
}

/// Applies [`propagate`] independently to each pyramid level.
pub fn propagate_levels(
    current: &[FeatureGrid],
    previous: &[FeatureGrid],
    flow: &FlowField,
) -> Result<Vec<FusedFeature>> {
    if current.len() != previous.len() {
        return Err(invalid(format!(
            "level count mismatch: {} vs {}",
            current.len(),
            previous.len()
        )));
    }
    current
        .iter()
        .zip(previous)
        .map(|(c, p)| propagate(c, p, flow))
        .collect()
}
