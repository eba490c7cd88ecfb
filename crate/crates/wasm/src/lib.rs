//! Browser bindings for three small demos: warping a Gaussian heatmap along
//! a flow vector, exploring the heatmap association cost, and simulating
//! plus tracking a scene. The plain functions are usable natively; the
//! `#[wasm_bindgen]` wrappers only convert errors to strings.

use pixtrack::grid::{warp, FlowField};
use pixtrack::pipeline::{track_scene, truth_sequence};
use pixtrack::metrics::{evaluate_sequence, DEFAULT_IOU_THRESHOLD};
use pixtrack::propagation::similarity_weight;
use pixtrack::simulator::{generate, MotionModel, SceneConfig};
use pixtrack::targets::render_gaussian_at;
use pixtrack::tracker::{heatmap_cost, AssociationCost, TrackerConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// RGBA image of a Gaussian (red) and its warp along a constant flow
/// (green), plus the mean similarity weight between the two.
pub fn warp_blob(
    width: usize,
    height: usize,
    center: (f64, f64),
    sigma: f64,
    flow: (f64, f64),
) -> Result<(Vec<u8>, f64)> {
    let blob = render_gaussian_at(center, sigma, 1.0, height, width).map_err(err)?;
    let grid = blob.clone().into_feature();
    let warped = warp(&grid, &FlowField::constant(height, width, flow.0, flow.1)).map_err(err)?;
    let weight = similarity_weight(&grid, &warped).map_err(err)?;
    let mean_weight = weight.sum() / weight.len() as f64;
    let mut rgba = Vec::with_capacity(width * height * 4);
    for (a, b) in blob.data().iter().zip(warped.data()) {
        rgba.extend_from_slice(&[(a * 255.0).round() as u8, (b * 255.0).round() as u8, 0, 255]);
    }
    Ok((rgba, mean_weight))
}

/// Association cost between two Gaussian heatmaps and whether the tracker
/// would accept the pair under its default gate.
pub fn blob_cost(
    width: usize,
    height: usize,
    a: (f64, f64, f64),
    b: (f64, f64, f64),
) -> Result<serde_json::Value> {
    let ma = render_gaussian_at((a.0, a.1), a.2, 1.0, height, width).map_err(err)?;
    let mb = render_gaussian_at((b.0, b.1), b.2, 1.0, height, width).map_err(err)?;
    let cost = heatmap_cost(&ma, &mb).map_err(err)?;
    let gate = TrackerConfig::default().match_threshold;
    Ok(json!({ "cost": cost, "gate": gate, "matched": cost < gate }))
}

/// Simulates a scene, tracks it and returns per-frame boxes with metrics.
pub fn simulate_and_track_json(
    seed: u64,
    objects: usize,
    frames: usize,
    noise: f64,
    crossing: bool,
    center_cost: bool,
) -> Result<serde_json::Value> {
    let scene = SceneConfig {
        num_objects: objects,
        frames,
        heatmap_noise_std: noise,
        motion: if crossing {
            MotionModel::CrossingPairs
        } else {
            MotionModel::ConstantVelocity
        },
        seed,
        ..SceneConfig::default()
    };
    let truth = generate(&scene).map_err(err)?;
    let tracker = TrackerConfig {
        cost: if center_cost {
            AssociationCost::CenterDistance
        } else {
            AssociationCost::Heatmap
        },
        ..TrackerConfig::default()
    };
    let out = track_scene(&truth, &tracker).map_err(err)?;
    let m = evaluate_sequence(&truth_sequence(&truth, "demo", &out), DEFAULT_IOU_THRESHOLD)
        .map_err(err)?;
    let boxes = |it: Vec<(u64, pixtrack::tracker::BBox)>| -> Vec<serde_json::Value> {
        it.into_iter()
            .map(|(id, b)| json!([id, b.left(), b.top(), b.w, b.h]))
            .collect()
    };
    let tracks: Vec<_> = out
        .iter()
        .map(|f| boxes(f.iter().map(|t| (t.id, t.bbox)).collect()))
        .collect();
    let truth_boxes: Vec<_> = truth
        .frames
        .iter()
        .map(|f| boxes(f.iter().filter(|s| s.visible).map(|s| (s.gt.track_id, s.bbox())).collect()))
        .collect();
    let (h, w) = scene.frame_dims();
    Ok(json!({
        "width": w,
        "height": h,
        "tracks": tracks,
        "truth": truth_boxes,
        "metrics": {
            "mota": m.mota, "idf1": m.idf1, "idsw": m.idsw(),
            "fp": m.fp(), "fn": m.fn_(),
        },
    }))
}

#[wasm_bindgen]
pub struct WarpResult {
    rgba: Vec<u8>,
    weight: f64,
}

#[wasm_bindgen]
impl WarpResult {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn weight(&self) -> f64 {
        self.weight
    }
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn gaussian_warp(
    width: usize,
    height: usize,
    cx: f64,
    cy: f64,
    sigma: f64,
    dx: f64,
    dy: f64,
) -> std::result::Result<WarpResult, JsError> {
    let (rgba, weight) = warp_blob(width, height, (cx, cy), sigma, (dx, dy)).map_err(|e| JsError::new(&e))?;
    Ok(WarpResult { rgba, weight })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn association_cost(
    width: usize,
    height: usize,
    ax: f64,
    ay: f64,
    a_sigma: f64,
    bx: f64,
    by: f64,
    b_sigma: f64,
) -> std::result::Result<String, JsError> {
    blob_cost(width, height, (ax, ay, a_sigma), (bx, by, b_sigma))
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_and_track(
    seed: u64,
    objects: usize,
    frames: usize,
    noise: f64,
    crossing: bool,
    center_cost: bool,
) -> std::result::Result<String, JsError> {
    simulate_and_track_json(seed, objects, frames, noise, crossing, center_cost)
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}
