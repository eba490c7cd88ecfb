//! Synthetic scenes with exact ground truth.
//!
//! Objects move along horizontal lanes so that trajectories are smooth and
//! identities are unambiguous unless a scenario deliberately makes them
//! meet. [`generate`] fixes every trajectory; [`observe`] renders one
//! frame's noisy detections, feature maps and ground-truth flow.

mod observe;

pub use observe::{
    detection_set, object_features, observe, observe_detections, Observation, ObservedDetection,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::grid::FlowField;
use crate::targets::{gaussian_sigma, GroundTruthObject, TargetConfig};
use crate::tracker::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionModel {
    /// Constant horizontal speed, reflecting off the frame borders.
    ConstantVelocity,
    /// Horizontal constant velocity plus a vertical sine wave.
    Sinusoidal,
    /// Objects in pairs that share a lane, move towards each other and
    /// overlap once mid-sequence; the second of each pair is hidden while
    /// they overlap. An odd last object moves at constant velocity.
    CrossingPairs,
}

/// `len` frames starting at 0-based frame `start` during which `object` is
/// hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    pub object: usize,
    pub start: usize,
    pub len: usize,
}

impl Occlusion {
    pub fn contains(&self, object: usize, frame: usize) -> bool {
        object == self.object && frame >= self.start && frame < self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub num_objects: usize,
    pub frames: usize,
    pub motion: MotionModel,
    pub occlusions: Vec<Occlusion>,
    /// Hidden frames per crossing pair, centered on the crossing.
    pub crossing_occlusion: usize,
    /// Vertical offset between the two members of a crossing pair.
    pub crossing_offset: f64,
    /// Range of horizontal speeds in pixels per frame.
    pub speed: (f64, f64),
    /// Range of box widths; heights are `aspect · width`.
    pub object_width: (f64, f64),
    pub aspect: f64,
    /// Range of per-object heatmap peak values.
    pub amplitude: (f64, f64),
    pub heatmap_noise_std: f64,
    pub dropout: f64,
    /// Expected number of spurious detections per frame.
    pub clutter_rate: f64,
    /// Range of spurious detection peak values.
    pub clutter_score: (f64, f64),
    pub num_classes: usize,
    pub feature_channels: usize,
    pub targets: TargetConfig,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 192,
            width: 256,
            num_objects: 10,
            frames: 200,
            motion: MotionModel::ConstantVelocity,
            occlusions: Vec::new(),
            crossing_occlusion: 5,
            crossing_offset: 2.0,
            speed: (0.5, 1.2),
            object_width: (12.0, 16.0),
            aspect: 2.0,
            amplitude: (1.0, 1.0),
            heatmap_noise_std: 0.0,
            dropout: 0.0,
            clutter_rate: 0.0,
            clutter_score: (0.3, 0.85),
            num_classes: 1,
            feature_channels: 32,
            targets: TargetConfig::default(),
            seed: 0,
        }
    }
}

fn valid_range(r: (f64, f64), lo: f64, hi: f64) -> bool {
    r.0.is_finite() && r.1.is_finite() && lo <= r.0 && r.0 <= r.1 && r.1 <= hi
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 {
            return Err(invalid(format!(
                "frame {}x{} smaller than 16x16",
                self.width, self.height
            )));
        }
        if self.frames == 0 || self.num_classes == 0 || self.feature_channels == 0 {
            return Err(invalid("frames, classes and feature channels must be at least 1"));
        }
        for (name, p) in [("dropout", self.dropout)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} {p} outside [0,1]")));
            }
        }
        if !(self.heatmap_noise_std >= 0.0 && self.heatmap_noise_std.is_finite()) {
            return Err(invalid("noise std must be finite and non-negative"));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return Err(invalid("clutter rate must be finite and non-negative"));
        }
        if !valid_range(self.amplitude, 0.0, 1.0) || !valid_range(self.clutter_score, 0.0, 1.0) {
            return Err(invalid("amplitude and clutter score ranges must lie in [0,1]"));
        }
        if !valid_range(self.speed, 0.0, f64::MAX) {
            return Err(invalid("speed range must be ordered and non-negative"));
        }
        let max_h = self.object_width.1 * self.aspect;
        if !valid_range(self.object_width, 1.0, self.width as f64 / 4.0)
            || self.aspect.is_nan() || self.aspect <= 0.0
            || max_h > self.height as f64 / 4.0
        {
            return Err(invalid("object sizes must fit comfortably in the frame"));
        }
        if !(self.crossing_offset.is_finite() && self.crossing_offset.abs() <= max_h / 4.0) {
            return Err(invalid("crossing offset must be small relative to the box height"));
        }
        if let Some(o) = self.occlusions.iter().find(|o| o.object >= self.num_objects) {
            return Err(invalid(format!("occlusion refers to missing object {}", o.object)));
        }
        Ok(())
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInfo {
    pub track_id: u64,
    pub class_id: usize,
    /// `(width, height)` in pixels.
    pub size: (f64, f64),
    pub amplitude: f64,
    pub sigma: f64,
    /// Unit vector splatted into the feature maps.
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub gt: GroundTruthObject,
    pub visible: bool,
}

impl ObjectState {
    pub fn bbox(&self) -> BBox {
        BBox {
            cx: self.gt.center.0,
            cy: self.gt.center.1,
            w: self.gt.size.0,
            h: self.gt.size.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub config: SceneConfig,
    pub objects: Vec<ObjectInfo>,
    /// `frames[t][k]`: state of object `k` in 0-based frame `t`.
    pub frames: Vec<Vec<ObjectState>>,
}

fn uniform(rng: &mut impl Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..r.1)
    } else {
        r.0
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const EMBEDDING_STREAM: u64 = 1 << 40;

/// Size ratio between the larger and smaller member of a crossing pair.
const PAIR_RATIO: (f64, f64) = (1.15, 1.25);

/// Whether pixel `(x, y)` has its center inside `b`.
pub(crate) fn pixel_in_box(b: &BBox, x: usize, y: usize) -> bool {
    let (x, y) = (x as f64, y as f64);
    x >= b.left() && x < b.left() + b.w && y >= b.top() && y < b.top() + b.h
}

impl SceneTruth {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, t: usize) -> &[ObjectState] {
        &self.frames[t]
    }

    /// Backward flow for frame `t`: inside each visible object's box it
    /// points to where that pixel was in frame `t − 1`; zero elsewhere and
    /// everywhere in the first frame. Later objects overwrite earlier ones.
    pub fn flow(&self, t: usize) -> Result<FlowField> {
        let (h, w) = self.config.frame_dims();
        if t >= self.frames.len() {
            return Err(invalid(format!("frame {t} out of range")));
        }
        let mut flow = FlowField::zeros(h, w);
        if t == 0 {
            return Ok(flow);
        }
        for (k, state) in self.frames[t].iter().enumerate() {
            if !state.visible {
                continue;
            }
            let prev = self.frames[t - 1][k].gt.center;
            let (dx, dy) = (prev.0 - state.gt.center.0, prev.1 - state.gt.center.1);
            let b = state.bbox();
            let x0 = b.left().max(0.0).floor() as usize;
            let y0 = b.top().max(0.0).floor() as usize;
            let x1 = ((b.left() + b.w).ceil().max(0.0) as usize).min(w);
            let y1 = ((b.top() + b.h).ceil().max(0.0) as usize).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    if pixel_in_box(&b, x, y) {
                        flow.set(x, y, dx, dy);
                    }
                }
            }
        }
        Ok(flow)
    }

    /// Maximal runs of frames `[start, end)` in which the boxes of objects
    /// `a` and `b` overlap with IoU above `threshold`.
    pub fn overlap_intervals(&self, a: usize, b: usize, threshold: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (t, frame) in self.frames.iter().enumerate() {
            let over = frame[a].bbox().iou(&frame[b].bbox()) > threshold;
            match (over, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    out.push((s, t));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.frames.len()));
        }
        out
    }
}

struct Lanes {
    margin: f64,
    spacing: f64,
}

impl Lanes {
    fn new(count: usize, height: f64, margin: f64) -> Self {
        Self {
            margin,
            spacing: (height - 2.0 * margin) / count.max(1) as f64,
        }
    }

    fn y(&self, lane: usize) -> f64 {
        self.margin + (lane as f64 + 0.5) * self.spacing
    }
}

/// Walks `x` by `v` per frame, reflecting off `[lo, hi]`.
fn bounce_path(x0: f64, v: f64, lo: f64, hi: f64, frames: usize) -> Vec<f64> {
    let mut xs = Vec::with_capacity(frames);
    let (mut x, mut v) = (x0, v);
    for _ in 0..frames {
        xs.push(x);
        x += v;
        if x < lo {
            x = 2.0 * lo - x;
            v = -v;
        } else if x > hi {
            x = 2.0 * hi - x;
            v = -v;
        }
    }
    xs
}

/// Builds the full trajectories of a scene. Deterministic in the config.
pub fn generate(config: &SceneConfig) -> Result<SceneTruth> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 0);
    let n = config.num_objects;
    let (hf, wf) = (config.height as f64, config.width as f64);
    let frames = config.frames;

    let mut sizes: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let w = uniform(&mut rng, config.object_width);
            (w, w * config.aspect)
        })
        .collect();
    let max_h = config.object_width.1 * config.aspect;
    let mut paths: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n);
    let mut occlusions = config.occlusions.clone();

    match config.motion {
        MotionModel::ConstantVelocity | MotionModel::Sinusoidal => {
            let wave = config.motion == MotionModel::Sinusoidal;
            let amp_max = if wave { 4.0 } else { 0.0 };
            let lanes = Lanes::new(n, hf, max_h / 2.0 + amp_max);
            for (k, &(w, _)) in sizes.iter().enumerate() {
                let (lo, hi) = (w / 2.0, wf - w / 2.0);
                let x0 = uniform(&mut rng, (lo, hi));
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let v = sign * uniform(&mut rng, config.speed);
                let (amp, omega, phase) = if wave {
                    (
                        uniform(&mut rng, (2.0, amp_max)),
                        uniform(&mut rng, (0.05, 0.15)),
                        uniform(&mut rng, (0.0, std::f64::consts::TAU)),
                    )
                } else {
                    (0.0, 0.0, 0.0)
                };
                let y = lanes.y(k);
                let xs = bounce_path(x0, v, lo, hi, frames);
                paths.push(
                    xs.into_iter()
                        .enumerate()
                        .map(|(t, x)| (x, y + amp * (omega * t as f64 + phase).sin()))
                        .collect(),
                );
            }
        }
        MotionModel::CrossingPairs => {
            let pairs = n / 2;
            let lane_count = pairs + n % 2;
            let off = config.crossing_offset;
            let lanes = Lanes::new(lane_count, hf, PAIR_RATIO.1 * max_h / 2.0 + off.abs());
            let tc = (frames as f64 - 1.0) / 2.0;
            for p in 0..pairs {
                let (a, b) = (2 * p, 2 * p + 1);
                // distinct sizes within a pair, so their heatmaps differ
                let ratio = uniform(&mut rng, PAIR_RATIO);
                let (small, large) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                sizes[large] = (sizes[small].0 * ratio, sizes[small].1 * ratio);
                let wmax = sizes[a].0.max(sizes[b].0);
                let xc = wf / 2.0 + uniform(&mut rng, (-wf / 16.0, wf / 16.0));
                let room = (xc - wmax / 2.0).min(wf - xc - wmax / 2.0);
                let limit = if tc > 0.0 { room / tc } else { f64::MAX };
                let v = uniform(&mut rng, config.speed).min(limit);
                let y = lanes.y(p);
                paths.push((0..frames).map(|t| (xc + v * (t as f64 - tc), y)).collect());
                paths.push(
                    (0..frames)
                        .map(|t| (xc - v * (t as f64 - tc), y + off))
                        .collect(),
                );
                if config.crossing_occlusion > 0 {
                    let k = config.crossing_occlusion;
                    let start = (tc - k as f64 / 2.0).ceil().max(0.0) as usize;
                    let o = Occlusion {
                        object: b,
                        start,
                        len: k,
                    };
                    if !occlusions.contains(&o) {
                        occlusions.push(o);
                    }
                }
            }
            if n % 2 == 1 {
                let w = sizes[n - 1].0;
                let (lo, hi) = (w / 2.0, wf - w / 2.0);
                let x0 = uniform(&mut rng, (lo, hi));
                let v = uniform(&mut rng, config.speed);
                let y = lanes.y(pairs);
                paths.push(
                    bounce_path(x0, v, lo, hi, frames)
                        .into_iter()
                        .map(|x| (x, y))
                        .collect(),
                );
            }
        }
    }

    let objects: Vec<ObjectInfo> = sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| {
            let mut erng = stream_rng(config.seed, EMBEDDING_STREAM + k as u64);
            let mut e: Vec<f64> = (0..config.feature_channels)
                .map(|_| StandardNormal.sample(&mut erng))
                .collect();
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            e.iter_mut().for_each(|v| *v /= norm);
            ObjectInfo {
                track_id: k as u64 + 1,
                class_id: k % config.num_classes,
                size,
                amplitude: uniform(&mut rng, config.amplitude),
                sigma: gaussian_sigma(size.0, size.1, &config.targets),
                embedding: e,
            }
        })
        .collect();

    let truth_frames = (0..frames)
        .map(|t| {
            objects
                .iter()
                .enumerate()
                .map(|(k, info)| ObjectState {
                    gt: GroundTruthObject {
                        center: paths[k][t],
                        size: info.size,
                        class_id: info.class_id,
                        track_id: info.track_id,
                    },
                    visible: !occlusions.iter().any(|o| o.contains(k, t)),
                })
                .collect()
        })
        .collect();

    let truth = SceneTruth {
        config: SceneConfig {
            occlusions,
            ..config.clone()
        },
        objects,
        frames: truth_frames,
    };
    if config.motion == MotionModel::CrossingPairs {
        for p in 0..n / 2 {
            let runs = truth.overlap_intervals(2 * p, 2 * p + 1, 0.5);
            assert_eq!(runs.len(), 1, "crossing pair {p} overlaps in {runs:?}");
        }
    }
    Ok(truth)
}
