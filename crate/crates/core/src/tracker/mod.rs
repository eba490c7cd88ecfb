//! Online pixel-wise association.
//!
//! Every frame: (A) each track's Kalman state is advanced and its stored
//! heatmap translated along the forecast center motion; (B) forecasts and
//! detections of the same class are matched with the Hungarian method on
//! heatmap L1 cost, pairs above the match gate are rejected, and unmatched
//! confident detections start new tracks; (C) tracks missing for too many
//! frames are dropped.

mod distribution;
mod kalman;

pub use distribution::{heatmap_cost, PixelDistribution, Support, HEATMAP_COST_EPS};
pub use kalman::{KalmanConfig, KalmanState, StateCovariance, StateVector};

use std::collections::BTreeSet;

use nalgebra::SVector;

use crate::assignment::{self, CostMatrix};
use crate::decoder::FramePrediction;
use crate::error::{invalid, Result};
use crate::grid::Heatmap;

/// Axis-aligned box by center and size, in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn from_tlwh(left: f64, top: f64, w: f64, h: f64) -> Self {
        Self {
            cx: left + w / 2.0,
            cy: top + h / 2.0,
            w,
            h,
        }
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.left() + self.w).min(other.left() + other.w) - self.left().max(other.left());
        let iy = (self.top() + self.h).min(other.top() + other.h) - self.top().max(other.top());
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }

    /// Shrinks the box so it lies inside a `width × height` frame.
    pub fn clamped(&self, width: f64, height: f64) -> BBox {
        if self.left() >= 0.0
            && self.top() >= 0.0
            && self.left() + self.w <= width
            && self.top() + self.h <= height
        {
            return *self;
        }
        let l = self.left().clamp(0.0, width);
        let t = self.top().clamp(0.0, height);
        let r = (self.left() + self.w).clamp(0.0, width);
        let b = (self.top() + self.h).clamp(0.0, height);
        BBox::from_tlwh(l, t, r - l, b - t)
    }

    pub(crate) fn to_vector(self) -> SVector<f64, 4> {
        SVector::<f64, 4>::new(self.cx, self.cy, self.w, self.h)
    }
}

/// One object observed in the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub bbox: BBox,
    /// Peak value of the center heatmap.
    pub score: f64,
    pub heatmap: PixelDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    /// `(height, width)` of the frame in pixels.
    pub frame_dims: (usize, usize),
    /// `(height, width)` of the detection heatmaps.
    pub heatmap_dims: (usize, usize),
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn empty(frame_dims: (usize, usize), heatmap_dims: (usize, usize)) -> Self {
        Self {
            frame_dims,
            heatmap_dims,
            detections: Vec::new(),
        }
    }

    /// Heatmap pixels per frame pixel along `(x, y)`.
    pub fn scale(&self) -> (f64, f64) {
        heatmap_scale(self.frame_dims, self.heatmap_dims)
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

fn heatmap_scale(frame: (usize, usize), map: (usize, usize)) -> (f64, f64) {
    (map.1 as f64 / frame.1 as f64, map.0 as f64 / frame.0 as f64)
}

/// Minimum peak value for a query to become a detection.
pub const DEFAULT_MIN_SCORE: f64 = 0.05;

/// Converts decoded queries into detections. The no-object class is
/// skipped; the box center is the heatmap peak and its size is read from
/// the size map at that peak.
pub fn extract_detections(
    pred: &FramePrediction,
    frame_dims: (usize, usize),
    min_score: f64,
) -> Result<DetectionSet> {
    if frame_dims.0 == 0 || frame_dims.1 == 0 {
        return Err(invalid("frame dims must be positive"));
    }
    let heatmap_dims = pred.dims();
    let (sx, sy) = heatmap_scale(frame_dims, heatmap_dims);
    let (fh, fw) = (frame_dims.0 as f64, frame_dims.1 as f64);
    let no_object = pred.no_object_class();
    let mut detections = Vec::new();
    for (i, dist) in pred.class_dist.iter().enumerate() {
        let class_id = argmax_first(dist);
        if class_id == no_object {
            continue;
        }
        let Some((px, py, score)) = pred.center[i].argmax() else {
            continue;
        };
        if score < min_score {
            continue;
        }
        let w = pred.size[i].get(px, py, 0) * fw;
        let h = pred.size[i].get(px, py, 1) * fh;
        let bbox = BBox {
            cx: (px as f64 + 0.5) / sx - 0.5,
            cy: (py as f64 + 0.5) / sy - 0.5,
            w,
            h,
        }
        .clamped(fw, fh);
        detections.push(Detection {
            class_id,
            bbox,
            score,
            heatmap: PixelDistribution::new(pred.center[i].clone()),
        });
    }
    Ok(DetectionSet {
        frame_dims,
        heatmap_dims,
        detections,
    })
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Association cost used in step B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssociationCost {
    /// Normalized L1 distance between forecast and detected heatmaps.
    Heatmap,
    /// Center distance divided by the geometric mean side of the forecast
    /// box; a box-free baseline sharing the same gate.
    CenterDistance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Pairs with cost at or above this are rejected.
    pub match_threshold: f64,
    /// Unmatched detections must score above this to start a track.
    pub birth_threshold: f64,
    /// Tracks missed this many consecutive frames are removed.
    pub max_misses: u32,
    pub kalman: KalmanConfig,
    pub cost: AssociationCost,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            match_threshold: 0.65,
            birth_threshold: 0.80,
            max_misses: 30,
            kalman: KalmanConfig::default(),
            cost: AssociationCost::Heatmap,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.match_threshold) || !in_unit(self.birth_threshold) {
            return Err(invalid(format!(
                "thresholds must lie in (0,1): match {}, birth {}",
                self.match_threshold, self.birth_threshold
            )));
        }
        if self.max_misses == 0 {
            return Err(invalid("max_misses must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub class_id: usize,
    pub bbox: BBox,
    pub score: f64,
    /// Last observed heatmap.
    pub heatmap: PixelDistribution,
    /// Frame-pixel center at which `heatmap` was observed.
    pub heatmap_anchor: (f64, f64),
    /// Heatmap pixels per frame pixel.
    pub heatmap_scale: (f64, f64),
    pub kalman: KalmanState,
    pub misses: u32,
    pub age: u32,
    pub hits: u32,
}

/// Step-A output for one track.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub state: KalmanState,
    pub bbox: BBox,
    pub heatmap: PixelDistribution,
}

/// Constant-velocity forecast of a track; the stored heatmap is moved by
/// the displacement from where it was observed to the predicted center.
pub fn kf_predict(track: &Track, config: &KalmanConfig) -> Forecast {
    let state = track.kalman.predict(config);
    let bbox = state.bbox();
    let (sx, sy) = track.heatmap_scale;
    let dx = (bbox.cx - track.heatmap_anchor.0) * sx;
    let dy = (bbox.cy - track.heatmap_anchor.1) * sy;
    Forecast {
        state,
        bbox,
        heatmap: track.heatmap.translate(dx, dy),
    }
}

/// Published state of a track that was updated in the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub class_id: usize,
    pub bbox: BBox,
    pub score: f64,
}

/// What happened during one [`Tracker::step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// `(track id, detection index, cost)` for every accepted pair.
    pub matched: Vec<(u64, usize, f64)>,
    pub born: Vec<u64>,
    pub removed: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// All live tracks, including those currently unmatched.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Tracks updated or born in the latest frame.
    pub fn outputs(&self) -> Vec<TrackOutput> {
        self.tracks
            .iter()
            .filter(|t| t.misses == 0)
            .map(|t| TrackOutput {
                id: t.id,
                class_id: t.class_id,
                bbox: t.bbox,
                score: t.score,
            })
            .collect()
    }

    fn pair_cost(&self, forecast: &Forecast, det: &Detection) -> Result<f64> {
        match self.config.cost {
            AssociationCost::Heatmap => forecast.heatmap.cost(&det.heatmap),
            AssociationCost::CenterDistance => {
                let f = &forecast.bbox;
                let d = ((f.cx - det.bbox.cx).powi(2) + (f.cy - det.bbox.cy).powi(2)).sqrt();
                Ok(d / (f.w.abs() * f.h.abs()).sqrt().max(1.0))
            }
        }
    }

    /// Advances the tracker by one frame.
    pub fn step(&mut self, detections: &DetectionSet) -> Result<StepReport> {
        let scale = detections.scale();
        if let Some(d) = detections
            .detections
            .iter()
            .find(|d| d.heatmap.map().dims() != detections.heatmap_dims)
        {
            return Err(invalid(format!(
                "detection heatmap {:?} does not match declared {:?}",
                d.heatmap.map().dims(),
                detections.heatmap_dims
            )));
        }
        let kcfg = self.config.kalman;

        // (A) forecast
        let forecasts: Vec<Forecast> = self.tracks.iter().map(|t| kf_predict(t, &kcfg)).collect();

        // (B) class-pure matching
        let classes: BTreeSet<usize> = self
            .tracks
            .iter()
            .map(|t| t.class_id)
            .chain(detections.detections.iter().map(|d| d.class_id))
            .collect();
        let mut track_match: Vec<Option<usize>> = vec![None; self.tracks.len()];
        let mut det_matched = vec![false; detections.len()];
        let mut report = StepReport::default();
        for class in classes {
            let ti: Vec<usize> = (0..self.tracks.len())
                .filter(|&i| self.tracks[i].class_id == class)
                .collect();
            let di: Vec<usize> = (0..detections.len())
                .filter(|&j| detections.detections[j].class_id == class)
                .collect();
            if ti.is_empty() || di.is_empty() {
                continue;
            }
            let mut data = Vec::with_capacity(ti.len() * di.len());
            for &t in &ti {
                for &d in &di {
                    data.push(self.pair_cost(&forecasts[t], &detections.detections[d])?);
                }
            }
            let cost = CostMatrix::new(ti.len(), di.len(), data)?;
            for (r, c) in assignment::solve(&cost)? {
                let value = cost.get(r, c);
                if value < self.config.match_threshold {
                    track_match[ti[r]] = Some(di[c]);
                    det_matched[di[c]] = true;
                    report.matched.push((self.tracks[ti[r]].id, di[c], value));
                }
            }
        }

        let mut survivors = Vec::with_capacity(self.tracks.len());
        for ((mut track, forecast), matched) in self
            .tracks
            .drain(..)
            .zip(forecasts)
            .zip(track_match.iter().copied())
        {
            track.age += 1;
            match matched {
                Some(j) => {
                    let det = &detections.detections[j];
                    track.kalman = forecast.state.update(&det.bbox, &kcfg);
                    track.bbox = det.bbox;
                    track.score = det.score;
                    track.heatmap = det.heatmap.clone();
                    track.heatmap_anchor = (det.bbox.cx, det.bbox.cy);
                    track.heatmap_scale = scale;
                    track.misses = 0;
                    track.hits += 1;
                    survivors.push(track);
                }
                // (C) age out
                None => {
                    track.kalman = forecast.state;
                    track.bbox = forecast.bbox;
                    track.misses += 1;
                    if track.misses >= self.config.max_misses {
                        report.removed.push(track.id);
                    } else {
                        survivors.push(track);
                    }
                }
            }
        }
        self.tracks = survivors;

        for (j, det) in detections.detections.iter().enumerate() {
            if det_matched[j] || det.score <= self.config.birth_threshold {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            report.born.push(id);
            self.tracks.push(Track {
                id,
                class_id: det.class_id,
                bbox: det.bbox,
                score: det.score,
                heatmap: det.heatmap.clone(),
                heatmap_anchor: (det.bbox.cx, det.bbox.cy),
                heatmap_scale: scale,
                kalman: KalmanState::initiate(&det.bbox, &kcfg),
                misses: 0,
                age: 1,
                hits: 1,
            });
        }
        Ok(report)
    }
}

/// Builds a detection whose heatmap is a Gaussian centered on the box, with
/// the peak equal to `score`.
pub fn detection_from_box(
    bbox: BBox,
    class_id: usize,
    score: f64,
    sigma: f64,
    heatmap_dims: (usize, usize),
    frame_dims: (usize, usize),
) -> Result<Detection> {
    let (sx, sy) = heatmap_scale(frame_dims, heatmap_dims);
    let map: Heatmap = crate::targets::render_gaussian_at(
        ((bbox.cx + 0.5) * sx - 0.5, (bbox.cy + 0.5) * sy - 0.5),
        sigma * sx.min(sy),
        score,
        heatmap_dims.0,
        heatmap_dims.1,
    )?;
    Ok(Detection {
        class_id,
        bbox,
        score,
        heatmap: PixelDistribution::new(map),
    })
}
