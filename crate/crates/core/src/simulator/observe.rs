use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{stream_rng, uniform, SceneTruth};
use crate::error::{invalid, Result};
use crate::grid::{FeatureGrid, FlowField, Heatmap};
use crate::targets::{gaussian_sigma, render_gaussian_at, GaussianKernel};
use crate::tracker::{BBox, Detection, DetectionSet, PixelDistribution};

/// One rendered detection: either a real object or clutter.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDetection {
    /// Track id of the object that produced it; `None` for clutter.
    pub source: Option<u64>,
    pub class_id: usize,
    pub bbox: BBox,
    /// Peak value of the heatmap.
    pub score: f64,
    pub heatmap: Heatmap,
}

impl ObservedDetection {
    pub fn to_detection(&self) -> Detection {
        Detection {
            class_id: self.class_id,
            bbox: self.bbox,
            score: self.score,
            heatmap: PixelDistribution::new(self.heatmap.clone()),
        }
    }
}

/// Packs rendered detections at frame resolution for the tracker.
pub fn detection_set(dets: &[ObservedDetection], frame_dims: (usize, usize)) -> DetectionSet {
    DetectionSet {
        frame_dims,
        heatmap_dims: frame_dims,
        detections: dets.iter().map(ObservedDetection::to_detection).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame: usize,
    pub detections: Vec<ObservedDetection>,
    /// Features of the previous frame (zeros for the first frame).
    pub previous_features: FeatureGrid,
    pub features: FeatureGrid,
    /// Ground-truth backward flow from this frame to the previous one.
    pub flow: FlowField,
}

impl Observation {
    pub fn detection_set(&self) -> DetectionSet {
        detection_set(&self.detections, self.features.dims())
    }
}

const OBSERVATION_STREAM: u64 = 1;

/// Renders a Gaussian of the given peak and adds clipped noise inside its
/// window; the detected center is the noisy peak.
fn noisy_blob(
    center: (f64, f64),
    sigma: f64,
    amplitude: f64,
    dims: (usize, usize),
    noise: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<(Heatmap, usize, usize, f64)> {
    let (h, w) = dims;
    let mut map = render_gaussian_at(center, sigma, amplitude, h, w)?;
    let cx = center.0.round().clamp(0.0, (w - 1) as f64) as i64;
    let cy = center.1.round().clamp(0.0, (h - 1) as f64) as i64;
    let r = GaussianKernel { cx: 0.0, cy: 0.0, sigma }.radius() as i64;
    let (xs, ys) = (
        (cx - r).max(0) as usize..=(cx + r).min(w as i64 - 1) as usize,
        (cy - r).max(0) as usize..=(cy + r).min(h as i64 - 1) as usize,
    );
    if let Some(noise) = noise {
        for y in ys.clone() {
            for x in xs.clone() {
                let v = map.get(x, y) + noise.sample(rng);
                map.set(x, y, v.clamp(0.0, 1.0));
            }
        }
    }
    // the map is zero outside the window, so the first maximum inside it
    // is the global one unless everything is zero
    let mut best = (*xs.start(), *ys.start(), map.get(*xs.start(), *ys.start()));
    for y in ys {
        for x in xs.clone() {
            if map.get(x, y) > best.2 {
                best = (x, y, map.get(x, y));
            }
        }
    }
    if best.2 <= 0.0 {
        best = map.argmax().expect("non-empty heatmap");
    }
    let (px, py, peak) = best;
    Ok((map, px, py, peak))
}

/// Detections for frame `t`: every visible object that survives dropout,
/// plus clutter. Deterministic in the scene seed and `t`.
pub fn observe_detections(truth: &SceneTruth, t: usize) -> Result<Vec<ObservedDetection>> {
    if t >= truth.num_frames() {
        return Err(invalid(format!(
            "frame {t} out of range (scene has {})",
            truth.num_frames()
        )));
    }
    let cfg = &truth.config;
    let dims = cfg.frame_dims();
    let (fh, fw) = (dims.0 as f64, dims.1 as f64);
    let mut rng = stream_rng(cfg.seed, OBSERVATION_STREAM + t as u64);
    let noise = if cfg.heatmap_noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.heatmap_noise_std).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    let mut out = Vec::new();
    for (info, state) in truth.objects.iter().zip(&truth.frames[t]) {
        if !state.visible {
            continue;
        }
        if cfg.dropout > 0.0 && rng.random_bool(cfg.dropout) {
            continue;
        }
        let (heatmap, px, py, score) = noisy_blob(
            state.gt.center,
            info.sigma,
            info.amplitude,
            dims,
            noise.as_ref(),
            &mut rng,
        )?;
        let bbox = BBox {
            cx: px as f64,
            cy: py as f64,
            w: info.size.0,
            h: info.size.1,
        }
        .clamped(fw, fh);
        out.push(ObservedDetection {
            source: Some(info.track_id),
            class_id: info.class_id,
            bbox,
            score,
            heatmap,
        });
    }
    if cfg.clutter_rate > 0.0 {
        let count: f64 = Poisson::new(cfg.clutter_rate)
            .map_err(|e| invalid(e.to_string()))?
            .sample(&mut rng);
        for _ in 0..count as usize {
            let w = uniform(&mut rng, cfg.object_width);
            let h = w * cfg.aspect;
            let center = (
                uniform(&mut rng, (w / 2.0, fw - w / 2.0)),
                uniform(&mut rng, (h / 2.0, fh - h / 2.0)),
            );
            let class_id = rng.random_range(0..cfg.num_classes);
            let amplitude = uniform(&mut rng, cfg.clutter_score);
            let sigma = gaussian_sigma(w, h, &cfg.targets);
            let (heatmap, px, py, score) =
                noisy_blob(center, sigma, amplitude, dims, noise.as_ref(), &mut rng)?;
            out.push(ObservedDetection {
                source: None,
                class_id,
                bbox: BBox {
                    cx: px as f64,
                    cy: py as f64,
                    w,
                    h,
                }
                .clamped(fw, fh),
                score,
                heatmap,
            });
        }
    }
    Ok(out)
}

/// Per-pixel features of frame `t`: each visible object's embedding
/// weighted by its unit-peak Gaussian. Background is zero.
pub fn object_features(truth: &SceneTruth, t: usize) -> Result<FeatureGrid> {
    if t >= truth.num_frames() {
        return Err(invalid(format!("frame {t} out of range")));
    }
    let (h, w) = truth.config.frame_dims();
    let c = truth.config.feature_channels;
    let mut grid = FeatureGrid::zeros(h, w, c);
    for (info, state) in truth.objects.iter().zip(&truth.frames[t]) {
        if !state.visible {
            continue;
        }
        let weight = render_gaussian_at(state.gt.center, info.sigma, 1.0, h, w)?;
        for y in 0..h {
            for x in 0..w {
                let g = weight.get(x, y);
                if g == 0.0 {
                    continue;
                }
                for (ch, e) in info.embedding.iter().enumerate() {
                    grid.set(x, y, ch, grid.get(x, y, ch) + g * e);
                }
            }
        }
    }
    Ok(grid)
}

/// Everything the pipeline sees at frame `t`.
pub fn observe(truth: &SceneTruth, t: usize) -> Result<Observation> {
    let features = object_features(truth, t)?;
    let previous_features = if t == 0 {
        FeatureGrid::zeros(features.height(), features.width(), features.channels())
    } else {
        object_features(truth, t - 1)?
    };
    Ok(Observation {
        frame: t,
        detections: observe_detections(truth, t)?,
        previous_features,
        features,
        flow: truth.flow(t)?,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{generate, MotionModel, Occlusion, SceneConfig};
    use super::*;
    use crate::grid::warp;
    use crate::targets::render_gaussian;

    fn cfg() -> SceneConfig {
        SceneConfig {
            num_objects: 5,
            frames: 30,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn noiseless_observation_equals_rendered_truth() {
        let truth = generate(&cfg()).unwrap();
        for t in [0, 7, 29] {
            let dets = observe_detections(&truth, t).unwrap();
            assert_eq!(dets.len(), 5);
            for (d, s) in dets.iter().zip(&truth.frames[t]) {
                let want = render_gaussian(&s.gt, 192, 256, &truth.config.targets).unwrap();
                assert_eq!(d.heatmap, want);
                assert_eq!(d.score, 1.0);
                assert_eq!(d.source, Some(s.gt.track_id));
                assert!(d.bbox.iou(&s.bbox()) > 0.9);
            }
        }
    }

    #[test]
    fn full_dropout_empties_frames() {
        let truth = generate(&SceneConfig {
            dropout: 1.0,
            ..cfg()
        })
        .unwrap();
        for t in 0..30 {
            assert!(observe_detections(&truth, t).unwrap().is_empty());
        }
    }

    #[test]
    fn occluded_objects_never_observed() {
        let truth = generate(&SceneConfig {
            occlusions: vec![Occlusion {
                object: 1,
                start: 3,
                len: 4,
            }],
            heatmap_noise_std: 0.1,
            clutter_rate: 1.0,
            ..cfg()
        })
        .unwrap();
        for t in 0..30 {
            let ids: Vec<_> = observe_detections(&truth, t)
                .unwrap()
                .iter()
                .filter_map(|d| d.source)
                .collect();
            assert_eq!(ids.contains(&2), !(3..7).contains(&t));
        }
    }

    #[test]
    fn noise_stays_in_unit_interval_and_is_deterministic() {
        let truth = generate(&SceneConfig {
            heatmap_noise_std: 0.3,
            clutter_rate: 2.0,
            ..cfg()
        })
        .unwrap();
        let a = observe_detections(&truth, 4).unwrap();
        assert_eq!(a, observe_detections(&truth, 4).unwrap());
        for d in &a {
            assert!(d.heatmap.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(d.heatmap.argmax().unwrap().2, d.score);
        }
    }

    #[test]
    fn feature_dot_product_peaks_at_object_center() {
        let truth = generate(&cfg()).unwrap();
        let f = object_features(&truth, 10).unwrap();
        for (info, s) in truth.objects.iter().zip(&truth.frames[10]) {
            let mut score = Heatmap::zeros(192, 256);
            for y in 0..192 {
                for x in 0..256 {
                    let dot: f64 = f.pixel(x, y).iter().zip(&info.embedding).map(|(a, b)| a * b).sum();
                    score.set(x, y, dot);
                }
            }
            let (px, py, _) = score.argmax().unwrap();
            assert_eq!((px as f64, py as f64), (s.gt.center.0.round(), s.gt.center.1.round()));
        }
    }

    #[test]
    fn flow_aligns_features_for_integer_motion() {
        let truth = generate(&SceneConfig {
            num_objects: 1,
            frames: 4,
            speed: (1.0, 1.0),
            motion: MotionModel::ConstantVelocity,
            ..SceneConfig::default()
        })
        .unwrap();
        let obs = observe(&truth, 2).unwrap();
        let warped = warp(&obs.previous_features, &obs.flow).unwrap();
        let b = truth.frames[2][0].bbox();
        for y in 0..192 {
            for x in 0..256 {
                if super::super::pixel_in_box(&b, x, y) {
                    for c in 0..obs.features.channels() {
                        assert!((warped.get(x, y, c) - obs.features.get(x, y, c)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_range_frame() {
        let truth = generate(&cfg()).unwrap();
        assert!(observe(&truth, 30).is_err());
    }
}
