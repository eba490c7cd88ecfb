//! Glue for running the tracker over a simulated scene and scoring it.

use crate::error::Result;
use crate::metrics::{evaluate_sequence, LabeledBox, Sequence, Summary};
use crate::simulator::{detection_set, observe_detections, SceneTruth};
use crate::tracker::{TrackOutput, Tracker, TrackerConfig};

/// Tracker outputs for every frame of `truth`, observed through the
/// simulator's detector model.
pub fn track_scene(truth: &SceneTruth, config: &TrackerConfig) -> Result<Vec<Vec<TrackOutput>>> {
    let mut tracker = Tracker::new(config.clone())?;
    let dims = truth.config.frame_dims();
    let mut out = Vec::with_capacity(truth.num_frames());
    for t in 0..truth.num_frames() {
        let dets = observe_detections(truth, t)?;
        tracker.step(&detection_set(&dets, dims))?;
        out.push(tracker.outputs());
    }
    Ok(out)
}

/// Evaluation view of a scene: visible objects are ground truth, occluded
/// ones are ignore regions.
pub fn truth_sequence(truth: &SceneTruth, name: &str, hyp: &[Vec<TrackOutput>]) -> Sequence {
    let mut seq = Sequence {
        name: name.to_string(),
        ..Sequence::default()
    };
    for frame in &truth.frames {
        seq.gt.push(
            frame
                .iter()
                .filter(|s| s.visible)
                .map(|s| LabeledBox {
                    id: s.gt.track_id,
                    bbox: s.bbox(),
                })
                .collect(),
        );
        seq.ignored
            .push(frame.iter().filter(|s| !s.visible).map(|s| s.bbox()).collect());
    }
    seq.hyp = hyp
        .iter()
        .map(|f| {
            f.iter()
                .map(|t| LabeledBox {
                    id: t.id,
                    bbox: t.bbox,
                })
                .collect()
        })
        .collect();
    seq
}

/// Tracks a scene and scores the result.
pub fn evaluate_scene(
    truth: &SceneTruth,
    config: &TrackerConfig,
    iou_threshold: f64,
) -> Result<Summary> {
    let hyp = track_scene(truth, config)?;
    evaluate_sequence(&truth_sequence(truth, "scene", &hyp), iou_threshold)
}
