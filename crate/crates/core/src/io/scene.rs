use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::mot::{group_frames, read_mot_file, write_mot_file, MotRow};
use crate::error::{file_error, invalid, Error, Result};
use crate::grid::{read_grid_file, write_grid_file, FeatureGrid, FlowField, Heatmap};
use crate::simulator::{
    object_features, observe_detections, MotionModel, Occlusion, ObservedDetection, SceneConfig,
    SceneTruth,
};
use crate::targets::{gaussian_sigma, render_gaussian_at, TargetConfig};
use crate::tracker::{Detection, DetectionSet, PixelDistribution};

pub const SCENE_CONFIG_FILE: &str = "scene.cfg";
pub const GT_FILE: &str = "gt.txt";
pub const DET_FILE: &str = "det.txt";
pub const HEATMAP_DIR: &str = "heatmaps";
pub const FLOW_DIR: &str = "flow";
pub const FEATURE_DIR: &str = "features";

fn motion_name(m: MotionModel) -> &'static str {
    match m {
        MotionModel::ConstantVelocity => "constant_velocity",
        MotionModel::Sinusoidal => "sinusoidal",
        MotionModel::CrossingPairs => "crossing_pairs",
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64)> {
    let (a, b) = value
        .split_once(',')
        .ok_or_else(|| invalid(format!("{key}: expected two comma-separated values")))?;
    Ok((parse(key, a)?, parse(key, b)?))
}

/// Sets one scene field by key.
pub fn set_scene_key(cfg: &mut SceneConfig, key: &str, value: &str) -> Result<()> {
    let key = key.trim().replace('-', "_");
    let k = key.as_str();
    let value = value.trim();
    match k {
        "height" => cfg.height = parse(k, value)?,
        "width" => cfg.width = parse(k, value)?,
        "objects" | "num_objects" => cfg.num_objects = parse(k, value)?,
        "frames" => cfg.frames = parse(k, value)?,
        "motion" => {
            cfg.motion = match value {
                "constant_velocity" => MotionModel::ConstantVelocity,
                "sinusoidal" => MotionModel::Sinusoidal,
                "crossing_pairs" => MotionModel::CrossingPairs,
                _ => return Err(invalid(format!("{k}: unknown motion model {value:?}"))),
            }
        }
        "occlusion" => {
            let parts: Vec<&str> = value.split(',').collect();
            if parts.len() != 3 {
                return Err(invalid(format!("{k}: expected object,start,len")));
            }
            cfg.occlusions.push(Occlusion {
                object: parse(k, parts[0])?,
                start: parse(k, parts[1])?,
                len: parse(k, parts[2])?,
            });
        }
        "crossing_occlusion" => cfg.crossing_occlusion = parse(k, value)?,
        "crossing_offset" => cfg.crossing_offset = parse(k, value)?,
        "speed" => cfg.speed = parse_pair(k, value)?,
        "object_width" => cfg.object_width = parse_pair(k, value)?,
        "aspect" => cfg.aspect = parse(k, value)?,
        "amplitude" => cfg.amplitude = parse_pair(k, value)?,
        "noise" | "heatmap_noise_std" => cfg.heatmap_noise_std = parse(k, value)?,
        "dropout" => cfg.dropout = parse(k, value)?,
        "clutter" | "clutter_rate" => cfg.clutter_rate = parse(k, value)?,
        "clutter_score" => cfg.clutter_score = parse_pair(k, value)?,
        "num_classes" => cfg.num_classes = parse(k, value)?,
        "feature_channels" => cfg.feature_channels = parse(k, value)?,
        "radius_divisor" => cfg.targets.radius_divisor = parse(k, value)?,
        "min_sigma" => cfg.targets.min_sigma = parse(k, value)?,
        "seed" => cfg.seed = parse(k, value)?,
        _ => return Err(invalid(format!("unknown scene key {key:?}"))),
    }
    Ok(())
}

/// `key = value` text for a scene; `occlusion` appears once per interval.
pub fn scene_config_text(cfg: &SceneConfig) -> String {
    let pair = |p: (f64, f64)| format!("{},{}", p.0, p.1);
    let mut s = String::new();
    let entries = [
        ("height", cfg.height.to_string()),
        ("width", cfg.width.to_string()),
        ("num_objects", cfg.num_objects.to_string()),
        ("frames", cfg.frames.to_string()),
        ("motion", motion_name(cfg.motion).to_string()),
        ("crossing_occlusion", cfg.crossing_occlusion.to_string()),
        ("crossing_offset", cfg.crossing_offset.to_string()),
        ("speed", pair(cfg.speed)),
        ("object_width", pair(cfg.object_width)),
        ("aspect", cfg.aspect.to_string()),
        ("amplitude", pair(cfg.amplitude)),
        ("heatmap_noise_std", cfg.heatmap_noise_std.to_string()),
        ("dropout", cfg.dropout.to_string()),
        ("clutter_rate", cfg.clutter_rate.to_string()),
        ("clutter_score", pair(cfg.clutter_score)),
        ("num_classes", cfg.num_classes.to_string()),
        ("feature_channels", cfg.feature_channels.to_string()),
        ("radius_divisor", cfg.targets.radius_divisor.to_string()),
        ("min_sigma", cfg.targets.min_sigma.to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    for (k, v) in entries {
        let _ = writeln!(s, "{k} = {v}");
    }
    for o in &cfg.occlusions {
        let _ = writeln!(s, "occlusion = {},{},{}", o.object, o.start, o.len);
    }
    s
}

pub fn parse_scene_config(text: &str, source: &str) -> Result<SceneConfig> {
    let mut cfg = SceneConfig::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err("expected key = value".into()))?;
        set_scene_key(&mut cfg, k, v).map_err(|e| err(e.to_string()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Ground-truth rows: `conf` is 1 for visible and 0 for occluded frames,
/// `class` is the 0-based class id and visibility is 1 or 0.
pub fn gt_rows(truth: &SceneTruth) -> Vec<MotRow> {
    let mut rows = Vec::new();
    for (t, frame) in truth.frames.iter().enumerate() {
        for s in frame {
            let b = s.bbox();
            let vis = if s.visible { 1.0 } else { 0.0 };
            rows.push(MotRow {
                frame: t as u32 + 1,
                id: s.gt.track_id as i64,
                left: b.left(),
                top: b.top(),
                width: b.w,
                height: b.h,
                conf: vis,
                class_id: s.gt.class_id as i64,
                visibility: vis,
            });
        }
    }
    rows
}

/// Detection rows for one frame: id `-1`, `conf` is the heatmap peak.
pub fn detection_rows(frame: u32, dets: &[ObservedDetection]) -> Vec<MotRow> {
    dets.iter()
        .map(|d| MotRow {
            class_id: d.class_id as i64,
            ..MotRow::result(frame, -1, &d.bbox, d.score)
        })
        .collect()
}

fn frame_file(dir: &Path, sub: &str, frame: u32) -> PathBuf {
    dir.join(sub).join(format!("{frame:06}.grid"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SceneWriteOptions {
    /// Store each frame's detection heatmaps and ground-truth flow.
    pub blobs: bool,
    /// Store each frame's synthetic feature maps.
    pub features: bool,
}

/// Writes `scene.cfg`, `gt.txt`, `det.txt` and optional per-frame blobs.
pub fn write_scene(dir: impl AsRef<Path>, truth: &SceneTruth, opts: SceneWriteOptions) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(file_error(dir))?;
    let cfg_path = dir.join(SCENE_CONFIG_FILE);
    fs::write(&cfg_path, scene_config_text(&truth.config)).map_err(file_error(&cfg_path))?;
    write_mot_file(dir.join(GT_FILE), &gt_rows(truth))?;
    for (on, sub) in [
        (opts.blobs, HEATMAP_DIR),
        (opts.blobs, FLOW_DIR),
        (opts.features, FEATURE_DIR),
    ] {
        if on {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(file_error(&p))?;
        }
    }
    let (h, w) = truth.config.frame_dims();
    let mut det_rows = Vec::new();
    for t in 0..truth.num_frames() {
        let frame = t as u32 + 1;
        let dets = observe_detections(truth, t)?;
        det_rows.extend(detection_rows(frame, &dets));
        if opts.blobs {
            if !dets.is_empty() {
                let mut data = Vec::with_capacity(dets.len() * h * w);
                for d in &dets {
                    data.extend_from_slice(d.heatmap.data());
                }
                let grid = FeatureGrid::new(h, w, dets.len(), data)?;
                write_grid_file(frame_file(dir, HEATMAP_DIR, frame), &grid)?;
            }
            write_grid_file(frame_file(dir, FLOW_DIR, frame), &truth.flow(t)?.to_feature())?;
        }
        if opts.features {
            write_grid_file(frame_file(dir, FEATURE_DIR, frame), &object_features(truth, t)?)?;
        }
    }
    write_mot_file(dir.join(DET_FILE), &det_rows)
}

/// A scene directory opened for tracking.
#[derive(Debug, Clone)]
pub struct SceneDir {
    pub root: PathBuf,
    pub config: SceneConfig,
    pub gt: Vec<MotRow>,
    /// Detection rows for frames `1..=frames`, empty where none.
    pub detections: Vec<Vec<MotRow>>,
}

impl SceneDir {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let cfg_path = root.join(SCENE_CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(file_error(&cfg_path))?;
        let config = parse_scene_config(&text, &cfg_path.display().to_string())?;
        let gt_path = root.join(GT_FILE);
        let gt = if gt_path.exists() {
            read_mot_file(&gt_path)?
        } else {
            Vec::new()
        };
        let det_rows = read_mot_file(root.join(DET_FILE))?;
        let mut detections = vec![Vec::new(); config.frames];
        for (frame, rows) in group_frames(&det_rows) {
            let slot = detections.get_mut(frame as usize - 1).ok_or_else(|| {
                invalid(format!(
                    "detection frame {frame} beyond scene length {}",
                    config.frames
                ))
            })?;
            *slot = rows;
        }
        Ok(Self {
            root,
            config,
            gt,
            detections,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.config.frames
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        self.config.frame_dims()
    }

    /// Heatmaps for `frame` (1-based): stored blobs when present, else
    /// Gaussians re-rendered at each box center with peak equal to `conf`.
    pub fn heatmaps(&self, frame: u32, targets: &TargetConfig) -> Result<Vec<Heatmap>> {
        let rows = self.rows(frame)?;
        let path = frame_file(&self.root, HEATMAP_DIR, frame);
        if !rows.is_empty() && path.exists() {
            let grid = read_grid_file(&path)?;
            if grid.channels() != rows.len() || grid.dims() != self.frame_dims() {
                return Err(invalid(format!(
                    "{}: {} heatmaps of {:?} for {} detections",
                    path.display(),
                    grid.channels(),
                    grid.dims(),
                    rows.len()
                )));
            }
            return (0..rows.len())
                .map(|c| Heatmap::from_feature(&grid, c))
                .collect();
        }
        let (h, w) = self.frame_dims();
        rows.iter()
            .map(|r| {
                let b = r.bbox();
                let sigma = gaussian_sigma(b.w, b.h, targets);
                render_gaussian_at((b.cx, b.cy), sigma, r.conf.clamp(0.0, 1.0), h, w)
            })
            .collect()
    }

    fn rows(&self, frame: u32) -> Result<&[MotRow]> {
        if frame == 0 || frame as usize > self.detections.len() {
            return Err(invalid(format!("frame {frame} outside 1..={}", self.detections.len())));
        }
        Ok(&self.detections[frame as usize - 1])
    }

    /// Tracker input for `frame` (1-based).
    pub fn detection_set(&self, frame: u32, targets: &TargetConfig) -> Result<DetectionSet> {
        let rows = self.rows(frame)?;
        let maps = self.heatmaps(frame, targets)?;
        let detections = rows
            .iter()
            .zip(maps)
            .map(|(r, map)| Detection {
                class_id: r.class_id.max(0) as usize,
                bbox: r.bbox(),
                score: r.conf,
                heatmap: PixelDistribution::new(map),
            })
            .collect();
        Ok(DetectionSet {
            frame_dims: self.frame_dims(),
            heatmap_dims: self.frame_dims(),
            detections,
        })
    }

    /// Stored feature maps for `frame`, if the scene has them.
    pub fn features(&self, frame: u32) -> Result<Option<FeatureGrid>> {
        let p = frame_file(&self.root, FEATURE_DIR, frame);
        p.exists().then(|| read_grid_file(&p)).transpose()
    }

    /// Stored ground-truth flow for `frame`, if the scene has it.
    pub fn flow(&self, frame: u32) -> Result<Option<FlowField>> {
        let p = frame_file(&self.root, FLOW_DIR, frame);
        p.exists()
            .then(|| read_grid_file(&p).and_then(|g| FlowField::from_feature(&g)))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::generate;

    fn cfg() -> SceneConfig {
        SceneConfig {
            num_objects: 3,
            frames: 6,
            motion: MotionModel::CrossingPairs,
            heatmap_noise_std: 0.05,
            seed: 11,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn scene_config_round_trip() {
        let truth = generate(&cfg()).unwrap();
        let text = scene_config_text(&truth.config);
        let back = parse_scene_config(&text, "scene.cfg").unwrap();
        assert_eq!(back, truth.config);
        assert_eq!(generate(&back).unwrap(), truth);
    }

    #[test]
    fn bad_scene_keys() {
        assert!(parse_scene_config("motion = zigzag", "s").is_err());
        assert!(parse_scene_config("speed = 1", "s").is_err());
        let err = parse_scene_config("frames = 3\nwat = 1", "s").unwrap_err();
        assert!(err.to_string().starts_with("s:2:"));
    }

    #[test]
    fn gt_rows_round_trip_through_text() {
        let truth = generate(&cfg()).unwrap();
        let rows = gt_rows(&truth);
        assert_eq!(rows.len(), 18);
        let back = super::super::mot::parse_mot(
            super::super::mot::format_mot(&rows).as_bytes(),
            "gt",
        )
        .unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn written_scene_reopens_with_blobs() {
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&cfg()).unwrap();
        write_scene(
            dir.path(),
            &truth,
            SceneWriteOptions {
                blobs: true,
                features: true,
            },
        )
        .unwrap();
        let scene = SceneDir::open(dir.path()).unwrap();
        assert_eq!(scene.config, truth.config);
        assert_eq!(scene.gt, gt_rows(&truth));
        let targets = TargetConfig::default();
        for t in 0..6 {
            let obs = observe_detections(&truth, t).unwrap();
            let set = scene.detection_set(t as u32 + 1, &targets).unwrap();
            assert_eq!(set.len(), obs.len());
            for (d, o) in set.detections.iter().zip(&obs) {
                for (a, b) in d.heatmap.map().data().iter().zip(o.heatmap.data()) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
            let flow = scene.flow(t as u32 + 1).unwrap().unwrap();
            let want = truth.flow(t).unwrap();
            for (a, b) in flow.dx().iter().chain(flow.dy()).zip(want.dx().iter().chain(want.dy())) {
                assert!((a - b).abs() < 1e-5);
            }
            assert!(scene.features(t as u32 + 1).unwrap().is_some());
        }
    }

    #[test]
    fn rerendered_heatmaps_match_noiseless_observation() {
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&SceneConfig {
            heatmap_noise_std: 0.0,
            ..cfg()
        })
        .unwrap();
        write_scene(dir.path(), &truth, SceneWriteOptions::default()).unwrap();
        let scene = SceneDir::open(dir.path()).unwrap();
        let set = scene.detection_set(3, &TargetConfig::default()).unwrap();
        let obs = observe_detections(&truth, 2).unwrap();
        for (d, o) in set.detections.iter().zip(&obs) {
            assert_eq!(d.heatmap.map(), &o.heatmap);
        }
        assert!(scene.flow(3).unwrap().is_none());
        assert!(scene.detection_set(7, &TargetConfig::default()).is_err());
    }

    #[test]
    fn missing_directory_names_path() {
        let err = SceneDir::open("/nonexistent/scene").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/scene/scene.cfg"));
    }
}
