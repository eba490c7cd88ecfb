use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decoder::DecoderConfig;
use crate::error::{file_error, invalid, Error, Result};
use crate::metrics::DEFAULT_IOU_THRESHOLD;
use crate::targets::TargetConfig;
use crate::tracker::{AssociationCost, TrackerConfig, DEFAULT_MIN_SCORE};

/// Where per-frame detections come from when tracking a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    /// Stored heatmaps, or Gaussians re-rendered from the detection boxes.
    Heatmaps,
    /// Run the query decoder on stored feature maps.
    Decoder,
}

/// Every tunable of a run. Text form is flat `key = value` lines; `#`
/// starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub targets: TargetConfig,
    pub decoder: DecoderConfig,
    pub detector: DetectorMode,
    /// Minimum heatmap peak for a decoded query to count as a detection.
    pub min_score: f64,
    pub iou_threshold: f64,
    pub seed: u64,
    pub scene: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub res: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub params: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            targets: TargetConfig::default(),
            decoder: DecoderConfig::default(),
            detector: DetectorMode::Heatmaps,
            min_score: DEFAULT_MIN_SCORE,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            seed: 0,
            scene: None,
            gt: None,
            res: None,
            out: None,
            params: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    /// Sets one field by key; hyphens and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        let opt_path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match k {
            "eta_m" | "match_threshold" => self.tracker.match_threshold = parse_value(k, value)?,
            "eta_s" | "birth_threshold" => self.tracker.birth_threshold = parse_value(k, value)?,
            "nk" | "max_misses" => self.tracker.max_misses = parse_value(k, value)?,
            "association" => {
                self.tracker.cost = match value {
                    "heatmap" => AssociationCost::Heatmap,
                    "center" => AssociationCost::CenterDistance,
                    _ => return Err(invalid(format!("{k}: expected heatmap or center"))),
                }
            }
            "process_std_weight" => self.tracker.kalman.process_std_weight = parse_value(k, value)?,
            "measurement_std_weight" => {
                self.tracker.kalman.measurement_std_weight = parse_value(k, value)?
            }
            "init_velocity_std_weight" => {
                self.tracker.kalman.init_velocity_std_weight = parse_value(k, value)?
            }
            "radius_divisor" => self.targets.radius_divisor = parse_value(k, value)?,
            "min_sigma" => self.targets.min_sigma = parse_value(k, value)?,
            "ce_weight" => self.targets.ce_weight = parse_value(k, value)?,
            "focal_weight" => self.targets.focal_weight = parse_value(k, value)?,
            "size_weight" => self.targets.size_weight = parse_value(k, value)?,
            "focal_alpha" => self.targets.focal_alpha = parse_value(k, value)?,
            "focal_beta" => self.targets.focal_beta = parse_value(k, value)?,
            "normalize_heatmap_l1" => self.targets.normalize_heatmap_l1 = parse_bool(k, value)?,
            "queries" | "num_queries" => self.decoder.num_queries = parse_value(k, value)?,
            "levels" | "num_levels" => self.decoder.num_levels = parse_value(k, value)?,
            "channels" => self.decoder.channels = parse_value(k, value)?,
            "num_classes" => self.decoder.num_classes = parse_value(k, value)?,
            "mask_threshold" => self.decoder.mask_threshold = parse_value(k, value)?,
            "ffn_dim" => self.decoder.ffn_dim = parse_value(k, value)?,
            "scale_scores" => self.decoder.scale_scores = parse_bool(k, value)?,
            "positional_embedding" => self.decoder.positional_embedding = parse_bool(k, value)?,
            "detector" => {
                self.detector = match value {
                    "heatmaps" => DetectorMode::Heatmaps,
                    "decoder" => DetectorMode::Decoder,
                    _ => return Err(invalid(format!("{k}: expected heatmaps or decoder"))),
                }
            }
            "min_score" => self.min_score = parse_value(k, value)?,
            "iou_threshold" => self.iou_threshold = parse_value(k, value)?,
            "seed" => self.seed = parse_value(k, value)?,
            "scene" => self.scene = opt_path(),
            "gt" => self.gt = opt_path(),
            "res" => self.res = opt_path(),
            "out" => self.out = opt_path(),
            "params" => self.params = opt_path(),
            _ => return Err(invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn merge_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key = value".into()))?;
            self.set(k, v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(file_error(path))?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.decoder.validate()?;
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(invalid("iou_threshold must lie in (0,1]"));
        }
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(invalid("min_score must lie in [0,1]"));
        }
        if !(self.targets.radius_divisor > 0.0 && self.targets.min_sigma > 0.0) {
            return Err(invalid("radius_divisor and min_sigma must be positive"));
        }
        Ok(())
    }

    /// Every field as `key = value` lines; parsing this text reproduces the
    /// config.
    pub fn to_text(&self) -> String {
        let t = &self.tracker;
        let g = &self.targets;
        let d = &self.decoder;
        let entries: Vec<(&str, String)> = vec![
            ("eta_m", t.match_threshold.to_string()),
            ("eta_s", t.birth_threshold.to_string()),
            ("nk", t.max_misses.to_string()),
            (
                "association",
                match t.cost {
                    AssociationCost::Heatmap => "heatmap",
                    AssociationCost::CenterDistance => "center",
                }
                .to_string(),
            ),
            ("process_std_weight", t.kalman.process_std_weight.to_string()),
            ("measurement_std_weight", t.kalman.measurement_std_weight.to_string()),
            ("init_velocity_std_weight", t.kalman.init_velocity_std_weight.to_string()),
            ("radius_divisor", g.radius_divisor.to_string()),
            ("min_sigma", g.min_sigma.to_string()),
            ("ce_weight", g.ce_weight.to_string()),
            ("focal_weight", g.focal_weight.to_string()),
            ("size_weight", g.size_weight.to_string()),
            ("focal_alpha", g.focal_alpha.to_string()),
            ("focal_beta", g.focal_beta.to_string()),
            ("normalize_heatmap_l1", g.normalize_heatmap_l1.to_string()),
            ("queries", d.num_queries.to_string()),
            ("levels", d.num_levels.to_string()),
            ("channels", d.channels.to_string()),
            ("num_classes", d.num_classes.to_string()),
            ("mask_threshold", d.mask_threshold.to_string()),
            ("ffn_dim", d.ffn_dim.to_string()),
            ("scale_scores", d.scale_scores.to_string()),
            ("positional_embedding", d.positional_embedding.to_string()),
            (
                "detector",
                match self.detector {
                    DetectorMode::Heatmaps => "heatmaps",
                    DetectorMode::Decoder => "decoder",
                }
                .to_string(),
            ),
            ("min_score", self.min_score.to_string()),
            ("iou_threshold", self.iou_threshold.to_string()),
            ("seed", self.seed.to_string()),
            ("scene", path_text(&self.scene)),
            ("gt", path_text(&self.gt)),
            ("res", path_text(&self.res)),
            ("out", path_text(&self.out)),
            ("params", path_text(&self.params)),
        ];
        let mut s = String::new();
        for (k, v) in entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_tracker_thresholds() {
        let text = RunConfig::default().to_text();
        assert!(text.contains("eta_m = 0.65\n"));
        assert!(text.contains("eta_s = 0.8\n"));
        assert!(text.contains("nk = 30\n"));
        assert!(text.contains("queries = 100\n"));
        assert!(text.contains("levels = 3\n"));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("eta-m", "0.5").unwrap();
        c.set("association", "center").unwrap();
        c.set("scene", "some/dir").unwrap();
        c.set("scale_scores", "true").unwrap();
        c.set("focal_beta", "3.25").unwrap();
        let mut back = RunConfig::default();
        back.merge_text(&c.to_text(), "echo").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_and_errors() {
        let mut c = RunConfig::default();
        c.merge_text("# tuned\n\neta_s = 0.9 # birth\n", "f").unwrap();
        assert_eq!(c.tracker.birth_threshold, 0.9);
        let err = c.merge_text("nk = 3\nbogus = 1\n", "run.cfg").unwrap_err();
        assert!(err.to_string().starts_with("run.cfg:2:"), "{err}");
        assert!(c.merge_text("eta_m 0.3", "f").is_err());
        assert!(c.set("nk", "-1").is_err());
        assert!(c.set("scale_scores", "maybe").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.tracker.match_threshold = 1.5;
        assert!(c.validate().is_err());
    }
}
