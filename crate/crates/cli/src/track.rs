use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use pixtrack::decoder::{decode, read_params_file, DecoderParams};
use pixtrack::grid::{FeatureGrid, FlowField};
use pixtrack::io::{
    group_frames, read_mot_file, track_rows, write_mot_file, DetectorMode, RunConfig, SceneDir,
};
use pixtrack::propagation::propagate_levels;
use pixtrack::simulator::SceneConfig;
use pixtrack::tracker::{extract_detections, DetectionSet, Tracker};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scene directory written by `simulate`.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Bare detection file to track instead of a scene; needs --width and --height.
    #[arg(long, conflicts_with = "scene")]
    det: Option<PathBuf>,
    #[arg(long, requires = "det")]
    width: Option<usize>,
    #[arg(long, requires = "det")]
    height: Option<usize>,
    /// Result file; defaults to `results.txt` inside the scene directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run configuration (`key = value` lines), applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matching gate on the heatmap cost.
    #[arg(long)]
    eta_m: Option<f64>,
    /// Minimum score for starting a track.
    #[arg(long)]
    eta_s: Option<f64>,
    /// Consecutive misses before a track is removed.
    #[arg(long)]
    nk: Option<u32>,
    /// Decoder feature levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Decoder object queries.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other configuration key, e.g. `--set association=center`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(args: &Args) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &args.config {
        cfg.merge_file(p)?;
    }
    let flags = [
        ("eta_m", args.eta_m.map(|v| v.to_string())),
        ("eta_s", args.eta_s.map(|v| v.to_string())),
        ("nk", args.nk.map(|v| v.to_string())),
        ("levels", args.levels.map(|v| v.to_string())),
        ("queries", args.queries.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("scene", args.scene.as_ref().map(|p| p.display().to_string())),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A detection file without a scene: frames and dims come from the caller.
fn bare_scene(det: &PathBuf, width: Option<usize>, height: Option<usize>) -> Result<SceneDir> {
    let (Some(width), Some(height)) = (width, height) else {
        bail!("--det needs --width and --height");
    };
    let rows = read_mot_file(det)?;
    let grouped = group_frames(&rows);
    let frames = grouped.last().map_or(0, |(f, _)| *f as usize);
    let mut detections = vec![Vec::new(); frames];
    for (f, r) in grouped {
        if f == 0 {
            bail!("{}: frame numbers start at 1", det.display());
        }
        detections[f as usize - 1] = r;
    }
    Ok(SceneDir {
        root: det.with_extension("blobs"),
        config: SceneConfig {
            width,
            height,
            frames,
            ..SceneConfig::default()
        },
        gt: Vec::new(),
        detections,
    })
}

/// Runs the query decoder on propagated stored features.
struct DecoderDetector {
    params: DecoderParams,
    previous: Option<Vec<FeatureGrid>>,
}

fn pyramid(base: FeatureGrid, levels: usize) -> Result<Vec<FeatureGrid>> {
    // coarse to fine, so the last prediction has full resolution
    let mut out = vec![base];
    while out.len() < levels {
        let next = out.last().expect("non-empty").downsample2()?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

impl DecoderDetector {
    fn new(cfg: &mut RunConfig, scene: &SceneDir) -> Result<Self> {
        let first = scene
            .features(1)?
            .with_context(|| format!("{} has no stored features; simulate with --features", scene.root.display()))?;
        if cfg.decoder.channels != first.channels() {
            log::info!(
                "decoder channels set to {} to match the stored features",
                first.channels()
            );
            cfg.decoder.channels = first.channels();
        }
        let params = match &cfg.params {
            Some(p) => read_params_file(p)?,
            None => DecoderParams::random(&cfg.decoder, cfg.seed),
        };
        params.check(&cfg.decoder)?;
        Ok(Self {
            params,
            previous: None,
        })
    }

    fn detect(&mut self, cfg: &RunConfig, scene: &SceneDir, frame: u32) -> Result<DetectionSet> {
        let features = scene
            .features(frame)?
            .with_context(|| format!("missing features for frame {frame}"))?;
        let (h, w) = features.dims();
        let flow = scene.flow(frame)?.unwrap_or_else(|| FlowField::zeros(h, w));
        let current = pyramid(features, cfg.decoder.num_levels)?;
        let previous = self.previous.take().unwrap_or_else(|| {
            current
                .iter()
                .map(|g| FeatureGrid::zeros(g.height(), g.width(), g.channels()))
                .collect()
        });
        let fused: Vec<FeatureGrid> = propagate_levels(&current, &previous, &flow)?
            .into_iter()
            .map(|f| f.fused)
            .collect();
        self.previous = Some(current);
        let preds = decode(&fused, &cfg.decoder, &self.params)?;
        let last = preds.last().context("decoder produced no levels")?;
        Ok(extract_detections(last, scene.frame_dims(), cfg.min_score)?)
    }
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg = resolve(&args)?;
    let scene = match (&args.det, &cfg.scene) {
        (Some(det), _) => bare_scene(det, args.width, args.height)?,
        (None, Some(dir)) => SceneDir::open(dir)?,
        (None, None) => bail!("no input: pass --scene DIR or --det FILE"),
    };
    let out = match &cfg.out {
        Some(p) => p.clone(),
        None if args.det.is_none() => scene.root.join("results.txt"),
        None => bail!("--det needs --out"),
    };
    let mut decoder = match cfg.detector {
        DetectorMode::Decoder => Some(DecoderDetector::new(&mut cfg, &scene)?),
        DetectorMode::Heatmaps => None,
    };
    print!("{}", cfg.to_text());

    let mut tracker = Tracker::new(cfg.tracker.clone())?;
    let mut rows = Vec::new();
    for frame in 1..=scene.num_frames() as u32 {
        let dets = match decoder.as_mut() {
            Some(d) => d.detect(&cfg, &scene, frame)?,
            None => scene.detection_set(frame, &cfg.targets)?,
        };
        tracker.step(&dets)?;
        rows.extend(track_rows(frame, &tracker.outputs()));
    }
    write_mot_file(&out, &rows)?;
    eprintln!(
        "tracked {} frames, {} result rows written to {}",
        scene.num_frames(),
        rows.len(),
        out.display()
    );
    Ok(())
}
