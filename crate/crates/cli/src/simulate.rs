use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use pixtrack::io::{parse_scene_config, set_scene_key, write_scene, SceneWriteOptions};
use pixtrack::simulator::{generate, SceneConfig};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    /// Scene file (`key = value` lines) applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// constant_velocity, sinusoidal or crossing_pairs.
    #[arg(long)]
    motion: Option<String>,
    /// Standard deviation of additive heatmap noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Probability of missing a visible object in a frame.
    #[arg(long)]
    dropout: Option<f64>,
    /// Mean number of clutter detections per frame.
    #[arg(long)]
    clutter: Option<f64>,
    /// Extra scene settings, e.g. `--set occlusion=1,40,10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also store detection heatmaps and ground-truth flow per frame.
    #[arg(long)]
    blobs: bool,
    /// Also store synthetic feature maps per frame.
    #[arg(long)]
    features: bool,
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_scene_config(&text, &p.display().to_string())?
        }
        None => SceneConfig::default(),
    };
    let flags = [
        ("seed", args.seed.map(|v| v.to_string())),
        ("num_objects", args.objects.map(|v| v.to_string())),
        ("frames", args.frames.map(|v| v.to_string())),
        ("width", args.width.map(|v| v.to_string())),
        ("height", args.height.map(|v| v.to_string())),
        ("motion", args.motion.clone()),
        ("heatmap_noise_std", args.noise.map(|v| v.to_string())),
        ("dropout", args.dropout.map(|v| v.to_string())),
        ("clutter_rate", args.clutter.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            set_scene_key(&mut cfg, k, &v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        set_scene_key(&mut cfg, k, v)?;
    }
    let truth = generate(&cfg)?;
    let opts = SceneWriteOptions {
        blobs: args.blobs,
        features: args.features,
    };
    write_scene(&args.out, &truth, opts)?;
    eprintln!(
        "wrote {} frames of {} objects to {}",
        truth.num_frames(),
        truth.objects.len(),
        args.out.display()
    );
    Ok(())
}
