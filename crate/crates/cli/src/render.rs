use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use pixtrack::io::{group_frames, id_color, read_mot_file, Canvas, MotRow, SceneDir};
use pixtrack::targets::TargetConfig;

const HEATMAP_COLOR: [u8; 3] = [255, 255, 255];
const GT_COLOR: [u8; 3] = [110, 110, 110];

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scene directory written by `simulate`.
    #[arg(long)]
    scene: PathBuf,
    /// Result file whose boxes are drawn in per-id colors.
    #[arg(long)]
    res: Option<PathBuf>,
    /// Output directory for one PPM image per frame.
    #[arg(long)]
    out: PathBuf,
    /// Draw every n-th frame only.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    every: u32,
}

fn rows_by_frame(rows: &[MotRow], frames: usize) -> Vec<Vec<MotRow>> {
    let mut out = vec![Vec::new(); frames];
    for (f, r) in group_frames(rows) {
        if let Some(slot) = out.get_mut((f as usize).wrapping_sub(1)) {
            *slot = r;
        }
    }
    out
}

pub fn run(args: Args) -> Result<()> {
    let scene = SceneDir::open(&args.scene)?;
    let n = scene.num_frames();
    let gt = rows_by_frame(&scene.gt, n);
    let res = match &args.res {
        Some(p) => rows_by_frame(&read_mot_file(p)?, n),
        None => vec![Vec::new(); n],
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (h, w) = scene.frame_dims();
    let targets = TargetConfig::default();
    let mut written = 0;
    for frame in (1..=n as u32).step_by(args.every as usize) {
        let i = frame as usize - 1;
        let mut canvas = Canvas::new(h, w);
        for map in scene.heatmaps(frame, &targets)? {
            canvas.add_heatmap(&map, HEATMAP_COLOR)?;
        }
        for r in gt[i].iter().filter(|r| r.conf > 0.0) {
            canvas.draw_box(&r.bbox(), GT_COLOR);
        }
        for r in &res[i] {
            canvas.draw_box(&r.bbox(), id_color(r.id.max(0) as u64));
        }
        canvas.write_ppm(args.out.join(format!("{frame:06}.ppm")))?;
        written += 1;
    }
    eprintln!("wrote {written} images to {}", args.out.display());
    Ok(())
}
