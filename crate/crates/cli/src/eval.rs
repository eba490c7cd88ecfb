use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pixtrack::io::{read_mot_file, sequence_from_mot};
use pixtrack::metrics::{evaluate, DEFAULT_IOU_THRESHOLD};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Ground-truth file; repeat to score several sequences.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// Result file, paired with each --gt in order.
    #[arg(long, required = true)]
    res: Vec<PathBuf>,
    /// Minimum IoU for a match.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou: f64,
    /// Write the text report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `key=value` summary lines here.
    #[arg(long)]
    kv: Option<PathBuf>,
}

/// Parent directory name for `<seq>/gt.txt` layouts, else the file stem.
fn sequence_name(gt: &Path) -> String {
    let stem = gt.file_stem().map(|s| s.to_string_lossy().into_owned());
    match (stem.as_deref(), gt.parent().and_then(Path::file_name)) {
        (Some("gt"), Some(dir)) => dir.to_string_lossy().into_owned(),
        (Some(s), _) => s.to_string(),
        _ => gt.display().to_string(),
    }
}

pub fn run(args: Args) -> Result<()> {
    if args.gt.len() != args.res.len() {
        bail!(
            "got {} --gt files but {} --res files",
            args.gt.len(),
            args.res.len()
        );
    }
    let mut seqs = Vec::new();
    for (gt, res) in args.gt.iter().zip(&args.res) {
        let g = read_mot_file(gt)?;
        let r = read_mot_file(res)?;
        seqs.push(sequence_from_mot(&sequence_name(gt), &g, &r)?);
    }
    let report = evaluate(&seqs, args.iou)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(p) = &args.out {
        fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.kv {
        fs::write(p, report.to_key_values()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
