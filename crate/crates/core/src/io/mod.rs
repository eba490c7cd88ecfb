//! File formats: MOTChallenge text rows, flat run configuration, scene
//! directories and PPM images.

mod config;
mod mot;
mod ppm;
mod scene;

pub use config::{DetectorMode, RunConfig};
pub use mot::{format_mot, group_frames, parse_mot, read_mot_file, write_mot_file, MotRow};
pub use ppm::{id_color, Canvas, Rgb};
pub use scene::{
    detection_rows, gt_rows, parse_scene_config, scene_config_text, set_scene_key, write_scene,
    SceneDir, SceneWriteOptions, DET_FILE, FEATURE_DIR, FLOW_DIR, GT_FILE, HEATMAP_DIR,
    SCENE_CONFIG_FILE,
};

use crate::error::{invalid, Result};
use crate::metrics::{LabeledBox, Sequence};
use crate::tracker::TrackOutput;

/// Builds an evaluation sequence. Ground-truth rows with `conf == 0` mark
/// regions to ignore rather than objects to find.
pub fn sequence_from_mot(name: &str, gt: &[MotRow], hyp: &[MotRow]) -> Result<Sequence> {
    let frames = gt
        .iter()
        .chain(hyp)
        .map(|r| r.frame as usize)
        .max()
        .unwrap_or(0);
    let mut seq = Sequence {
        name: name.to_string(),
        gt: vec![Vec::new(); frames],
        ignored: vec![Vec::new(); frames],
        hyp: vec![Vec::new(); frames],
    };
    for (kind, rows) in [("gt", gt), ("result", hyp)] {
        for (i, r) in rows.iter().enumerate() {
            if r.id < 0 {
                return Err(invalid(format!(
                    "{name}: {kind} row {} has negative id {}",
                    i + 1,
                    r.id
                )));
            }
            let t = r.frame as usize - 1;
            let b = LabeledBox {
                id: r.id as u64,
                bbox: r.bbox(),
            };
            match kind {
                "gt" if r.conf == 0.0 => seq.ignored[t].push(b.bbox),
                "gt" => seq.gt[t].push(b),
                _ => seq.hyp[t].push(b),
            }
        }
    }
    Ok(seq)
}

/// Result rows for one frame of tracker output.
pub fn track_rows(frame: u32, tracks: &[TrackOutput]) -> Vec<MotRow> {
    tracks
        .iter()
        .map(|t| MotRow::result(frame, t.id as i64, &t.bbox, t.score))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_sequence;

    #[test]
    fn ignored_rows_and_evaluation() {
        let gt = parse_mot(
            "1,1,0,0,10,20,1,0,1\n2,1,1,0,10,20,1,0,1\n2,2,50,50,10,20,0,0,0\n".as_bytes(),
            "gt",
        )
        .unwrap();
        let hyp = parse_mot(
            "1,5,0,0,10,20,0.9,-1,-1,-1\n2,5,1,0,10,20,0.9,-1,-1,-1\n2,6,50,50,10,20,0.9,-1,-1,-1\n"
                .as_bytes(),
            "res",
        )
        .unwrap();
        let seq = sequence_from_mot("s", &gt, &hyp).unwrap();
        assert_eq!(seq.ignored[1].len(), 1);
        let m = evaluate_sequence(&seq, 0.5).unwrap();
        assert_eq!(m.mota, 1.0);
        assert_eq!(m.fp(), 0);
    }

    #[test]
    fn negative_ids_rejected() {
        let det = parse_mot("1,-1,0,0,10,20,0.9".as_bytes(), "det").unwrap();
        assert!(sequence_from_mot("s", &[], &det).is_err());
    }
}
