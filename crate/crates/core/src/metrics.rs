//! CLEAR-MOT and identity metrics.
//!
//! Per frame, ground truth and hypotheses are matched on `1 − IoU` with an
//! IoU gate; a pairing from an earlier frame is kept while it still clears
//! the gate. Identity measures come from one global id-to-id assignment
//! that maximizes the number of matched detections.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::assignment::{self, CostMatrix};
use crate::error::{invalid, Result};
use crate::tracker::BBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Coverage at or above which a trajectory is mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage at or below which a trajectory is mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

/// Cost given to pairs that fail the gate; large enough that the solver
/// always prefers one more admissible pair.
const GATED: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub id: u64,
    pub bbox: BBox,
}

/// One sequence: `gt[t]`, `ignored[t]` and `hyp[t]` hold frame `t + 1`.
/// Shorter vectors are padded with empty frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub gt: Vec<Vec<LabeledBox>>,
    /// Regions where unmatched hypotheses are not counted as false positives.
    pub ignored: Vec<Vec<BBox>>,
    pub hyp: Vec<Vec<LabeledBox>>,
}

impl Sequence {
    pub fn num_frames(&self) -> usize {
        self.gt.len().max(self.hyp.len()).max(self.ignored.len())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counts {
    pub num_gt: usize,
    pub num_hyp: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub idtp: usize,
    pub trajectories: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub iou_sum: f64,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.num_gt += o.num_gt;
        self.num_hyp += o.num_hyp;
        self.matches += o.matches;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.idsw += o.idsw;
        self.idtp += o.idtp;
        self.trajectories += o.trajectories;
        self.mostly_tracked += o.mostly_tracked;
        self.mostly_lost += o.mostly_lost;
        self.iou_sum += o.iou_sum;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub recall: f64,
    pub precision: f64,
    /// Fraction of trajectories mostly tracked.
    pub mt: f64,
    /// Fraction of trajectories mostly lost.
    pub ml: f64,
    pub counts: Counts,
}

impl Summary {
    fn from_counts(c: Counts) -> Self {
        let ratio = |num: f64, den: usize, empty: f64| if den == 0 { empty } else { num / den as f64 };
        let errors = (c.fp + c.fn_ + c.idsw) as f64;
        Self {
            mota: if c.num_gt == 0 {
                if errors == 0.0 {
                    1.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                1.0 - errors / c.num_gt as f64
            },
            motp: ratio(c.iou_sum, c.matches, 0.0),
            idf1: ratio(2.0 * c.idtp as f64, c.num_gt + c.num_hyp, 1.0),
            idp: ratio(c.idtp as f64, c.num_hyp, 1.0),
            idr: ratio(c.idtp as f64, c.num_gt, 1.0),
            recall: ratio(c.matches as f64, c.num_gt, 1.0),
            precision: ratio(c.matches as f64, c.num_hyp, 1.0),
            mt: ratio(c.mostly_tracked as f64, c.trajectories, 0.0),
            ml: ratio(c.mostly_lost as f64, c.trajectories, 0.0),
            counts: c,
        }
    }

    pub fn fp(&self) -> usize {
        self.counts.fp
    }

    pub fn fn_(&self) -> usize {
        self.counts.fn_
    }

    pub fn idsw(&self) -> usize {
        self.counts.idsw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub overall: Summary,
    pub sequences: Vec<(String, Summary)>,
}

impl EvalReport {
    /// Human-readable table, one row per sequence plus the overall row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>7} {:>7} {:>6} {:>6} {:>6} {:>6} {:>5}",
            "sequence", "MOTA", "IDF1", "MT", "ML", "FP", "FN", "IDSW"
        );
        let rows = self
            .sequences
            .iter()
            .map(|(n, m)| (n.as_str(), m))
            .chain(std::iter::once(("OVERALL", &self.overall)));
        for (name, m) in rows {
            let _ = writeln!(
                s,
                "{:<16} {:>6.1}% {:>6.1}% {:>5.1}% {:>5.1}% {:>6} {:>6} {:>5}",
                name,
                100.0 * m.mota,
                100.0 * m.idf1,
                100.0 * m.mt,
                100.0 * m.ml,
                m.counts.fp,
                m.counts.fn_,
                m.counts.idsw
            );
        }
        s
    }

    /// Machine-readable `key=value` lines for the overall summary.
    pub fn to_key_values(&self) -> String {
        let m = &self.overall;
        let c = &m.counts;
        let mut s = String::new();
        let pairs: [(&str, String); 17] = [
            ("iou_threshold", self.iou_threshold.to_string()),
            ("mota", m.mota.to_string()),
            ("motp", m.motp.to_string()),
            ("idf1", m.idf1.to_string()),
            ("idp", m.idp.to_string()),
            ("idr", m.idr.to_string()),
            ("recall", m.recall.to_string()),
            ("precision", m.precision.to_string()),
            ("mt", m.mt.to_string()),
            ("ml", m.ml.to_string()),
            ("fp", c.fp.to_string()),
            ("fn", c.fn_.to_string()),
            ("idsw", c.idsw.to_string()),
            ("num_gt", c.num_gt.to_string()),
            ("num_hyp", c.num_hyp.to_string()),
            ("idtp", c.idtp.to_string()),
            ("trajectories", c.trajectories.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

fn validate(seq: &Sequence) -> Result<()> {
    let check = |kind: &str, frames: &[Vec<LabeledBox>]| -> Result<()> {
        for (t, frame) in frames.iter().enumerate() {
            let mut ids = BTreeSet::new();
            for (row, b) in frame.iter().enumerate() {
                let ok = [b.bbox.cx, b.bbox.cy, b.bbox.w, b.bbox.h]
                    .iter()
                    .all(|v| v.is_finite())
                    && b.bbox.w > 0.0
                    && b.bbox.h > 0.0;
                if !ok {
                    return Err(invalid(format!(
                        "{}: {kind} frame {} row {}: box must be finite with positive area",
                        seq.name,
                        t + 1,
                        row + 1
                    )));
                }
                if !ids.insert(b.id) {
                    return Err(invalid(format!(
                        "{}: {kind} frame {} row {}: duplicate id {}",
                        seq.name,
                        t + 1,
                        row + 1,
                        b.id
                    )));
                }
            }
        }
        Ok(())
    };
    check("gt", &seq.gt)?;
    check("hyp", &seq.hyp)
}

fn frame_of<T>(frames: &[Vec<T>], t: usize) -> &[T] {
    frames.get(t).map_or(&[], Vec::as_slice)
}

/// Scores one sequence.
pub fn evaluate_sequence(seq: &Sequence, iou_threshold: f64) -> Result<Summary> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(invalid(format!("iou threshold {iou_threshold} outside (0,1]")));
    }
    validate(seq)?;
    let mut c = Counts::default();
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    // gt id -> (frames present, frames matched)
    let mut coverage: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    // (gt id, hyp id) -> frames overlapping at the gate
    let mut overlap: HashMap<(u64, u64), usize> = HashMap::new();
    let mut gt_total: HashMap<u64, usize> = HashMap::new();
    let mut hyp_total: BTreeMap<u64, usize> = BTreeMap::new();

    for t in 0..seq.num_frames() {
        let gts = frame_of(&seq.gt, t);
        let ignored = frame_of(&seq.ignored, t);
        let hyps: Vec<&LabeledBox> = frame_of(&seq.hyp, t)
            .iter()
            .filter(|h| {
                let covers_gt = gts.iter().any(|g| g.bbox.iou(&h.bbox) >= iou_threshold);
                covers_gt || !ignored.iter().any(|r| r.iou(&h.bbox) >= iou_threshold)
            })
            .collect();
        c.num_gt += gts.len();
        c.num_hyp += hyps.len();
        for g in gts {
            coverage.entry(g.id).or_default().0 += 1;
            *gt_total.entry(g.id).or_default() += 1;
            for h in &hyps {
                if g.bbox.iou(&h.bbox) >= iou_threshold {
                    *overlap.entry((g.id, h.id)).or_default() += 1;
                }
            }
        }
        for h in &hyps {
            *hyp_total.entry(h.id).or_default() += 1;
        }

        let mut gt_used = vec![false; gts.len()];
        let mut hyp_used = vec![false; hyps.len()];
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for (gi, g) in gts.iter().enumerate() {
            let Some(&hid) = last_match.get(&g.id) else {
                continue;
            };
            if let Some(hi) = hyps.iter().position(|h| h.id == hid) {
                let iou = g.bbox.iou(&hyps[hi].bbox);
                if iou >= iou_threshold && !hyp_used[hi] {
                    gt_used[gi] = true;
                    hyp_used[hi] = true;
                    pairs.push((gi, hi, iou));
                }
            }
        }

        let free_g: Vec<usize> = (0..gts.len()).filter(|&i| !gt_used[i]).collect();
        let free_h: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_used[i]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let cost = CostMatrix::from_fn(free_g.len(), free_h.len(), |r, k| {
                let iou = gts[free_g[r]].bbox.iou(&hyps[free_h[k]].bbox);
                if iou >= iou_threshold {
                    1.0 - iou
                } else {
                    GATED
                }
            });
            for (r, k) in assignment::solve(&cost)? {
                let (gi, hi) = (free_g[r], free_h[k]);
                let iou = gts[gi].bbox.iou(&hyps[hi].bbox);
                if iou >= iou_threshold {
                    gt_used[gi] = true;
                    hyp_used[hi] = true;
                    pairs.push((gi, hi, iou));
                }
            }
        }

        for &(gi, hi, iou) in &pairs {
            let (gid, hid) = (gts[gi].id, hyps[hi].id);
            if let Some(prev) = last_match.insert(gid, hid) {
                if prev != hid {
                    c.idsw += 1;
                }
            }
            coverage.entry(gid).or_default().1 += 1;
            c.iou_sum += iou;
        }
        c.matches += pairs.len();
        c.fn_ += gts.len() - pairs.len();
        c.fp += hyps.len() - pairs.len();
    }

    c.trajectories = coverage.len();
    for &(present, matched) in coverage.values() {
        let ratio = matched as f64 / present as f64;
        if ratio >= MOSTLY_TRACKED {
            c.mostly_tracked += 1;
        }
        if ratio <= MOSTLY_LOST {
            c.mostly_lost += 1;
        }
    }
    c.idtp = identity_true_positives(&gt_total, &hyp_total, &overlap)?;
    Ok(Summary::from_counts(c))
}

/// Best total overlap over one-to-one mappings of gt ids to hyp ids.
fn identity_true_positives(
    gt_total: &HashMap<u64, usize>,
    hyp_total: &BTreeMap<u64, usize>,
    overlap: &HashMap<(u64, u64), usize>,
) -> Result<usize> {
    if overlap.is_empty() {
        return Ok(0);
    }
    let mut gids: Vec<u64> = gt_total.keys().copied().collect();
    gids.sort_unstable();
    let hids: Vec<u64> = hyp_total.keys().copied().collect();
    let cost = CostMatrix::from_fn(gids.len(), hids.len(), |r, k| {
        -(overlap.get(&(gids[r], hids[k])).copied().unwrap_or(0) as f64)
    });
    Ok(assignment::solve(&cost)?
        .into_iter()
        .map(|(r, k)| overlap.get(&(gids[r], hids[k])).copied().unwrap_or(0))
        .sum())
}

/// Scores several sequences; the overall summary pools their counts.
pub fn evaluate(sequences: &[Sequence], iou_threshold: f64) -> Result<EvalReport> {
    let mut total = Counts::default();
    let mut per = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let m = evaluate_sequence(seq, iou_threshold)?;
        total.add(&m.counts);
        per.push((seq.name.clone(), m));
    }
    Ok(EvalReport {
        iou_threshold,
        overall: Summary::from_counts(total),
        sequences: per,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lb(id: u64, x: f64, y: f64) -> LabeledBox {
        LabeledBox {
            id,
            bbox: BBox::from_tlwh(x, y, 10.0, 20.0),
        }
    }

    fn two_objects(frames: usize) -> Vec<Vec<LabeledBox>> {
        (0..frames)
            .map(|t| vec![lb(1, 10.0 + t as f64, 10.0), lb(2, 60.0, 40.0 + t as f64)])
            .collect()
    }

    fn seq(gt: Vec<Vec<LabeledBox>>, hyp: Vec<Vec<LabeledBox>>) -> Sequence {
        Sequence {
            name: "s".into(),
            gt,
            ignored: Vec::new(),
            hyp,
        }
    }

    #[test]
    fn identical_hypotheses_are_perfect() {
        let gt = two_objects(5);
        let m = evaluate_sequence(&seq(gt.clone(), gt), 0.5).unwrap();
        assert_eq!(m.mota, 1.0);
        assert_eq!(m.idf1, 1.0);
        assert_eq!(m.idsw(), 0);
        assert_eq!(m.mt, 1.0);
        assert_eq!(m.motp, 1.0);
    }

    #[test]
    fn empty_hypotheses() {
        let m = evaluate_sequence(&seq(two_objects(4), vec![]), 0.5).unwrap();
        assert_eq!(m.mota, 0.0);
        assert_eq!(m.idf1, 0.0);
        assert_eq!(m.fn_(), 8);
        assert_eq!(m.ml, 1.0);
    }

    #[test]
    fn single_id_change_counts_one_switch() {
        let gt = two_objects(4);
        let mut hyp = gt.clone();
        for frame in hyp.iter_mut().skip(2) {
            frame[0].id = 7;
        }
        let m = evaluate_sequence(&seq(gt, hyp), 0.5).unwrap();
        assert_eq!(m.idsw(), 1);
        assert_eq!(m.fp() + m.fn_(), 0);
        assert!((m.mota - 0.875).abs() < 1e-15);
        // identity: object 1 keeps 2 of 4 frames under its best id
        assert_eq!(m.counts.idtp, 6);
        assert!((m.idf1 - 12.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn continuity_keeps_existing_pair() {
        // frame 2: hyp 20 overlaps gt 1 slightly better than the incumbent
        // hyp 10, but the incumbent still clears the gate and is kept
        let gt = vec![vec![lb(1, 0.0, 0.0)], vec![lb(1, 0.0, 0.0)]];
        let hyp = vec![
            vec![lb(10, 0.0, 0.0)],
            vec![lb(10, 2.0, 0.0), lb(20, 1.0, 0.0)],
        ];
        let m = evaluate_sequence(&seq(gt, hyp), 0.5).unwrap();
        assert_eq!(m.idsw(), 0);
        assert_eq!(m.fp(), 1);
    }

    #[test]
    fn ignored_regions_absorb_hypotheses() {
        let mut s = seq(vec![vec![]], vec![vec![lb(5, 0.0, 0.0), lb(6, 50.0, 50.0)]]);
        s.ignored = vec![vec![BBox::from_tlwh(0.0, 0.0, 10.0, 20.0)]];
        let m = evaluate_sequence(&s, 0.5).unwrap();
        assert_eq!(m.fp(), 1);
        assert_eq!(m.counts.num_hyp, 1);
    }

    #[test]
    fn malformed_rows_rejected() {
        let mut bad = two_objects(2);
        bad[1][1].bbox.w = 0.0;
        let err = evaluate_sequence(&seq(bad, vec![]), 0.5).unwrap_err();
        assert!(err.to_string().contains("frame 2 row 2"), "{err}");
        let dup = vec![vec![lb(1, 0.0, 0.0), lb(1, 30.0, 0.0)]];
        assert!(evaluate_sequence(&seq(dup, vec![]), 0.5).is_err());
        assert!(evaluate_sequence(&seq(vec![], vec![]), 0.0).is_err());
    }

    #[test]
    fn pooled_report() {
        let gt = two_objects(4);
        let a = seq(gt.clone(), gt.clone());
        let b = seq(gt, vec![]);
        let r = evaluate(&[a, b], 0.5).unwrap();
        assert!((r.overall.mota - 0.5).abs() < 1e-15);
        assert!(r.to_key_values().contains("mota=0.5\n"));
        assert!(r.to_text().contains("OVERALL"));
    }

    fn scene() -> impl Strategy<Value = Vec<Vec<LabeledBox>>> {
        (1usize..8, 1usize..5).prop_map(|(frames, objects)| {
            (0..frames)
                .map(|t| {
                    (0..objects)
                        .map(|k| lb(k as u64 + 1, 30.0 * k as f64 + t as f64, 5.0 * t as f64))
                        .collect()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn relabeling_hypotheses_is_invisible(gt in scene(), offset in 1u64..1000, jitter in 0.0f64..4.0,
                                              drop in 0usize..3) {
            let hyp: Vec<Vec<LabeledBox>> = gt.iter().enumerate().map(|(t, f)| {
                f.iter().enumerate().filter(|(k, _)| (t + k) % 3 != drop).map(|(_, b)| LabeledBox {
                    id: b.id, bbox: BBox { cx: b.bbox.cx + jitter, ..b.bbox } }).collect()
            }).collect();
            let relabeled: Vec<Vec<LabeledBox>> = hyp.iter().map(|f| f.iter()
                .map(|b| LabeledBox { id: (b.id * 7919) ^ offset, ..*b }).collect()).collect();
            let a = evaluate_sequence(&seq(gt.clone(), hyp), 0.5).unwrap();
            let b = evaluate_sequence(&seq(gt, relabeled), 0.5).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn false_positives_lower_mota(gt in scene(), extra in 1usize..5) {
            let base = evaluate_sequence(&seq(gt.clone(), gt.clone()), 0.5).unwrap();
            let mut hyp = gt.clone();
            for k in 0..extra {
                hyp[0].push(lb(900 + k as u64, 500.0 + 20.0 * k as f64, 500.0));
            }
            let worse = evaluate_sequence(&seq(gt, hyp), 0.5).unwrap();
            prop_assert!(worse.mota < base.mota);
            prop_assert!(worse.mota <= 1.0);
            prop_assert!((0.0..=1.0).contains(&worse.idf1));
        }
    }
}
