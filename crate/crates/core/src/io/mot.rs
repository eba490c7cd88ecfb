use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{file_error, Error, Result};
use crate::tracker::BBox;

/// One line of a MOTChallenge-style text file.
///
/// Field order is `frame, id, bb_left, bb_top, bb_width, bb_height, conf,
/// class, visibility`, followed on output by a trailing `-1`. Detections and
/// results use `-1` for the fields they lack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub conf: f64,
    pub class_id: i64,
    pub visibility: f64,
}

impl MotRow {
    pub fn bbox(&self) -> BBox {
        BBox::from_tlwh(self.left, self.top, self.width, self.height)
    }

    /// A result row: class and visibility are unset.
    pub fn result(frame: u32, id: i64, bbox: &BBox, conf: f64) -> Self {
        Self {
            frame,
            id,
            left: bbox.left(),
            top: bbox.top(),
            width: bbox.w,
            height: bbox.h,
            conf,
            class_id: -1,
            visibility: -1.0,
        }
    }
}

fn parse_line(text: &str) -> std::result::Result<MotRow, String> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if !(7..=10).contains(&fields.len()) {
        return Err(format!("expected 7 to 10 fields, found {}", fields.len()));
    }
    let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v: f64 = fields[i]
            .parse()
            .map_err(|_| format!("{name}: cannot parse {:?}", fields[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name}: not finite"))
        }
    };
    let int = |i: usize, name: &str| -> std::result::Result<i64, String> {
        let v = num(i, name)?;
        if v.fract() == 0.0 && v.abs() < 2f64.powi(53) {
            Ok(v as i64)
        } else {
            Err(format!("{name}: {:?} is not an integer", fields[i]))
        }
    };
    let frame = int(0, "frame")?;
    if frame < 1 || frame > u32::MAX as i64 {
        return Err(format!("frame {frame} must be at least 1"));
    }
    let row = MotRow {
        frame: frame as u32,
        id: int(1, "id")?,
        left: num(2, "bb_left")?,
        top: num(3, "bb_top")?,
        width: num(4, "bb_width")?,
        height: num(5, "bb_height")?,
        conf: num(6, "conf")?,
        class_id: if fields.len() > 7 { int(7, "class")? } else { -1 },
        visibility: if fields.len() > 8 { num(8, "visibility")? } else { -1.0 },
    };
    if row.width <= 0.0 || row.height <= 0.0 {
        return Err(format!(
            "box size {}x{} must be positive",
            row.width, row.height
        ));
    }
    Ok(row)
}

/// Parses rows in file order; blank lines are skipped. `source` names the
/// input in error messages.
pub fn parse_mot<R: Read>(input: R, source: &str) -> Result<Vec<MotRow>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        rows.push(parse_line(text).map_err(|message| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message,
        })?);
    }
    Ok(rows)
}

pub fn read_mot_file(path: impl AsRef<Path>) -> Result<Vec<MotRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(file_error(path))?;
    parse_mot(file, &path.display().to_string())
}

/// Groups rows by frame in ascending order, keeping file order within a
/// frame.
pub fn group_frames(rows: &[MotRow]) -> Vec<(u32, Vec<MotRow>)> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.frame);
    let mut out: Vec<(u32, Vec<MotRow>)> = Vec::new();
    for r in sorted {
        match out.last_mut() {
            Some((f, v)) if *f == r.frame => v.push(r),
            _ => out.push((r.frame, vec![r])),
        }
    }
    out
}

pub fn format_mot(rows: &[MotRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},-1",
            r.frame, r.id, r.left, r.top, r.width, r.height, r.conf, r.class_id, r.visibility
        );
    }
    s
}

pub fn write_mot_file(path: impl AsRef<Path>, rows: &[MotRow]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_mot(rows)).map_err(file_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn result_row_fields() {
        let rows = parse_mot("1,1,10,20,30,40,1,-1,-1,-1\n".as_bytes(), "x").unwrap();
        assert_eq!(
            rows,
            vec![MotRow {
                frame: 1,
                id: 1,
                left: 10.0,
                top: 20.0,
                width: 30.0,
                height: 40.0,
                conf: 1.0,
                class_id: -1,
                visibility: -1.0,
            }]
        );
        assert_eq!(format_mot(&rows), "1,1,10,20,30,40,1,-1,-1,-1\n");
    }

    #[test]
    fn gt_row_with_nine_fields() {
        let r = parse_mot("3, 7, 1.5, 2, 3, 4, 0, 1, 0.25".as_bytes(), "gt").unwrap()[0];
        assert_eq!((r.frame, r.id, r.class_id, r.visibility, r.conf), (3, 7, 1, 0.25, 0.0));
    }

    #[test]
    fn empty_input() {
        assert!(parse_mot("".as_bytes(), "x").unwrap().is_empty());
        assert!(parse_mot("\n  \n".as_bytes(), "x").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "1,1,0,0,5,5,1\n\n2,1,0,0,-5,5,1\n";
        let err = parse_mot(text.as_bytes(), "gt.txt").unwrap_err();
        assert!(err.to_string().starts_with("gt.txt:3:"), "{err}");
        for bad in ["0,1,0,0,5,5,1", "1,1,0,0,5,5", "1,x,0,0,5,5,1", "1.5,1,0,0,5,5,1", "1,1,0,0,5,nan,1"] {
            assert!(parse_mot(bad.as_bytes(), "x").is_err(), "{bad}");
        }
    }

    #[test]
    fn grouping_sorts_frames() {
        let text = "2,1,0,0,5,5,1\n1,2,0,0,5,5,1\n2,3,0,0,5,5,1\n";
        let rows = parse_mot(text.as_bytes(), "x").unwrap();
        let g = group_frames(&rows);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].0, 1);
        assert_eq!(g[1].1.iter().map(|r| r.id).collect::<Vec<_>>(), vec![1, 3]);
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(rows in prop::collection::vec(
            (1u32..500, -1i64..50, -100.0f64..500.0, -100.0f64..500.0, 0.01f64..200.0,
             0.01f64..200.0, -1.0f64..1.0, -1i64..4, -1.0f64..1.0), 0..20)) {
            let rows: Vec<MotRow> = rows.into_iter().map(|(frame, id, left, top, width, height, conf, class_id, visibility)|
                MotRow { frame, id, left, top, width, height, conf, class_id, visibility }).collect();
            let back = parse_mot(format_mot(&rows).as_bytes(), "x").unwrap();
            prop_assert_eq!(back, rows);
        }
    }
}
