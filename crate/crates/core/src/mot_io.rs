//! MOT-style comma-separated text formats.
//!
//! Three line layouts are used, all one object per line:
//!
//! * detections: `frame,id,x,y,w,h,score,class,visibility` (the id is
//!   ignored on input and written as -1),
//! * ground truth: `frame,id,x,y,w,h,active,class,visibility` (the active
//!   flag is ignored on input and written as 1),
//! * results: `frame,id,x,y,w,h,score,-1,-1,-1`.
//!
//! Writers emit ascending (frame, then input order / id), boxes with two
//! decimals, scores with six; output is byte-deterministic.

use std::collections::BTreeMap;
use std::fmt;

use crate::bbox::BBox;
use crate::metrics::{FrameAnnotations, GtEntry, OutputBox, TrackOutput};
use crate::tracker::Detection;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub field: &'static str,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: field '{}': {}",
            self.line, self.field, self.msg
        )
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, field: &'static str, msg: impl Into<String>) -> ParseError {
    ParseError {
        line,
        field,
        msg: msg.into(),
    }
}

struct Line<'a> {
    no: usize,
    fields: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn f32(&self, idx: usize, field: &'static str) -> Result<f32, ParseError> {
        let raw = self.fields[idx];
        let v: f32 = raw
            .trim()
            .parse()
            .map_err(|_| err(self.no, field, format!("'{raw}' is not a number")))?;
        if !v.is_finite() {
            return Err(err(self.no, field, "value must be finite"));
        }
        Ok(v)
    }

    fn u32(&self, idx: usize, field: &'static str) -> Result<u32, ParseError> {
        let raw = self.fields[idx];
        raw.trim().parse().map_err(|_| {
            err(
                self.no,
                field,
                format!("'{raw}' is not a non-negative integer"),
            )
        })
    }

    fn i32(&self, idx: usize, field: &'static str) -> Result<i32, ParseError> {
        let raw = self.fields[idx];
        raw.trim()
            .parse()
            .map_err(|_| err(self.no, field, format!("'{raw}' is not an integer")))
    }

    fn bbox(&self) -> Result<BBox, ParseError> {
        let x = self.f32(2, "x")?;
        let y = self.f32(3, "y")?;
        let w = self.f32(4, "w")?;
        let h = self.f32(5, "h")?;
        if w <= 0.0 {
            return Err(err(self.no, "w", "width must be positive"));
        }
        if h <= 0.0 {
            return Err(err(self.no, "h", "height must be positive"));
        }
        Ok(BBox::new(x, y, w, h))
    }

    fn score(&self, idx: usize) -> Result<f32, ParseError> {
        let s = self.f32(idx, "score")?;
        if !(0.0..=1.0).contains(&s) {
            return Err(err(self.no, "score", format!("{s} outside [0,1]")));
        }
        Ok(s)
    }
}

fn lines_of(text: &str, expected_fields: usize) -> Result<Vec<Line<'_>>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != expected_fields {
            return Err(err(
                no,
                "line",
                format!("expected {expected_fields} fields, got {}", fields.len()),
            ));
        }
        out.push(Line { no, fields });
    }
    Ok(out)
}

/// Parses a detection file; the id column is ignored.
pub fn parse_detections(text: &str) -> Result<BTreeMap<u32, Vec<Detection>>, ParseError> {
    let mut out: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for line in lines_of(text, 9)? {
        let frame = line.u32(0, "frame")?;
        line.i32(1, "id")?; // present but unused for detections
        let bbox = line.bbox()?;
        let score = line.score(6)?;
        let class_id = line.i32(7, "class")?;
        line.f32(8, "visibility")?;
        out.entry(frame).or_default().push(Detection {
            frame,
            bbox,
            score,
            class_id,
        });
    }
    Ok(out)
}

pub fn write_detections(dets: &BTreeMap<u32, Vec<Detection>>) -> String {
    let mut s = String::new();
    for (frame, list) in dets {
        for d in list {
            s.push_str(&format!(
                "{frame},-1,{:.2},{:.2},{:.2},{:.2},{:.6},{},-1\n",
                d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.score, d.class_id
            ));
        }
    }
    s
}

/// Parses a ground-truth file (ids are real object identities).
pub fn parse_ground_truth(text: &str) -> Result<FrameAnnotations, ParseError> {
    let mut gt = FrameAnnotations::default();
    for line in lines_of(text, 9)? {
        let frame = line.u32(0, "frame")?;
        let id = line.u32(1, "id")?;
        let bbox = line.bbox()?;
        line.f32(6, "active")?;
        let class_id = line.i32(7, "class")?;
        let visibility = line.f32(8, "visibility")?;
        if !(0.0..=1.0).contains(&visibility) {
            return Err(err(
                line.no,
                "visibility",
                format!("{visibility} outside [0,1]"),
            ));
        }
        gt.frames.entry(frame).or_default().push(GtEntry {
            id,
            bbox,
            class_id,
            visibility,
        });
    }
    Ok(gt)
}

pub fn write_ground_truth(gt: &FrameAnnotations) -> String {
    let mut s = String::new();
    for (frame, entries) in &gt.frames {
        for e in entries {
            s.push_str(&format!(
                "{frame},{},{:.2},{:.2},{:.2},{:.2},1,{},{:.2}\n",
                e.id, e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h, e.class_id, e.visibility
            ));
        }
    }
    s
}

/// Parses a tracker results file.
pub fn parse_results(text: &str) -> Result<TrackOutput, ParseError> {
    let mut out = TrackOutput::default();
    for line in lines_of(text, 10)? {
        let frame = line.u32(0, "frame")?;
        let id = line.u32(1, "id")?;
        let bbox = line.bbox()?;
        let score = line.score(6)?;
        for (idx, field) in [(7usize, "x3d"), (8, "y3d"), (9, "z3d")] {
            line.f32(idx, field)?;
        }
        out.frames
            .entry(frame)
            .or_default()
            .push(OutputBox { id, bbox, score });
    }
    Ok(out)
}

/// Writes tracker results, ordered by (frame, id).
pub fn write_results(out: &TrackOutput) -> String {
    let mut s = String::new();
    for (frame, boxes) in &out.frames {
        let mut sorted: Vec<&OutputBox> = boxes.iter().collect();
        sorted.sort_by_key(|b| b.id);
        for b in sorted {
            s.push_str(&format!(
                "{frame},{},{:.2},{:.2},{:.2},{:.2},{:.6},-1,-1,-1\n",
                b.id, b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h, b.score
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_line_maps_fields() {
        let dets = parse_detections("1,-1,10,20,30,40,0.9,1,1\n").unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[&1][0];
        assert_eq!(d.frame, 1);
        assert_eq!(d.bbox, BBox::new(10.0, 20.0, 30.0, 40.0));
        assert_eq!(d.score, 0.9);
        assert_eq!(d.class_id, 1);
    }

    #[test]
    fn empty_input_is_empty_output() {
        assert!(parse_detections("").unwrap().is_empty());
        assert!(parse_detections("\n\n").unwrap().is_empty());
        assert_eq!(write_detections(&BTreeMap::new()), "");
        assert_eq!(write_results(&TrackOutput::default()), "");
    }

    #[test]
    fn zero_width_rejected_with_location() {
        let e = parse_detections("1,-1,10,20,0,40,0.9,1,1\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert_eq!(e.field, "w");
        let e = parse_detections("1,-1,10,20,5,40,0.9,1,1\n2,-1,1,2,3,-4,0.9,1,1\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.field, "h");
    }

    #[test]
    fn malformed_lines_name_field_and_line() {
        let e = parse_detections("1,-1,10,20\n").unwrap_err();
        assert_eq!((e.line, e.field), (1, "line"));
        let e = parse_detections("x,-1,10,20,30,40,0.9,1,1\n").unwrap_err();
        assert_eq!((e.line, e.field), (1, "frame"));
        let e = parse_detections("1,-1,10,20,30,40,1.5,1,1\n").unwrap_err();
        assert_eq!((e.line, e.field), (1, "score"));
    }

    #[test]
    fn detections_sorted_by_frame() {
        let dets =
            parse_detections("3,-1,1,1,2,2,0.5,1,1\n1,-1,1,1,2,2,0.5,1,1\n2,-1,1,1,2,2,0.5,1,1\n")
                .unwrap();
        let frames: Vec<u32> = dets.keys().copied().collect();
        assert_eq!(frames, vec![1, 2, 3]);
    }

    #[test]
    fn results_round_trip() {
        let mut out = TrackOutput::default();
        out.frames.insert(
            1,
            vec![
                OutputBox {
                    id: 2,
                    bbox: BBox::new(1.25, 2.5, 3.0, 4.0),
                    score: 0.875,
                },
                OutputBox {
                    id: 1,
                    bbox: BBox::new(-3.5, 0.0, 5.0, 6.0),
                    score: 0.5,
                },
            ],
        );
        let text = write_results(&out);
        // Two tracks in one frame appear ordered by id.
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("1,1,"));
        assert!(lines[1].starts_with("1,2,"));
        let back = parse_results(&text).unwrap();
        let frame = &back.frames[&1];
        assert_eq!(frame.len(), 2);
        assert_eq!(frame[0].id, 1);
        assert!((frame[0].bbox.x - -3.5).abs() < 0.005);
        assert!((frame[1].score - 0.875).abs() < 1e-6);
    }

    #[test]
    fn ground_truth_round_trip() {
        let mut gt = FrameAnnotations::default();
        gt.frames.insert(
            4,
            vec![GtEntry {
                id: 9,
                bbox: BBox::new(10.0, 11.0, 12.0, 13.0),
                class_id: 1,
                visibility: 0.3,
            }],
        );
        let text = write_ground_truth(&gt);
        assert_eq!(text, "4,9,10.00,11.00,12.00,13.00,1,1,0.30\n");
        let back = parse_ground_truth(&text).unwrap();
        assert_eq!(back.frames[&4][0].id, 9);
        assert!((back.frames[&4][0].visibility - 0.3).abs() < 0.005);
    }

    #[test]
    fn writers_are_deterministic() {
        let dets = parse_detections("1,-1,10,20,30,40,0.9,1,1\n2,-1,5,6,7,8,0.4,1,1\n").unwrap();
        assert_eq!(write_detections(&dets), write_detections(&dets));
    }

    #[test]
    fn crlf_tolerated() {
        let dets = parse_detections("1,-1,10,20,30,40,0.9,1,1\r\n").unwrap();
        assert_eq!(dets[&1].len(), 1);
    }
}
