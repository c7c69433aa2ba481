//! YOLO detection and segmentation label lines.
//!
//! Detection: `class cx cy w h`. Segmentation: `class x1 y1 ... xn yn`.
//! Coordinates are normalized by the image size and printed with six decimals.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::labelgen::polygon::Polygon;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Detection,
    Segmentation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelShape {
    Box(BBox),
    Polygon(Polygon),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelEntry {
    pub class_id: u32,
    pub shape: LabelShape,
}

fn unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

pub fn to_yolo_detection_line(class_id: u32, bbox: &BBox, image_width: u32, image_height: u32) -> Result<String> {
    let (w, h) = (image_width as f64, image_height as f64);
    let b = bbox
        .clamp_to(w, h)
        .ok_or_else(|| Error::Geometry(format!("box {:?} has no area inside {image_width}x{image_height}", bbox.to_array())))?;
    let cx = unit((b.x_min() + b.x_max()) / 2.0 / w);
    let cy = unit((b.y_min() + b.y_max()) / 2.0 / h);
    let bw = unit(b.width() / w);
    let bh = unit(b.height() / h);
    Ok(format!("{class_id} {cx:.6} {cy:.6} {bw:.6} {bh:.6}"))
}

pub fn to_yolo_segmentation_line(class_id: u32, poly: &Polygon, image_width: u32, image_height: u32) -> Result<String> {
    if poly.vertices().len() < 3 {
        return Err(Error::Geometry("segmentation label needs at least 3 vertices".into()));
    }
    let (w, h) = (image_width as f64, image_height as f64);
    let mut line = class_id.to_string();
    for &(x, y) in poly.vertices() {
        write!(line, " {:.6} {:.6}", unit(x / w), unit(y / h)).unwrap();
    }
    Ok(line)
}

/// Serialize whole entries as a label file: one LF-terminated line per entry.
pub fn write_label_file(entries: &[LabelEntry], image_width: u32, image_height: u32) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        let line = match &e.shape {
            LabelShape::Box(b) => to_yolo_detection_line(e.class_id, b, image_width, image_height)?,
            LabelShape::Polygon(p) => to_yolo_segmentation_line(e.class_id, p, image_width, image_height)?,
        };
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn parse_fields(line: &str, line_no: usize) -> Result<(u32, Vec<f64>)> {
    let mut tokens = line.split_whitespace();
    let class_tok = tokens.next().unwrap_or_default();
    let class_id = class_tok.parse::<u32>().map_err(|_| Error::LabelParse {
        line: line_no,
        message: format!("invalid class id '{class_tok}'"),
    })?;
    let values = tokens
        .map(|t| {
            t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::LabelParse {
                line: line_no,
                message: format!("invalid number '{t}'"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((class_id, values))
}

fn check_unit(values: &[f64], line_no: usize) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::LabelParse {
            line: line_no,
            message: format!("value {v} outside [0, 1]"),
        });
    }
    Ok(())
}

fn box_from_center(values: &[f64], w: f64, h: f64, line_no: usize) -> Result<BBox> {
    let (cx, cy, bw, bh) = (values[0] * w, values[1] * h, values[2] * w, values[3] * h);
    BBox::new(
        (cx - bw / 2.0).max(0.0),
        (cy - bh / 2.0).max(0.0),
        cx + bw / 2.0,
        cy + bh / 2.0,
    )
    .map_err(|e| Error::LabelParse {
        line: line_no,
        message: e.to_string(),
    })
}

/// Parse a label file back to pixel coordinates, keeping line order. Blank lines are skipped.
pub fn parse_yolo_label_file(text: &str, image_width: u32, image_height: u32, kind: LabelKind) -> Result<Vec<LabelEntry>> {
    let (w, h) = (image_width as f64, image_height as f64);
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (class_id, values) = parse_fields(line, line_no)?;
        let shape = match kind {
            LabelKind::Detection => {
                if values.len() != 4 {
                    return Err(Error::LabelParse {
                        line: line_no,
                        message: format!("detection line needs 5 tokens, found {}", values.len() + 1),
                    });
                }
                check_unit(&values, line_no)?;
                LabelShape::Box(box_from_center(&values, w, h, line_no)?)
            }
            LabelKind::Segmentation => {
                if values.len() % 2 != 0 || values.len() < 6 {
                    return Err(Error::LabelParse {
                        line: line_no,
                        message: format!("segmentation line needs an odd token count of at least 7, found {}", values.len() + 1),
                    });
                }
                check_unit(&values, line_no)?;
                let verts = values.chunks_exact(2).map(|p| (p[0] * w, p[1] * h)).collect();
                LabelShape::Polygon(Polygon::new(verts).map_err(|e| Error::LabelParse {
                    line: line_no,
                    message: e.to_string(),
                })?)
            }
        };
        entries.push(LabelEntry { class_id, shape });
    }
    Ok(entries)
}

/// Scored box read from a YOLO prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabel {
    pub class_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

/// Detection label file with an optional trailing confidence column
/// (`class cx cy w h [conf]`). Lines without a confidence score 1.0.
pub fn parse_yolo_prediction_file(text: &str, image_width: u32, image_height: u32) -> Result<Vec<ScoredLabel>> {
    let (w, h) = (image_width as f64, image_height as f64);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (class_id, values) = parse_fields(line, line_no)?;
        if values.len() != 4 && values.len() != 5 {
            return Err(Error::LabelParse {
                line: line_no,
                message: format!("prediction line needs 5 or 6 tokens, found {}", values.len() + 1),
            });
        }
        check_unit(&values, line_no)?;
        out.push(ScoredLabel {
            class_id,
            bbox: box_from_center(&values, w, h, line_no)?,
            score: values.get(4).copied().unwrap_or(1.0),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detection_line_normalizes() {
        let b = BBox::new(10.0, 20.0, 30.0, 40.0).unwrap();
        assert_eq!(to_yolo_detection_line(0, &b, 100, 100).unwrap(), "0 0.200000 0.300000 0.200000 0.200000");
        let full = BBox::new(0.0, 0.0, 100.0, 100.0).unwrap();
        assert_eq!(to_yolo_detection_line(0, &full, 100, 100).unwrap(), "0 0.500000 0.500000 1.000000 1.000000");
    }

    #[test]
    fn detection_line_clamps_and_rejects_outside() {
        let b = BBox::new(90.0, 90.0, 110.0, 110.0).unwrap();
        assert_eq!(to_yolo_detection_line(0, &b, 100, 100).unwrap(), "0 0.950000 0.950000 0.100000 0.100000");
        let outside = BBox::new(100.0, 0.0, 110.0, 10.0).unwrap();
        assert!(to_yolo_detection_line(0, &outside, 100, 100).is_err());
    }

    #[test]
    fn segmentation_line() {
        let sq = Polygon::new(vec![(0., 0.), (1., 0.), (1., 1.), (0., 1.)]).unwrap();
        assert_eq!(
            to_yolo_segmentation_line(0, &sq, 10, 10).unwrap(),
            "0 0.000000 0.000000 0.100000 0.000000 0.100000 0.100000 0.000000 0.100000"
        );
        let big = Polygon::new(vec![(0., 0.), (20., 0.), (20., 5.)]).unwrap();
        assert_eq!(to_yolo_segmentation_line(1, &big, 10, 10).unwrap(), "1 0.000000 0.000000 1.000000 0.000000 1.000000 0.500000");
    }

    #[test]
    fn parse_detection_file() {
        assert!(parse_yolo_label_file("", 100, 100, LabelKind::Detection).unwrap().is_empty());
        let e = parse_yolo_label_file("0 0.200000 0.300000 0.200000 0.200000\n", 100, 100, LabelKind::Detection).unwrap();
        assert_eq!(e.len(), 1);
        match &e[0].shape {
            LabelShape::Box(b) => {
                for (got, want) in b.to_array().iter().zip([10.0, 20.0, 30.0, 40.0]) {
                    assert!((got - want).abs() < 1e-9);
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_yolo_label_file("0 0.5 0.5 0.1 0.1\n\n0 0.5 0.5 0.1\n", 10, 10, LabelKind::Detection).unwrap_err();
        assert!(matches!(err, Error::LabelParse { line: 3, .. }), "{err:?}");
        let err = parse_yolo_label_file("0 0.5 1.5 0.1 0.1", 10, 10, LabelKind::Detection).unwrap_err();
        assert!(matches!(err, Error::LabelParse { line: 1, .. }));
        let err = parse_yolo_label_file("0 0.1 0.1 0.2 0.2", 10, 10, LabelKind::Segmentation).unwrap_err();
        assert!(matches!(err, Error::LabelParse { line: 1, .. }));
        let err = parse_yolo_label_file("0 0.1 0.1 0.2 0.2 0.3 0.3 0.4", 10, 10, LabelKind::Segmentation).unwrap_err();
        assert!(matches!(err, Error::LabelParse { line: 1, .. }));
    }

    #[test]
    fn prediction_file_confidence_column() {
        let p = parse_yolo_prediction_file("0 0.5 0.5 0.2 0.2 0.75\n0 0.5 0.5 0.2 0.2\n", 10, 10).unwrap();
        assert_eq!(p[0].score, 0.75);
        assert_eq!(p[1].score, 1.0);
        assert!(parse_yolo_prediction_file("0 0.5 0.5 0.2", 10, 10).is_err());
    }

    fn arb_box(w: u32, h: u32) -> impl Strategy<Value = BBox> {
        (0.0..w as f64 - 1.0, 0.0..h as f64 - 1.0, 0.01..1.0f64, 0.01..1.0f64).prop_map(move |(x, y, fw, fh)| {
            let x1 = x + fw * (w as f64 - x);
            let y1 = y + fh * (h as f64 - y);
            BBox::new(x, y, x1.max(x + 1e-3), y1.max(y + 1e-3)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn detection_round_trip((w, h, b) in (8u32..2000, 8u32..2000).prop_flat_map(|(w, h)| (Just(w), Just(h), arb_box(w, h)))) {
            let line = to_yolo_detection_line(0, &b, w, h).unwrap();
            let parsed = parse_yolo_label_file(&line, w, h, LabelKind::Detection).unwrap();
            let LabelShape::Box(back) = &parsed[0].shape else { panic!() };
            let dims = [w as f64, h as f64, w as f64, h as f64];
            for ((a, c), d) in back.to_array().iter().zip(b.to_array()).zip(dims) {
                prop_assert!((a - c).abs() <= 1e-6 * d, "{a} vs {c}");
            }
            prop_assert_eq!(to_yolo_detection_line(0, back, w, h).unwrap(), line);
        }

        #[test]
        fn segmentation_round_trip(w in 2u32..3000, h in 2u32..3000,
                                   pts in proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64), 3..12)) {
            let verts: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x * w as f64, y * h as f64)).collect();
            let Ok(poly) = Polygon::new(verts) else { return Ok(()) };
            let line = to_yolo_segmentation_line(0, &poly, w, h).unwrap();
            let parsed = parse_yolo_label_file(&line, w, h, LabelKind::Segmentation).unwrap();
            let LabelShape::Polygon(back) = &parsed[0].shape else { panic!() };
            prop_assert_eq!(back.vertices().len(), poly.vertices().len());
            for (a, b) in back.vertices().iter().zip(poly.vertices()) {
                prop_assert!((a.0 - b.0).abs() / w as f64 <= 1e-6);
                prop_assert!((a.1 - b.1).abs() / h as f64 <= 1e-6);
            }
            prop_assert_eq!(to_yolo_segmentation_line(0, back, w, h).unwrap(), line);
        }
    }
}
