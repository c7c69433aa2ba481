//! Detection interchange documents.
//!
//! One JSON document per image. The reader rejects unknown keys; the writer
//! produces a canonical form with lexicographically sorted keys, one detection
//! per line, and every float printed with six decimals. See
//! `docs/interchange.md` for the schema.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::detection::{Detection, DetectionSet, Provenance, Source};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rle::RleMask;

/// File suffix used for interchange documents on disk.
pub const FILE_SUFFIX: &str = ".det.json";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    image_id: String,
    width: u32,
    height: u32,
    detections: Vec<RawDetection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    det_id: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
    class_id: u32,
    prompt: String,
    source: Source,
    #[serde(default)]
    mask: Option<RawMask>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMask {
    counts: Vec<u64>,
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start = bytes
        .split_inclusive(|&b| b == b'\n')
        .take(line - 1)
        .map(<[u8]>::len)
        .sum::<usize>();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

pub fn parse_detection_file(bytes: &[u8]) -> Result<DetectionSet> {
    let raw: RawDocument = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let mut detections = Vec::with_capacity(raw.detections.len());
    for d in raw.detections {
        let [x0, y0, x1, y1] = d.bbox;
        let bbox = BBox::new(x0, y0, x1, y1)
            .map_err(|e| Error::validation(format!("detection {}: {e}", d.det_id)))?;
        let mask = d
            .mask
            .map(|m| RleMask::new(raw.width, raw.height, m.counts))
            .transpose()
            .map_err(|e| Error::validation(format!("detection {}: mask does not match image dimensions: {e}", d.det_id)))?;
        detections.push(Detection::new(
            d.det_id,
            bbox,
            d.score,
            d.class_id,
            mask,
            Provenance {
                prompt: d.prompt,
                source: d.source,
            },
        )?);
    }
    DetectionSet::new(raw.image_id, raw.width, raw.height, detections)
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

/// Canonical bytes for a detection set. Identical sets always give identical bytes.
pub fn write_detection_file(set: &DetectionSet) -> Result<Vec<u8>> {
    // Re-check invariants so hand-assembled sets cannot escape as invalid files.
    DetectionSet::new(set.image_id(), set.width(), set.height(), set.detections().to_vec())?;

    let mut out = String::from("{\"detections\":[");
    for (i, d) in set.detections().iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let [x0, y0, x1, y1] = d.bbox().to_array().map(|v| format!("{v:.6}"));
        let num = |s: &str| s.parse::<f64>().expect("formatted float");
        if num(&x1) <= num(&x0) || num(&y1) <= num(&y0) {
            return Err(Error::validation(format!(
                "detection {}: box collapses at six decimals",
                d.det_id()
            )));
        }
        write!(out, "{{\"box\":[{x0},{y0},{x1},{y1}],\"class_id\":{},\"det_id\":{}", d.class_id(), d.det_id()).unwrap();
        if let Some(m) = d.mask() {
            out.push_str(",\"mask\":{\"counts\":[");
            for (j, c) in m.counts().iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{c}").unwrap();
            }
            out.push_str("]}");
        }
        write!(
            out,
            ",\"prompt\":{},\"score\":{:.6},\"source\":\"{}\"}}",
            json_string(&d.provenance().prompt),
            d.score(),
            d.provenance().source
        )
        .unwrap();
    }
    if !set.is_empty() {
        out.push('\n');
    }
    writeln!(
        out,
        "],\"height\":{},\"image_id\":{},\"width\":{}}}",
        set.height(),
        json_string(set.image_id()),
        set.width()
    )
    .unwrap();
    Ok(out.into_bytes())
}
