//! Label-set derivation and YOLO label I/O.
//!
//! A filtered detection set yields three label variants: detector boxes,
//! polygons traced from segmentation masks, and tight boxes of those masks.

mod polygon;
mod yolo;

use serde::{Deserialize, Serialize};

pub use polygon::{mask_to_bbox, mask_to_polygon, simplify_ring, Polygon};
pub use yolo::{
    parse_yolo_label_file, parse_yolo_prediction_file, to_yolo_detection_line, to_yolo_segmentation_line,
    write_label_file, LabelEntry, LabelKind, LabelShape, ScoredLabel,
};

use crate::detection::{DetectionSet, Source};
use crate::error::Result;
use crate::geometry::BBox;
use crate::rle::rle_decode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    BboxDetector,
    SegMasks,
    BboxFromMasks,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::BboxDetector, Variant::SegMasks, Variant::BboxFromMasks];

    /// Directory name used in the on-disk label layout.
    pub fn dir_name(&self) -> &'static str {
        match self {
            Variant::BboxDetector => "bbox_detector",
            Variant::SegMasks => "seg_masks",
            Variant::BboxFromMasks => "bbox_from_masks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Douglas-Peucker tolerance in pixels.
    pub simplify_tolerance: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { simplify_tolerance: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSetTriple {
    pub bbox_detector: Vec<(u32, BBox)>,
    pub seg_masks: Vec<(u32, Polygon)>,
    pub bbox_from_masks: Vec<(u32, BBox)>,
}

impl LabelSetTriple {
    pub fn entries(&self, variant: Variant) -> Vec<LabelEntry> {
        match variant {
            Variant::BboxDetector => boxes(&self.bbox_detector),
            Variant::SegMasks => self
                .seg_masks
                .iter()
                .map(|(c, p)| LabelEntry {
                    class_id: *c,
                    shape: LabelShape::Polygon(p.clone()),
                })
                .collect(),
            Variant::BboxFromMasks => boxes(&self.bbox_from_masks),
        }
    }
}

fn boxes(list: &[(u32, BBox)]) -> Vec<LabelEntry> {
    list.iter()
        .map(|(c, b)| LabelEntry {
            class_id: *c,
            shape: LabelShape::Box(*b),
        })
        .collect()
}

/// Derive the three label variants from a filtered set.
///
/// Detector boxes come from every detection whose box was produced by the
/// detector, i.e. `source` is `detector` or `segmenter` (the segmenter keeps the
/// prompting box untouched). Each 4-connected mask component contributes one
/// polygon and, at the same index, its tight box. Empty masks contribute nothing.
pub fn generate_label_sets(filtered: &DetectionSet, cfg: &LabelConfig) -> Result<LabelSetTriple> {
    let mut triple = LabelSetTriple::default();
    for det in filtered.detections() {
        if det.provenance().source != Source::Derived {
            triple.bbox_detector.push((det.class_id(), *det.bbox()));
        }
        let Some(rle) = det.mask() else { continue };
        if rle.pixel_count() == 0 {
            continue;
        }
        let mask = rle_decode(rle);
        for (poly, bbox) in polygon::mask_components(&mask, cfg.simplify_tolerance)? {
            triple.seg_masks.push((det.class_id(), poly));
            triple.bbox_from_masks.push((det.class_id(), bbox));
        }
    }
    Ok(triple)
}
