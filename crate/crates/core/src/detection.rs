use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rle::RleMask;

/// Which stage produced a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Detector,
    Segmenter,
    Derived,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Detector => "detector",
            Source::Segmenter => "segmenter",
            Source::Derived => "derived",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detector" => Ok(Source::Detector),
            "segmenter" => Ok(Source::Segmenter),
            "derived" => Ok(Source::Derived),
            other => Err(Error::validation(format!("unknown source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub prompt: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    det_id: u64,
    bbox: BBox,
    score: f64,
    class_id: u32,
    mask: Option<RleMask>,
    provenance: Provenance,
}

impl Detection {
    pub fn new(
        det_id: u64,
        bbox: BBox,
        score: f64,
        class_id: u32,
        mask: Option<RleMask>,
        provenance: Provenance,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::validation(format!(
                "detection {det_id}: score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            det_id,
            bbox,
            score,
            class_id,
            mask,
            provenance,
        })
    }

    pub fn det_id(&self) -> u64 {
        self.det_id
    }
    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }
    pub fn score(&self) -> f64 {
        self.score
    }
    pub fn class_id(&self) -> u32 {
        self.class_id
    }
    pub fn mask(&self) -> Option<&RleMask> {
        self.mask.as_ref()
    }
    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// All detections for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    image_id: String,
    width: u32,
    height: u32,
    detections: Vec<Detection>,
}

impl DetectionSet {
    /// Checks image dimensions, det_id uniqueness and mask dimensions.
    ///
    /// `image_id` doubles as a file stem, so it must be non-empty and free of
    /// path separators.
    pub fn new(image_id: impl Into<String>, width: u32, height: u32, detections: Vec<Detection>) -> Result<Self> {
        let image_id = image_id.into();
        if image_id.is_empty() || image_id.contains(['/', '\\']) || image_id == "." || image_id == ".." {
            return Err(Error::validation(format!("invalid image_id '{image_id}'")));
        }
        if width == 0 || height == 0 {
            return Err(Error::validation(format!(
                "image '{image_id}' has zero dimension {width}x{height}"
            )));
        }
        let mut seen = HashSet::with_capacity(detections.len());
        for d in &detections {
            if !seen.insert(d.det_id) {
                return Err(Error::validation(format!(
                    "image '{image_id}': duplicate det_id {}",
                    d.det_id
                )));
            }
            if let Some(m) = &d.mask {
                if m.width() != width || m.height() != height {
                    return Err(Error::validation(format!(
                        "image '{image_id}': detection {} has mask {}x{} but image is {width}x{height}",
                        d.det_id,
                        m.width(),
                        m.height()
                    )));
                }
            }
        }
        Ok(Self {
            image_id,
            width,
            height,
            detections,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }
    pub fn len(&self) -> usize {
        self.detections.len()
    }
    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Same image with a different detection list. The list must come from
    /// this set (filtering or reordering), so invariants still hold.
    pub(crate) fn with_detections(&self, detections: Vec<Detection>) -> Self {
        Self {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            detections,
        }
    }

    pub fn retain(&self, mut keep: impl FnMut(&Detection) -> bool) -> Self {
        self.with_detections(self.detections.iter().filter(|d| keep(d)).cloned().collect())
    }
}
