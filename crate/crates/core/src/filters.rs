//! Heuristic filter chain applied to raw zero-shot outputs.
//!
//! Stages run in a fixed order: confidence, box size, mask area, then
//! class-agnostic greedy NMS. Each stage is also exposed on its own.

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSet};
use crate::error::{Error, Result};

/// How `max_box_area_fraction` is compared against a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMode {
    /// Box area strictly below `fraction * image area`.
    #[default]
    Area,
    /// Both box sides strictly below `fraction` of the matching image side.
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub score_threshold: f64,
    pub max_box_area_fraction: f64,
    pub size_mode: SizeMode,
    pub min_mask_pixels: u64,
    pub nms_iou_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.30,
            max_box_area_fraction: 0.20,
            size_mode: SizeMode::Area,
            min_mask_pixels: 500,
            nms_iou_threshold: 0.50,
        }
    }
}

impl FilterConfig {
    /// Keeps everything except what NMS at IoU 1.0 removes (nothing, since IoU never exceeds 1).
    pub fn permissive() -> Self {
        Self {
            score_threshold: 0.0,
            max_box_area_fraction: 1.0,
            size_mode: SizeMode::Area,
            min_mask_pixels: 0,
            nms_iou_threshold: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config(format!("score_threshold {} outside [0, 1]", self.score_threshold)));
        }
        if !(self.max_box_area_fraction > 0.0 && self.max_box_area_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "max_box_area_fraction {} outside (0, 1]",
                self.max_box_area_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.nms_iou_threshold) {
            return Err(Error::Config(format!(
                "nms_iou_threshold {} outside [0, 1]",
                self.nms_iou_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Score,
    Size,
    MaskArea,
    Nms,
}

impl Stage {
    pub const ORDER: [Stage; 4] = [Stage::Score, Stage::Size, Stage::MaskArea, Stage::Nms];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub input: usize,
    pub removed: usize,
    pub surviving: usize,
    pub removed_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub stages: Vec<StageReport>,
}

impl FilterReport {
    pub fn empty() -> Self {
        Self {
            stages: Stage::ORDER
                .iter()
                .map(|&stage| StageReport {
                    stage,
                    input: 0,
                    removed: 0,
                    surviving: 0,
                    removed_ids: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn input(&self) -> usize {
        self.stages.first().map_or(0, |s| s.input)
    }

    pub fn surviving(&self) -> usize {
        self.stages.last().map_or(0, |s| s.surviving)
    }

    /// Stage-wise sum of counts. Removed ids are not carried over, since
    /// det_ids are only unique within one image.
    pub fn merge_counts(&mut self, other: &FilterReport) {
        for (mine, theirs) in self.stages.iter_mut().zip(&other.stages) {
            mine.input += theirs.input;
            mine.removed += theirs.removed;
            mine.surviving += theirs.surviving;
        }
    }
}

pub fn filter_confidence(set: &DetectionSet, threshold: f64) -> DetectionSet {
    set.retain(|d| d.score() >= threshold)
}

pub fn filter_box_size(set: &DetectionSet, max_area_fraction: f64) -> DetectionSet {
    filter_box_size_with(set, max_area_fraction, SizeMode::Area)
}

pub fn filter_box_size_with(set: &DetectionSet, fraction: f64, mode: SizeMode) -> DetectionSet {
    let (w, h) = (set.width() as f64, set.height() as f64);
    match mode {
        SizeMode::Area => {
            let limit = fraction * w * h;
            set.retain(|d| d.bbox().area() < limit)
        }
        SizeMode::Side => set.retain(|d| d.bbox().width() < fraction * w && d.bbox().height() < fraction * h),
    }
}

pub fn filter_mask_area(set: &DetectionSet, min_pixels: u64) -> DetectionSet {
    set.retain(|d| d.mask().is_none_or(|m| m.pixel_count() >= min_pixels))
}

/// Greedy class-agnostic NMS.
///
/// Candidates are visited by descending score, equal scores in input order.
/// A candidate is dropped when its IoU with an already kept box is strictly
/// greater than `iou_threshold`. Output is in visiting order.
pub fn nms(set: &DetectionSet, iou_threshold: f64) -> DetectionSet {
    let dets = set.detections();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Stable sort keeps input order among equal scores.
    order.sort_by(|&a, &b| dets[b].score().total_cmp(&dets[a].score()));

    let mut kept: Vec<&Detection> = Vec::new();
    for idx in order {
        let cand = &dets[idx];
        if kept.iter().all(|k| k.bbox().iou(cand.bbox()) <= iou_threshold) {
            kept.push(cand);
        }
    }
    set.with_detections(kept.into_iter().cloned().collect())
}

fn stage_report(stage: Stage, before: &DetectionSet, after: &DetectionSet) -> StageReport {
    let surviving: std::collections::HashSet<u64> = after.detections().iter().map(Detection::det_id).collect();
    let removed_ids: Vec<u64> = before
        .detections()
        .iter()
        .map(Detection::det_id)
        .filter(|id| !surviving.contains(id))
        .collect();
    StageReport {
        stage,
        input: before.len(),
        removed: removed_ids.len(),
        surviving: after.len(),
        removed_ids,
    }
}

pub fn apply_filter_chain(set: &DetectionSet, cfg: &FilterConfig) -> (DetectionSet, FilterReport) {
    let mut stages = Vec::with_capacity(4);
    let mut current = set.clone();
    for stage in Stage::ORDER {
        let next = match stage {
            Stage::Score => filter_confidence(&current, cfg.score_threshold),
            Stage::Size => filter_box_size_with(&current, cfg.max_box_area_fraction, cfg.size_mode),
            Stage::MaskArea => filter_mask_area(&current, cfg.min_mask_pixels),
            Stage::Nms => nms(&current, cfg.nms_iou_threshold),
        };
        stages.push(stage_report(stage, &current, &next));
        current = next;
    }
    (current, FilterReport { stages })
}
