use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{binary_pr_ap, coco_map, coco_pr_curve, mean_average_recall, mean_matched_iou, roc_auc, PrCurve, RocCurve, ScoredBox};
use crate::error::Result;
use crate::geometry::BBox;

/// Everything known about one evaluated image.
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub image_id: String,
    pub preds: Vec<ScoredBox>,
    pub gts: Vec<BBox>,
    /// Image-level classification score.
    pub score: f64,
    /// Whether the image contains a defect.
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub roc: RocCurve,
    pub pr_image: PrCurve,
    /// Pooled detection precision-recall at IoU 0.50.
    pub pr_detection_50: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub ground_truths: usize,
    pub predictions: usize,
    pub iou_mean: f64,
    pub map: f64,
    pub map50: f64,
    pub map75: f64,
    pub mar1: f64,
    pub mar10: f64,
    pub auc: f64,
    pub ap_binary: f64,
    pub curves: Curves,
}

pub fn evaluate(inputs: &[EvalInput]) -> Result<EvalReport> {
    let preds: Vec<Vec<ScoredBox>> = inputs.iter().map(|i| i.preds.clone()).collect();
    let gts: Vec<Vec<BBox>> = inputs.iter().map(|i| i.gts.clone()).collect();
    let scores: Vec<f64> = inputs.iter().map(|i| i.score).collect();
    let labels: Vec<bool> = inputs.iter().map(|i| i.positive).collect();

    let m = coco_map(&preds, &gts)?;
    let (roc, auc) = roc_auc(&scores, &labels)?;
    let (pr_image, ap_binary) = binary_pr_ap(&scores, &labels)?;
    Ok(EvalReport {
        images: inputs.len(),
        ground_truths: gts.iter().map(Vec::len).sum(),
        predictions: preds.iter().map(Vec::len).sum(),
        iou_mean: mean_matched_iou(&preds, &gts)?,
        map: m.map,
        map50: m.map50,
        map75: m.map75,
        mar1: mean_average_recall(&preds, &gts, 1)?,
        mar10: mean_average_recall(&preds, &gts, 10)?,
        auc,
        ap_binary,
        curves: Curves {
            roc,
            pr_image,
            pr_detection_50: coco_pr_curve(&preds, &gts, 0.5)?,
        },
    })
}

impl EvalReport {
    pub const COLUMNS: [&'static str; 8] = ["IoU", "mAP", "mAP@50", "mAP@75", "mAR@1", "mAR@10", "AUC", "AP"];

    pub fn values(&self) -> [f64; 8] {
        [self.iou_mean, self.map, self.map50, self.map75, self.mar1, self.mar10, self.auc, self.ap_binary]
    }

    /// Fixed-width text table, one header row and one value row.
    pub fn to_table(&self, model: &str) -> String {
        let name_w = model.len().max("Model".len());
        let mut s = format!("{:<name_w$}", "Model");
        for c in Self::COLUMNS {
            write!(s, "  {c:>7}").unwrap();
        }
        s.push('\n');
        write!(s, "{model:<name_w$}").unwrap();
        for v in self.values() {
            write!(s, "  {v:>7.3}").unwrap();
        }
        s.push('\n');
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }
}
