//! Detection and image-level evaluation metrics.
//!
//! Localization metrics follow COCO conventions for a single class: greedy
//! score-ordered matching, 101-point interpolated AP averaged over IoU
//! thresholds 0.50:0.05:0.95, and recall with per-image top-k truncation.

mod binary;
mod coco;
mod report;

use serde::{Deserialize, Serialize};

pub use binary::{binary_pr_ap, image_score, roc_auc};
pub use coco::{average_precision_101, coco_map, coco_pr_curve, mean_average_recall, mean_matched_iou, CocoMap};
pub use report::{evaluate, EvalInput, EvalReport};

use crate::geometry::BBox;

/// IoU thresholds 0.50, 0.55, ..., 0.95, each the correctly rounded decimal.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// A scored prediction box. `id` is echoed back in [`Matching::pairs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub id: u64,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub pred_id: u64,
    pub gt_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<MatchPair>,
    pub unmatched_preds: Vec<u64>,
    pub unmatched_gts: Vec<usize>,
    pub iou_threshold: f64,
}

/// Indices of `preds` by descending score; equal scores keep input order.
pub(crate) fn score_order(preds: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

/// Per-prediction match result in input order: `Some((gt_index, iou))` or `None`.
pub(crate) fn greedy_match(preds: &[ScoredBox], gts: &[BBox], iou_threshold: f64) -> Vec<Option<(usize, f64)>> {
    let mut gt_taken = vec![false; gts.len()];
    let mut result = vec![None; preds.len()];
    for idx in score_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let v = preds[idx].bbox.iou(gt);
            // Strict '>' keeps the lowest gt index on equal IoU.
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            gt_taken[g] = true;
            result[idx] = Some((g, v));
        }
    }
    result
}

/// Greedy matching by descending prediction score. Each prediction takes the
/// unmatched ground truth with the highest IoU, if that IoU reaches the threshold.
pub fn match_detections(preds: &[ScoredBox], gts: &[BBox], iou_threshold: f64) -> Matching {
    let result = greedy_match(preds, gts, iou_threshold);
    let mut matched_gt = vec![false; gts.len()];
    let mut pairs = Vec::new();
    let mut unmatched_preds = Vec::new();
    for idx in score_order(preds) {
        match result[idx] {
            Some((g, v)) => {
                matched_gt[g] = true;
                pairs.push(MatchPair {
                    pred_id: preds[idx].id,
                    gt_index: g,
                    iou: v,
                });
            }
            None => unmatched_preds.push(preds[idx].id),
        }
    }
    Matching {
        pairs,
        unmatched_preds,
        unmatched_gts: (0..gts.len()).filter(|&g| !matched_gt[g]).collect(),
        iou_threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub score: f64,
}

/// Precision-recall operating points with recall non-decreasing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score cut-off for this point; `None` for the (0, 0) origin.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl PrCurve {
    /// Two-column `recall<TAB>precision` text for plotting.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("recall\tprecision\n");
        for p in &self.points {
            s.push_str(&format!("{:.6}\t{:.6}\n", p.recall, p.precision));
        }
        s
    }
}

impl RocCurve {
    /// Two-column `fpr<TAB>tpr` text for plotting.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("fpr\ttpr\n");
        for p in &self.points {
            s.push_str(&format!("{:.6}\t{:.6}\n", p.fpr, p.tpr));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn sb(id: u64, bbox: BBox, score: f64) -> ScoredBox {
        ScoredBox { id, bbox, score }
    }

    #[test]
    fn thresholds_are_exact_decimals() {
        let t = iou_thresholds();
        assert_eq!(t[0], 0.5);
        assert_eq!(t[2], 0.6);
        assert_eq!(t[5], 0.75);
        assert_eq!(t[9], 0.95);
        assert_eq!(b(0., 0., 10., 10.).iou(&b(0., 2.5, 10., 12.5)), t[2]);
    }

    #[test]
    fn iou_cases() {
        let a = b(0., 0., 2., 2.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(3., 3., 4., 4.)), 0.0);
        assert!((iou(&a, &b(1., 1., 3., 3.)) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_matching() {
        let gts = vec![b(0., 0., 5., 5.), b(10., 10., 20., 20.)];
        let preds: Vec<_> = gts.iter().enumerate().map(|(i, g)| sb(i as u64, *g, 0.9)).collect();
        let m = match_detections(&preds, &gts, 0.5);
        assert_eq!(m.pairs.len(), 2);
        assert!(m.pairs.iter().all(|p| p.iou == 1.0));
        assert!(m.unmatched_gts.is_empty() && m.unmatched_preds.is_empty());
    }

    #[test]
    fn no_predictions() {
        let m = match_detections(&[], &[b(0., 0., 1., 1.)], 0.5);
        assert_eq!(m.unmatched_gts, vec![0]);
    }

    #[test]
    fn higher_score_wins_contested_gt() {
        // Exhaustive over both score orderings and both input orders.
        let gt = [b(0., 0., 10., 10.)];
        let near = b(0., 0., 10., 9.);
        let exact = b(0., 0., 10., 10.);
        for (s_near, s_exact) in [(0.9, 0.4), (0.4, 0.9)] {
            for flip in [false, true] {
                let mut preds = vec![sb(1, near, s_near), sb(2, exact, s_exact)];
                if flip {
                    preds.reverse();
                }
                let m = match_detections(&preds, &gt, 0.5);
                let winner = if s_near > s_exact { 1 } else { 2 };
                assert_eq!(m.pairs.len(), 1);
                assert_eq!(m.pairs[0].pred_id, winner);
                assert_eq!(m.unmatched_preds, vec![3 - winner]);
            }
        }
    }

    #[test]
    fn equal_iou_goes_to_lowest_gt_index() {
        let gts = [b(0., 0., 2., 2.), b(2., 0., 4., 2.)];
        let pred = [sb(0, b(1., 0., 3., 2.), 0.5)];
        let m = match_detections(&pred, &gts, 0.1);
        assert_eq!(m.pairs[0].gt_index, 0);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64).prop_map(|(x, y, w, h)| b(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            prop_assert_eq!(iou(&a, &c), iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&iou(&a, &c)));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn matching_invariants(preds in proptest::collection::vec((arb_box(), 0.0..1.0f64), 0..8),
                               gts in proptest::collection::vec(arb_box(), 0..8),
                               t in 0.05..0.95f64) {
            let preds: Vec<_> = preds.into_iter().enumerate().map(|(i, (bb, s))| sb(i as u64, bb, s)).collect();
            let m = match_detections(&preds, &gts, t);
            let mut seen_p = std::collections::HashSet::new();
            let mut seen_g = std::collections::HashSet::new();
            for p in &m.pairs {
                prop_assert!(seen_p.insert(p.pred_id));
                prop_assert!(seen_g.insert(p.gt_index));
                prop_assert!(p.iou >= t);
            }
            prop_assert_eq!(m.pairs.len() + m.unmatched_preds.len(), preds.len());
            prop_assert_eq!(m.pairs.len() + m.unmatched_gts.len(), gts.len());
        }
    }
}
