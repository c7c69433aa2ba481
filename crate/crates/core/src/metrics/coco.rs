use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{greedy_match, iou_thresholds, score_order, PrCurve, PrPoint, ScoredBox};
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocoMap {
    pub map: f64,
    pub map50: f64,
    pub map75: f64,
}

fn check_inputs(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>]) -> Result<usize> {
    if preds.len() != gts.len() {
        return Err(Error::validation(format!(
            "{} prediction images but {} ground-truth images",
            preds.len(),
            gts.len()
        )));
    }
    let total: usize = gts.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::UndefinedMetric("no ground-truth boxes in any image".into()));
    }
    Ok(total)
}

/// Mean over recall levels 0.00, 0.01, ..., 1.00 of the interpolated precision
/// `max { precision at points with recall >= r }`, or 0 where no point qualifies.
pub fn average_precision_101(pr: &PrCurve) -> f64 {
    // Suffix maximum of precision, so the lookup per recall level is one search.
    let mut suffix = vec![0.0f64; pr.points.len() + 1];
    for i in (0..pr.points.len()).rev() {
        suffix[i] = suffix[i + 1].max(pr.points[i].precision);
    }
    let sum: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            let first = pr.points.partition_point(|p| p.recall < r);
            suffix[first]
        })
        .sum();
    sum / 101.0
}

/// Pooled precision-recall curve at one IoU threshold. Predictions from all
/// images are ranked by descending score; equal scores keep image order, then
/// input order within an image.
pub fn coco_pr_curve(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>], iou_threshold: f64) -> Result<PrCurve> {
    let total_gt = check_inputs(preds, gts)?;
    let per_image: Vec<Vec<bool>> = preds
        .par_iter()
        .zip(gts.par_iter())
        .map(|(p, g)| greedy_match(p, g, iou_threshold).iter().map(Option::is_some).collect())
        .collect();
    Ok(pooled_curve(preds, &per_image, total_gt))
}

fn pooled_curve(preds: &[Vec<ScoredBox>], is_tp: &[Vec<bool>], total_gt: usize) -> PrCurve {
    let mut pooled: Vec<(f64, bool)> = preds
        .iter()
        .zip(is_tp)
        .flat_map(|(p, tp)| score_order(p).into_iter().map(move |i| (p[i].score, tp[i])))
        .collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut fp) = (0usize, 0usize);
    let points = pooled
        .into_iter()
        .map(|(score, hit)| {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                recall: tp as f64 / total_gt as f64,
                precision: tp as f64 / (tp + fp) as f64,
                score,
            }
        })
        .collect();
    PrCurve { points }
}

/// mAP averaged over the ten IoU thresholds, plus AP at 0.50 and 0.75.
pub fn coco_map(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>]) -> Result<CocoMap> {
    check_inputs(preds, gts)?;
    let aps: Vec<f64> = iou_thresholds()
        .iter()
        .map(|&t| coco_pr_curve(preds, gts, t).map(|c| average_precision_101(&c)))
        .collect::<Result<_>>()?;
    Ok(CocoMap {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        map50: aps[0],
        map75: aps[5],
    })
}

fn top_k(preds: &[ScoredBox], k: usize) -> Vec<ScoredBox> {
    score_order(preds).into_iter().take(k).map(|i| preds[i]).collect()
}

/// Recall with each image truncated to its `k` best-scored predictions,
/// averaged over the ten IoU thresholds.
pub fn mean_average_recall(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>], k: usize) -> Result<f64> {
    let total_gt = check_inputs(preds, gts)?;
    if k == 0 {
        return Err(Error::validation("mAR needs k >= 1"));
    }
    let truncated: Vec<Vec<ScoredBox>> = preds.iter().map(|p| top_k(p, k)).collect();
    let recalls: Vec<f64> = iou_thresholds()
        .iter()
        .map(|&t| {
            let matched: usize = truncated
                .par_iter()
                .zip(gts.par_iter())
                .map(|(p, g)| greedy_match(p, g, t).iter().filter(|m| m.is_some()).count())
                .sum();
            matched as f64 / total_gt as f64
        })
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Mean IoU over all pairs matched at IoU 0.50, pooled over images.
pub fn mean_matched_iou(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::validation("prediction and ground-truth image counts differ"));
    }
    let ious: Vec<f64> = preds
        .iter()
        .zip(gts)
        .flat_map(|(p, g)| greedy_match(p, g, 0.5).into_iter().flatten().map(|(_, v)| v))
        .collect();
    if ious.is_empty() {
        return Err(Error::UndefinedMetric("no prediction matches any ground truth at IoU 0.50".into()));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn pt(recall: f64, precision: f64) -> PrPoint {
        PrPoint {
            recall,
            precision,
            score: 0.0,
        }
    }

    #[test]
    fn ap101_cases() {
        assert_eq!(average_precision_101(&PrCurve { points: vec![pt(1.0, 1.0)] }), 1.0);
        assert_eq!(average_precision_101(&PrCurve::default()), 0.0);
        assert_eq!(
            average_precision_101(&PrCurve {
                points: vec![pt(1.0, 1.0), pt(1.0, 0.5)]
            }),
            1.0
        );
        // Half recall at full precision: levels 0.00..=0.50 count, 51 of 101.
        let half = average_precision_101(&PrCurve {
            points: vec![pt(0.5, 1.0), pt(0.5, 0.5)],
        });
        assert!((half - 51.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![vec![b(0., 0., 10., 10.), b(20., 20., 30., 30.)], vec![b(5., 5., 8., 9.)]];
        let preds: Vec<Vec<ScoredBox>> = gts
            .iter()
            .map(|g| g.iter().enumerate().map(|(i, bb)| ScoredBox { id: i as u64, bbox: *bb, score: 1.0 }).collect())
            .collect();
        let m = coco_map(&preds, &gts).unwrap();
        assert_eq!((m.map, m.map50, m.map75), (1.0, 1.0, 1.0));
        // Top-1 per image recovers one object in each image: 2 of 3 pooled.
        assert!((mean_average_recall(&preds, &gts, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(mean_average_recall(&preds, &gts, 10).unwrap(), 1.0);
        assert_eq!(mean_matched_iou(&preds, &gts).unwrap(), 1.0);
    }

    #[test]
    fn trailing_false_positive() {
        let gts = vec![vec![b(0., 0., 10., 10.)]];
        let preds = vec![vec![
            ScoredBox { id: 0, bbox: b(0., 0., 10., 10.), score: 0.9 },
            ScoredBox { id: 1, bbox: b(50., 50., 60., 60.), score: 0.8 },
        ]];
        assert_eq!(coco_map(&preds, &gts).unwrap().map, 1.0);
    }

    #[test]
    fn iou_point_six_case() {
        let gts = vec![vec![b(0., 0., 10., 10.)]];
        let preds = vec![vec![ScoredBox { id: 0, bbox: b(0., 2.5, 10., 12.5), score: 0.9 }]];
        let m = coco_map(&preds, &gts).unwrap();
        assert_eq!(m.map50, 1.0);
        assert_eq!(m.map75, 0.0);
        assert!((m.map - 0.3).abs() < 1e-12);
        assert!((mean_average_recall(&preds, &gts, 1).unwrap() - 0.3).abs() < 1e-12);
        assert!((mean_matched_iou(&preds, &gts).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn truncation_lowers_recall() {
        let gts = vec![vec![b(0., 0., 10., 10.)]];
        let preds = vec![vec![
            ScoredBox { id: 0, bbox: b(40., 40., 50., 50.), score: 0.9 },
            ScoredBox { id: 1, bbox: b(0., 0., 10., 10.), score: 0.5 },
        ]];
        let r1 = mean_average_recall(&preds, &gts, 1).unwrap();
        let r10 = mean_average_recall(&preds, &gts, 10).unwrap();
        assert_eq!(r1, 0.0);
        assert_eq!(r10, 1.0);
    }

    #[test]
    fn two_pair_mean_iou() {
        // Pairs with IoU 0.8 and 0.6 in separate images.
        let gts = vec![vec![b(0., 0., 10., 10.)], vec![b(0., 0., 10., 10.)]];
        let preds = vec![
            vec![ScoredBox { id: 0, bbox: b(0., 0., 10., 8.), score: 0.5 }],
            vec![ScoredBox { id: 0, bbox: b(0., 0., 10., 6.), score: 0.5 }],
        ];
        assert!((mean_matched_iou(&preds, &gts).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn undefined_metrics_error() {
        let preds = vec![vec![ScoredBox { id: 0, bbox: b(0., 0., 1., 1.), score: 0.5 }]];
        let gts: Vec<Vec<BBox>> = vec![vec![]];
        assert!(matches!(coco_map(&preds, &gts), Err(Error::UndefinedMetric(_))));
        assert!(matches!(mean_average_recall(&preds, &gts, 1), Err(Error::UndefinedMetric(_))));
        let far = vec![vec![b(5., 5., 6., 6.)]];
        assert!(matches!(mean_matched_iou(&preds, &far), Err(Error::UndefinedMetric(_))));
    }
}
