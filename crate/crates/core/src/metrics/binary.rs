//! Image-level defect classification: ROC/AUC and precision-recall/AP.

use super::{PrCurve, PrPoint, RocCurve, RocPoint};
use crate::detection::DetectionSet;
use crate::error::{Error, Result};

/// Highest surviving detection score, or 0 for an image with no detections.
pub fn image_score(filtered: &DetectionSet) -> f64 {
    filtered.detections().iter().map(|d| d.score()).fold(0.0, f64::max)
}

/// Cumulative (true positives, false positives) after each block of equal
/// scores, visiting scores from high to low.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("non-finite score"));
    }
    Ok(())
}

/// ROC curve over the distinct scores and its trapezoidal area. Tied scores
/// form a single diagonal step, which is what counts a tied pair as 1/2.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(RocCurve, f64)> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC needs both classes, got {pos} positive and {neg} negative images"
        )));
    }
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    // Integrate in counts so the area is exact up to the final division.
    let mut area2 = 0u128;
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    for (s, tp, fp) in sweep(scores, labels) {
        area2 += ((fp - prev_fp) * (tp + prev_tp)) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: Some(s),
        });
        (prev_tp, prev_fp) = (tp, fp);
    }
    let auc = area2 as f64 / (2.0 * pos as f64 * neg as f64);
    Ok((RocCurve { points }, auc))
}

/// Precision-recall over a descending score sweep and the step-wise AP
/// `sum (R_i - R_{i-1}) * P_i`, one operating point per distinct score.
pub fn binary_pr_ap(scores: &[f64], labels: &[bool]) -> Result<(PrCurve, f64)> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::UndefinedMetric("precision-recall needs at least one positive image".into()));
    }
    let mut points = Vec::new();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (s, tp, fp) in sweep(scores, labels) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            recall,
            precision,
            score: s,
        });
    }
    Ok((PrCurve { points }, ap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{Detection, Provenance, Source};
    use crate::geometry::BBox;

    #[test]
    fn image_score_is_max() {
        let mk = |id, s| {
            Detection::new(
                id,
                BBox::new(0., 0., 1., 1.).unwrap(),
                s,
                0,
                None,
                Provenance {
                    prompt: String::new(),
                    source: Source::Detector,
                },
            )
            .unwrap()
        };
        let empty = DetectionSet::new("a", 4, 4, vec![]).unwrap();
        assert_eq!(image_score(&empty), 0.0);
        let s = DetectionSet::new("a", 4, 4, vec![mk(0, 0.3), mk(1, 0.7)]).unwrap();
        assert_eq!(image_score(&s), 0.7);
        let r = DetectionSet::new("a", 4, 4, vec![mk(1, 0.7), mk(0, 0.3)]).unwrap();
        assert_eq!(image_score(&r), 0.7);
    }

    #[test]
    fn auc_cases() {
        let (_, a) = roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(a, 1.0);
        let (curve, a) = roc_auc(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(a, 0.5);
        assert_eq!(curve.points.len(), 2);
        let (_, a) = roc_auc(&[0.9, 0.4, 0.6, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(a, 0.75);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn roc_curve_is_monotone_from_origin_to_corner() {
        let (c, _) = roc_auc(&[0.3, 0.3, 0.9, 0.1, 0.5], &[true, false, true, false, false]).unwrap();
        assert_eq!((c.points[0].fpr, c.points[0].tpr), (0.0, 0.0));
        let last = c.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(c.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
    }

    #[test]
    fn ap_cases() {
        let (_, ap) = binary_pr_ap(&[0.9, 0.8, 0.3], &[true, true, false]).unwrap();
        assert_eq!(ap, 1.0);
        let (curve, ap) = binary_pr_ap(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(curve.points[0].precision, 1.0);
        assert_eq!(curve.points[0].recall, 0.5);
        // Positives all at 0 below every negative: AP is the prevalence.
        let (_, ap) = binary_pr_ap(&[0.0, 0.0, 0.5, 0.6, 0.7], &[true, true, false, false, false]).unwrap();
        assert!((ap - 0.4).abs() < 1e-12);
        assert!(matches!(binary_pr_ap(&[0.1], &[false]), Err(Error::UndefinedMetric(_))));
    }
}
