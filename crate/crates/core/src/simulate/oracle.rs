//! Naive reference implementations for cross-checking the production metrics.
//!
//! These deliberately share no matching, sorting or IoU code with the rest of
//! the crate: every ordering is found by linear selection scans and every
//! quantity is recomputed from scratch.

use crate::detection::DetectionSet;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::ScoredBox;

pub const MAX_IMAGES: usize = 5;
pub const MAX_BOXES_PER_IMAGE: usize = 6;
pub const MAX_SCORES: usize = 200;
pub const MAX_NMS_BOXES: usize = 64;

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let [ax0, ay0, ax1, ay1] = a.to_array();
    let [bx0, by0, bx1, by1] = b.to_array();
    let w = f64::min(ax1, bx1) - f64::max(ax0, bx0);
    let h = f64::min(ay1, by1) - f64::max(ay0, by0);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let u = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    f64::min(inter / u, 1.0)
}

/// `true` when item `a` ranks before item `b`: higher score, then lower index.
fn ranks_before(score_a: f64, idx_a: usize, score_b: f64, idx_b: usize) -> bool {
    score_a > score_b || (score_a == score_b && idx_a < idx_b)
}

/// Surviving det_ids of greedy NMS, highest rank first.
pub fn oracle_nms(set: &DetectionSet, iou_threshold: f64) -> Result<Vec<u64>> {
    let dets = set.detections();
    if dets.len() > MAX_NMS_BOXES {
        return Err(Error::OracleLimit(format!("{} boxes exceed {MAX_NMS_BOXES}", dets.len())));
    }
    // Rank of each detection = how many detections outrank it.
    let rank: Vec<usize> = (0..dets.len())
        .map(|i| {
            (0..dets.len())
                .filter(|&j| ranks_before(dets[j].score(), j, dets[i].score(), i))
                .count()
        })
        .collect();
    let mut by_rank = vec![0usize; dets.len()];
    for (i, &r) in rank.iter().enumerate() {
        by_rank[r] = i;
    }
    let mut alive = vec![false; dets.len()];
    for &i in &by_rank {
        alive[i] = (0..dets.len()).all(|j| !(alive[j] && overlap(dets[j].bbox(), dets[i].bbox()) > iou_threshold));
    }
    Ok(by_rank.into_iter().filter(|&i| alive[i]).map(|i| dets[i].det_id()).collect())
}

/// Per-prediction TP flags for one image at one threshold.
fn mark_image(preds: &[ScoredBox], gts: &[BBox], t: f64) -> Vec<bool> {
    let mut done = vec![false; preds.len()];
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; preds.len()];
    for _ in 0..preds.len() {
        let mut pick: Option<usize> = None;
        for i in 0..preds.len() {
            if !done[i] && pick.is_none_or(|p| ranks_before(preds[i].score, i, preds[p].score, p)) {
                pick = Some(i);
            }
        }
        let i = pick.unwrap();
        done[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = overlap(&preds[i].bbox, gt);
            if !taken[g] && v >= t && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp[i] = true;
        }
    }
    tp
}

fn thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLocalization {
    pub map: f64,
    pub map50: f64,
    pub map75: f64,
    pub mar1: f64,
    pub mar10: f64,
}

fn check_limits(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>]) -> Result<usize> {
    if preds.len() != gts.len() || preds.len() > MAX_IMAGES {
        return Err(Error::OracleLimit(format!("at most {MAX_IMAGES} paired images")));
    }
    if preds.iter().map(Vec::len).chain(gts.iter().map(Vec::len)).any(|n| n > MAX_BOXES_PER_IMAGE) {
        return Err(Error::OracleLimit(format!("at most {MAX_BOXES_PER_IMAGE} boxes per image")));
    }
    let total: usize = gts.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::UndefinedMetric("no ground truth".into()));
    }
    Ok(total)
}

fn ap_at(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>], t: f64, total: usize) -> f64 {
    let flags: Vec<Vec<bool>> = preds.iter().zip(gts).map(|(p, g)| mark_image(p, g, t)).collect();
    // Global ranking by selection: score, then image, then position.
    let n: usize = preds.iter().map(Vec::len).sum();
    let mut used: Vec<Vec<bool>> = preds.iter().map(|p| vec![false; p.len()]).collect();
    let mut ranked: Vec<bool> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick: Option<(usize, usize)> = None;
        for (im, p) in preds.iter().enumerate() {
            for (k, b) in p.iter().enumerate() {
                if used[im][k] {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some((pi, pk)) => {
                        let s = preds[pi][pk].score;
                        b.score > s || (b.score == s && (im, k) < (pi, pk))
                    }
                };
                if better {
                    pick = Some((im, k));
                }
            }
        }
        let (im, k) = pick.unwrap();
        used[im][k] = true;
        ranked.push(flags[im][k]);
    }
    // (recall, precision) after each cut of the ranking.
    let cuts: Vec<(f64, f64)> = (1..=ranked.len())
        .map(|cut| {
            let tp = ranked[..cut].iter().filter(|&&x| x).count();
            (tp as f64 / total as f64, tp as f64 / cut as f64)
        })
        .collect();
    let mut sum = 0.0;
    for level in 0..=100 {
        let r = level as f64 / 100.0;
        let mut best: f64 = 0.0;
        for &(recall, precision) in &cuts {
            if recall >= r && precision > best {
                best = precision;
            }
        }
        sum += best;
    }
    sum / 101.0
}

fn recall_at(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>], t: f64, k: usize, total: usize) -> f64 {
    let mut matched = 0;
    for (p, g) in preds.iter().zip(gts) {
        // Keep the k highest-ranked predictions, found by rank counting.
        let kept: Vec<ScoredBox> = (0..p.len())
            .filter(|&i| (0..p.len()).filter(|&j| ranks_before(p[j].score, j, p[i].score, i)).count() < k)
            .map(|i| p[i])
            .collect();
        matched += mark_image(&kept, g, t).into_iter().filter(|&x| x).count();
    }
    matched as f64 / total as f64
}

pub fn oracle_map(preds: &[Vec<ScoredBox>], gts: &[Vec<BBox>]) -> Result<OracleLocalization> {
    let total = check_limits(preds, gts)?;
    let ts = thresholds();
    let aps: Vec<f64> = ts.iter().map(|&t| ap_at(preds, gts, t, total)).collect();
    let mar = |k| ts.iter().map(|&t| recall_at(preds, gts, t, k, total)).sum::<f64>() / ts.len() as f64;
    Ok(OracleLocalization {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        map50: aps[0],
        map75: aps[5],
        mar1: mar(1),
        mar10: mar(10),
    })
}

/// Probability that a random positive outscores a random negative, ties counting one half.
pub fn oracle_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() > MAX_SCORES || scores.len() != labels.len() {
        return Err(Error::OracleLimit(format!("at most {MAX_SCORES} labelled scores")));
    }
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice_wins += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    if pairs == 0 {
        return Err(Error::UndefinedMetric("need both positive and negative labels".into()));
    }
    Ok(twice_wins as f64 / (2 * pairs) as f64)
}
