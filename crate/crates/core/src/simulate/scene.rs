use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSet, Provenance, Source};
use crate::error::{Error, Result};
use crate::geometry::{BBox, BitMask};
use crate::rle::{rle_decode, rle_encode};
use crate::splitter::{DatasetManifest, ManifestEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of per-coordinate box jitter, pixels.
    pub box_jitter_sigma: f64,
    pub true_score_min: f64,
    pub true_score_max: f64,
    pub fp_score_min: f64,
    pub fp_score_max: f64,
    /// Probability that an image receives one false positive.
    pub fp_rate: f64,
    pub miss_rate: f64,
    pub duplicate_prob: f64,
    pub overseg_prob: f64,
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            box_jitter_sigma: 0.0,
            true_score_min: 1.0,
            true_score_max: 1.0,
            fp_score_min: 0.0,
            fp_score_max: 0.0,
            fp_rate: 0.0,
            miss_rate: 0.0,
            duplicate_prob: 0.0,
            overseg_prob: 0.0,
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub defect_count_min: usize,
    pub defect_count_max: usize,
    /// Side length range of defect boxes, pixels.
    pub defect_size_min: u32,
    pub defect_size_max: u32,
    pub group_count: usize,
    pub group_size: usize,
    /// Fraction of groups whose images contain no defects.
    pub defect_free_fraction: f64,
    pub num_classes: u32,
    pub prompt: String,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            defect_count_min: 1,
            defect_count_max: 3,
            defect_size_min: 30,
            defect_size_max: 60,
            group_count: 10,
            group_size: 4,
            defect_free_fraction: 0.2,
            num_classes: 1,
            prompt: "Two Circles".into(),
            noise: NoiseModel::zero(),
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        let rates = [
            ("defect_free_fraction", self.defect_free_fraction),
            ("fp_rate", n.fp_rate),
            ("miss_rate", n.miss_rate),
            ("duplicate_prob", n.duplicate_prob),
            ("overseg_prob", n.overseg_prob),
            ("true_score_min", n.true_score_min),
            ("true_score_max", n.true_score_max),
            ("fp_score_min", n.fp_score_min),
            ("fp_score_max", n.fp_score_max),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
        }
        if n.true_score_min > n.true_score_max || n.fp_score_min > n.fp_score_max {
            return Err(Error::Config("score ranges must have min <= max".into()));
        }
        if !(n.box_jitter_sigma >= 0.0 && n.box_jitter_sigma.is_finite()) {
            return Err(Error::Config(format!("box_jitter_sigma {} must be >= 0", n.box_jitter_sigma)));
        }
        if self.width == 0 || self.height == 0 || self.group_size == 0 || self.num_classes == 0 {
            return Err(Error::Config("dimensions, group_size and num_classes must be positive".into()));
        }
        if self.defect_count_min > self.defect_count_max {
            return Err(Error::Config("defect_count_min exceeds defect_count_max".into()));
        }
        if self.defect_size_min < 2 || self.defect_size_min > self.defect_size_max {
            return Err(Error::Config("defect sizes need 2 <= min <= max".into()));
        }
        if self.defect_count_max > 0 && (self.defect_size_max >= self.width || self.defect_size_max >= self.height) {
            return Err(Error::Geometry(format!(
                "defects up to {} px do not fit in a {}x{} image",
                self.defect_size_max, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Ground truth and manifest of one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground_truth: Vec<DetectionSet>,
    pub manifest: DatasetManifest,
}

const GT_STREAM: u64 = 0x6774;
const DET_STREAM: u64 = 0x6465;

/// Independent RNG per (seed, stream, image) so images can be generated in any order.
fn image_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ stream.rotate_left(32) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Pixels whose point nearest the centre lies strictly inside the ellipse
/// inscribed in `b`. For integer boxes the tight box of the mask is `b` itself.
pub fn ellipse_mask(b: &BBox, width: u32, height: u32) -> BitMask {
    let mut m = BitMask::zeros(width, height);
    let (cx, cy) = ((b.x_min() + b.x_max()) / 2.0, (b.y_min() + b.y_max()) / 2.0);
    let (rx, ry) = (b.width() / 2.0, b.height() / 2.0);
    let c0 = b.x_min().floor().max(0.0) as u32;
    let c1 = (b.x_max().ceil() as u32).min(width);
    let r0 = b.y_min().floor().max(0.0) as u32;
    let r1 = (b.y_max().ceil() as u32).min(height);
    for r in r0..r1 {
        for c in c0..c1 {
            let dx = (cx.clamp(c as f64, c as f64 + 1.0) - cx) / rx;
            let dy = (cy.clamp(r as f64, r as f64 + 1.0) - cy) / ry;
            if dx * dx + dy * dy < 1.0 {
                m.set(c, r, true);
            }
        }
    }
    m
}

fn place_defects(spec: &SceneSpec, rng: &mut ChaCha8Rng, count: usize) -> Vec<BBox> {
    let mut placed: Vec<BBox> = Vec::with_capacity(count);
    let mut attempts = 0;
    while placed.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        let w = rng.gen_range(spec.defect_size_min..=spec.defect_size_max);
        let h = rng.gen_range(spec.defect_size_min..=spec.defect_size_max);
        let x = rng.gen_range(0..=spec.width - w);
        let y = rng.gen_range(0..=spec.height - h);
        let b = BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).expect("sizes are positive");
        // Keep a 2 px gap so masks and boxes of different defects never touch.
        let grown = BBox::new(
            (b.x_min() - 2.0).max(0.0),
            (b.y_min() - 2.0).max(0.0),
            b.x_max() + 2.0,
            b.y_max() + 2.0,
        )
        .unwrap();
        if placed.iter().all(|p| p.iou(&grown) == 0.0) {
            placed.push(b);
        }
    }
    placed
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let clean_groups = (spec.defect_free_fraction * spec.group_count as f64).round() as usize;
    let mut group_order: Vec<usize> = (0..spec.group_count).collect();
    {
        use rand::seq::SliceRandom;
        group_order.shuffle(&mut image_rng(spec.seed, GT_STREAM, usize::MAX));
    }
    let clean: std::collections::HashSet<usize> = group_order[..clean_groups.min(spec.group_count)].iter().copied().collect();

    let mut ground_truth = Vec::new();
    let mut entries = Vec::new();
    for g in 0..spec.group_count {
        for i in 0..spec.group_size {
            let index = g * spec.group_size + i;
            let image_id = format!("img_{g:04}_{i}");
            let mut rng = image_rng(spec.seed, GT_STREAM, index);
            let count = if clean.contains(&g) {
                0
            } else {
                rng.gen_range(spec.defect_count_min..=spec.defect_count_max)
            };
            let boxes = place_defects(spec, &mut rng, count);
            let mut class_counts: BTreeMap<u32, u64> = BTreeMap::new();
            let mut dets = Vec::with_capacity(boxes.len());
            for (k, b) in boxes.iter().enumerate() {
                let class_id = rng.gen_range(0..spec.num_classes);
                *class_counts.entry(class_id).or_default() += 1;
                let mask = ellipse_mask(b, spec.width, spec.height);
                dets.push(Detection::new(
                    k as u64,
                    *b,
                    1.0,
                    class_id,
                    Some(rle_encode(&mask)),
                    Provenance {
                        prompt: "ground-truth".into(),
                        source: Source::Derived,
                    },
                )?);
            }
            entries.push(ManifestEntry {
                image_id: image_id.clone(),
                group_id: format!("grp_{g:04}"),
                defect_free: dets.is_empty(),
                class_counts,
            });
            ground_truth.push(DetectionSet::new(image_id, spec.width, spec.height, dets)?);
        }
    }
    Ok(Scene {
        ground_truth,
        manifest: DatasetManifest::new(entries)?,
    })
}

fn jitter(b: &BBox, sigma: f64, w: u32, h: u32, rng: &mut ChaCha8Rng) -> BBox {
    if sigma == 0.0 {
        return *b;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let c = b.to_array().map(|v| v + normal.sample(rng));
    BBox::new(
        c[0].clamp(0.0, w as f64),
        c[1].clamp(0.0, h as f64),
        c[2].clamp(0.0, w as f64),
        c[3].clamp(0.0, h as f64),
    )
    .unwrap_or(*b)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Halves a detection across its longer side, clipping the mask to each half.
fn split_halves(b: &BBox, mask: &BitMask) -> Vec<(BBox, BitMask)> {
    let horizontal = b.width() >= b.height();
    let cut = if horizontal {
        ((b.x_min() + b.x_max()) / 2.0).floor()
    } else {
        ((b.y_min() + b.y_max()) / 2.0).floor()
    };
    let halves = if horizontal {
        [
            BBox::new(b.x_min(), b.y_min(), cut, b.y_max()),
            BBox::new(cut, b.y_min(), b.x_max(), b.y_max()),
        ]
    } else {
        [
            BBox::new(b.x_min(), b.y_min(), b.x_max(), cut),
            BBox::new(b.x_min(), cut, b.x_max(), b.y_max()),
        ]
    };
    halves
        .into_iter()
        .filter_map(|h| h.ok())
        .map(|h| {
            let mut part = BitMask::zeros(mask.width(), mask.height());
            for (c, r) in mask.set_pixels() {
                let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                if x >= h.x_min() && x < h.x_max() && y >= h.y_min() && y < h.y_max() {
                    part.set(c, r, true);
                }
            }
            (h, part)
        })
        .collect()
}

/// Turn ground truth into noisy detector/segmenter output.
///
/// Per object: drop with `miss_rate`; otherwise jitter the box, draw a score,
/// and either emit it whole or (with `overseg_prob`) as two halves. With
/// `duplicate_prob` a slightly shifted lower-scored copy follows. Each image
/// then gets one false positive with probability `fp_rate`.
pub fn perturb_to_detections(ground_truth: &[DetectionSet], spec: &SceneSpec) -> Result<Vec<DetectionSet>> {
    spec.validate()?;
    let n = &spec.noise;
    ground_truth
        .iter()
        .enumerate()
        .map(|(index, gt)| {
            let mut rng = image_rng(spec.seed, DET_STREAM, index);
            let (w, h) = (gt.width(), gt.height());
            let mut out: Vec<(BBox, f64, u32, BitMask)> = Vec::new();
            for obj in gt.detections() {
                if rng.gen_bool(n.miss_rate) {
                    continue;
                }
                let b = jitter(obj.bbox(), n.box_jitter_sigma, w, h, &mut rng);
                let score = uniform(&mut rng, n.true_score_min, n.true_score_max);
                let mask = match (n.box_jitter_sigma == 0.0, obj.mask()) {
                    (true, Some(m)) => rle_decode(m),
                    _ => ellipse_mask(&b, w, h),
                };
                if rng.gen_bool(n.overseg_prob) {
                    for (hb, hm) in split_halves(&b, &mask) {
                        out.push((hb, score, obj.class_id(), hm));
                    }
                } else {
                    out.push((b, score, obj.class_id(), mask.clone()));
                }
                if rng.gen_bool(n.duplicate_prob) {
                    let dx = (0.05 * b.width()).max(0.5);
                    let dup = BBox::new(b.x_min() + dx, b.y_min(), (b.x_max() + dx).min(w as f64), b.y_max()).unwrap_or(b);
                    out.push((dup, score * 0.9, obj.class_id(), ellipse_mask(&dup, w, h)));
                }
            }
            if rng.gen_bool(n.fp_rate) && spec.defect_size_max < w && spec.defect_size_max < h {
                let bw = rng.gen_range(spec.defect_size_min..=spec.defect_size_max);
                let bh = rng.gen_range(spec.defect_size_min..=spec.defect_size_max);
                let x = rng.gen_range(0..=w - bw);
                let y = rng.gen_range(0..=h - bh);
                let b = BBox::new(x as f64, y as f64, (x + bw) as f64, (y + bh) as f64).unwrap();
                let score = uniform(&mut rng, n.fp_score_min, n.fp_score_max);
                out.push((b, score, 0, ellipse_mask(&b, w, h)));
            }
            let dets = out
                .into_iter()
                .enumerate()
                .map(|(k, (b, score, class_id, mask))| {
                    Detection::new(
                        k as u64,
                        b,
                        score,
                        class_id,
                        Some(rle_encode(&mask)),
                        Provenance {
                            prompt: spec.prompt.clone(),
                            source: Source::Segmenter,
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            DetectionSet::new(gt.image_id(), w, h, dets)
        })
        .collect()
}
