//! Random instance generators shared by the integration tests. Coordinates
//! live on a coarse integer grid and scores on a coarse lattice so that ties
//! and exact-threshold overlaps occur often.

#![allow(dead_code)]

use pseudolabel::metrics::ScoredBox;
use pseudolabel::{rle_encode, BBox, BitMask, Detection, DetectionSet, Provenance, Source};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid_box(rng: &mut ChaCha8Rng, extent: u32) -> BBox {
    let x0 = rng.gen_range(0..extent);
    let y0 = rng.gen_range(0..extent);
    let x1 = rng.gen_range(x0 + 1..=extent);
    let y1 = rng.gen_range(y0 + 1..=extent);
    BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64).unwrap()
}

/// A box near `b`: shifted by at most `spread` grid units per side.
pub fn near_box(rng: &mut ChaCha8Rng, b: &BBox, spread: i32, extent: u32) -> BBox {
    let mut j = |v: f64| (v + rng.gen_range(-spread..=spread) as f64).clamp(0.0, extent as f64);
    let (mut x0, mut y0, mut x1, mut y1) = (j(b.x_min()), j(b.y_min()), j(b.x_max()), j(b.y_max()));
    if x1 <= x0 {
        (x0, x1) = (x0.min(extent as f64 - 1.0), x0.min(extent as f64 - 1.0) + 1.0);
    }
    if y1 <= y0 {
        (y0, y1) = (y0.min(extent as f64 - 1.0), y0.min(extent as f64 - 1.0) + 1.0);
    }
    BBox::new(x0, y0, x1, y1).unwrap()
}

pub fn lattice_score(rng: &mut ChaCha8Rng, steps: u32) -> f64 {
    rng.gen_range(0..=steps) as f64 / steps as f64
}

/// Up to `max_images` images with up to `max_boxes` ground truths and
/// predictions each; most predictions sit near a ground truth.
pub fn eval_instance(rng: &mut ChaCha8Rng, max_images: usize, max_boxes: usize) -> (Vec<Vec<ScoredBox>>, Vec<Vec<BBox>>) {
    let extent = 16;
    let images = rng.gen_range(1..=max_images);
    let mut preds = Vec::with_capacity(images);
    let mut gts = Vec::with_capacity(images);
    for _ in 0..images {
        let g: Vec<BBox> = (0..rng.gen_range(0..=max_boxes)).map(|_| grid_box(rng, extent)).collect();
        let p: Vec<ScoredBox> = (0..rng.gen_range(0..=max_boxes))
            .map(|i| {
                let bbox = if !g.is_empty() && rng.gen_bool(0.75) {
                    let anchor = g[rng.gen_range(0..g.len())];
                    near_box(rng, &anchor, 2, extent)
                } else {
                    grid_box(rng, extent)
                };
                ScoredBox {
                    id: i as u64,
                    bbox,
                    score: lattice_score(rng, 5),
                }
            })
            .collect();
        gts.push(g);
        preds.push(p);
    }
    if gts.iter().all(Vec::is_empty) {
        gts[0].push(grid_box(rng, extent));
    }
    (preds, gts)
}

pub fn provenance(source: Source) -> Provenance {
    Provenance {
        prompt: "Two Circles".into(),
        source,
    }
}

/// Rectangular mask covering the integer box, clipped to the image.
pub fn box_mask(b: &BBox, width: u32, height: u32) -> BitMask {
    let mut m = BitMask::zeros(width, height);
    for r in b.y_min() as u32..(b.y_max() as u32).min(height) {
        for c in b.x_min() as u32..(b.x_max() as u32).min(width) {
            m.set(c, r, true);
        }
    }
    m
}

/// A detection set of up to `max_dets` boxes on a `size`×`size` image. When
/// `masks` is set every detection carries a rectangular mask.
pub fn detection_set(rng: &mut ChaCha8Rng, max_dets: usize, size: u32, masks: bool) -> DetectionSet {
    let n = rng.gen_range(0..=max_dets);
    let mut boxes: Vec<BBox> = Vec::with_capacity(n);
    for _ in 0..n {
        let b = if !boxes.is_empty() && rng.gen_bool(0.5) {
            let anchor = boxes[rng.gen_range(0..boxes.len())];
            near_box(rng, &anchor, 3, size)
        } else {
            grid_box(rng, size)
        };
        boxes.push(b);
    }
    let dets = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mask = masks.then(|| rle_encode(&box_mask(b, size, size)));
            // Sparse, shuffled ids exercise the id-based bookkeeping.
            let id = (i as u64) * 7 + 3;
            Detection::new(id, *b, lattice_score(rng, 10), rng.gen_range(0..2), mask, provenance(Source::Segmenter)).unwrap()
        })
        .collect();
    DetectionSet::new("img", size, size, dets).unwrap()
}

pub fn ids(set: &DetectionSet) -> Vec<u64> {
    set.detections().iter().map(|d| d.det_id()).collect()
}

// ---- splitting -------------------------------------------------------------

use pseudolabel::simulate::{generate_scene, SceneSpec};
use pseudolabel::splitter::{build_groups, DatasetManifest, GroupAggregate, Partition, SplitAssignment, SplitSpec, Violation};

/// A simulated manifest large enough for the default 80/10/10 split with a
/// per-class minimum of 20.
pub fn split_manifest(seed: u64) -> DatasetManifest {
    let spec = SceneSpec {
        group_count: 60,
        group_size: 4,
        seed,
        ..SceneSpec::default()
    };
    generate_scene(&spec).unwrap().manifest
}

/// Default split spec that also requires every defect-free image in test.
pub fn split_spec(manifest: &DatasetManifest, seed: u64) -> SplitSpec {
    SplitSpec {
        seed,
        defect_free_test_count: manifest.entries().iter().filter(|e| e.defect_free).count(),
        ..SplitSpec::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Unassign,
    SplitGroup,
    Oversize,
    StarveClass,
    LeakDefectFree,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::Unassign,
        Mutation::SplitGroup,
        Mutation::Oversize,
        Mutation::StarveClass,
        Mutation::LeakDefectFree,
    ];

    /// Whether `v` is a violation this mutation must provoke.
    pub fn expects(self, v: &Violation) -> bool {
        match self {
            Mutation::Unassign => matches!(v, Violation::Unassigned { .. }),
            Mutation::SplitGroup => matches!(v, Violation::GroupSplit { .. }),
            Mutation::Oversize => matches!(v, Violation::SizeOutOfTolerance { .. }),
            Mutation::StarveClass => matches!(v, Violation::ClassBelowMinimum { .. }),
            Mutation::LeakDefectFree => matches!(v, Violation::DefectFreeOutsideTest { .. }),
        }
    }
}

fn move_group(a: &mut SplitAssignment, g: &GroupAggregate, to: Partition) {
    for id in &g.image_ids {
        a.assignment.insert(id.clone(), to);
    }
}

fn pool_size_in(manifest: &DatasetManifest, a: &SplitAssignment, p: Partition) -> usize {
    let groups = build_groups(manifest);
    groups
        .iter()
        .filter(|g| g.defect_free_images == 0)
        .flat_map(|g| &g.image_ids)
        .filter(|id| a.assignment.get(*id) == Some(&p))
        .count()
}

/// Corrupt a valid assignment so that one constraint breaks.
pub fn mutate(manifest: &DatasetManifest, valid: &SplitAssignment, m: Mutation, r: &mut ChaCha8Rng) -> SplitAssignment {
    let mut a = valid.clone();
    let groups = build_groups(manifest);
    let pool: Vec<&GroupAggregate> = groups.iter().filter(|g| g.defect_free_images == 0).collect();
    let in_part = |g: &GroupAggregate, p: Partition| valid.assignment[&g.image_ids[0]] == p;
    match m {
        Mutation::Unassign => {
            let ids: Vec<String> = a.assignment.keys().cloned().collect();
            a.assignment.remove(&ids[r.gen_range(0..ids.len())]);
        }
        Mutation::SplitGroup => {
            let multi: Vec<_> = pool.iter().filter(|g| g.image_ids.len() > 1).collect();
            let g = multi[r.gen_range(0..multi.len())];
            let id = &g.image_ids[r.gen_range(0..g.image_ids.len())];
            let to = if a.assignment[id] == Partition::Train { Partition::Val } else { Partition::Train };
            a.assignment.insert(id.clone(), to);
        }
        Mutation::Oversize => {
            // Pile train groups into val until val leaves its window.
            let limit = valid.targets[1] + valid.tolerance;
            for g in pool.iter().filter(|g| in_part(g, Partition::Train)) {
                if pool_size_in(manifest, &a, Partition::Val) > limit {
                    break;
                }
                move_group(&mut a, g, Partition::Val);
            }
        }
        Mutation::StarveClass => {
            // Drain val of one class.
            let (&class, _) = valid.class_counts.iter().find(|(_, c)| c[1] > 0).expect("val holds a class");
            for g in pool.iter().filter(|g| in_part(g, Partition::Val)) {
                if g.class_counts.get(&class).copied().unwrap_or(0) > 0 {
                    move_group(&mut a, g, Partition::Train);
                }
            }
        }
        Mutation::LeakDefectFree => {
            let forced: Vec<_> = groups.iter().filter(|g| g.defect_free_images > 0).collect();
            let g = forced[r.gen_range(0..forced.len())];
            move_group(&mut a, g, if r.gen_bool(0.5) { Partition::Train } else { Partition::Val });
        }
    }
    a
}

// ---- binary ---------------------------------------------------------------

use std::path::Path;
use std::process::{Command, Output};

pub fn pseudolabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pseudolabel"))
        .args(args)
        .env_remove("PSEUDOLABEL_CONFIG")
        .output()
        .expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Every regular file under `dir` as (relative path, bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
