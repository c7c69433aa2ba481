//! Group-atomic train/val/test splitting with per-class minimum counts.
//!
//! Groups that contain a defect-free image are placed in test outright and do
//! not count toward the size targets. The remaining groups are shuffled with
//! the seed, assigned greedily toward the targets, and then repaired by single
//! moves or pairwise swaps until every constraint holds. [`verify_split`] is
//! the independent contract check for any assignment.

mod manifest;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use manifest::{DatasetManifest, ManifestEntry};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Targets {
    Sizes { train: usize, val: usize, test: usize },
    Fractions { train: f64, val: f64, test: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub targets: Targets,
    pub min_class_count: u64,
    /// Minimum number of defect-free images that must end up in test.
    pub defect_free_test_count: usize,
    pub seed: u64,
    pub max_repair_iterations: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            targets: Targets::Fractions {
                train: 0.8,
                val: 0.1,
                test: 0.1,
            },
            min_class_count: 20,
            defect_free_test_count: 0,
            seed: 0,
            max_repair_iterations: 10_000,
        }
    }
}

const FRACTION_EPS: f64 = 1e-6;

impl SplitSpec {
    /// Target image counts for the pool of groups without defect-free images.
    pub fn resolve_targets(&self, pool: usize) -> Result<[usize; 3]> {
        match self.targets {
            Targets::Sizes { train, val, test } => {
                if train + val + test != pool {
                    return Err(Error::Config(format!(
                        "target sizes {train}+{val}+{test} do not sum to {pool} splittable images"
                    )));
                }
                Ok([train, val, test])
            }
            Targets::Fractions { train, val, test } => {
                let fr = [train, val, test];
                if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || ((train + val + test) - 1.0).abs() > FRACTION_EPS {
                    return Err(Error::Config(format!("fractions {fr:?} must lie in [0, 1] and sum to 1")));
                }
                // Largest remainder so the targets sum exactly to the pool.
                let raw: Vec<f64> = fr.iter().map(|f| f * pool as f64).collect();
                let mut out: [usize; 3] = std::array::from_fn(|i| raw[i].floor() as usize);
                let mut rest = pool.saturating_sub(out.iter().sum());
                let mut order = [0usize, 1, 2];
                order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
                for &i in order.iter().cycle() {
                    if rest == 0 {
                        break;
                    }
                    out[i] += 1;
                    rest -= 1;
                }
                Ok(out)
            }
        }
    }
}

/// Aggregate over one group of images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAggregate {
    pub group_id: String,
    pub image_ids: Vec<String>,
    pub class_counts: BTreeMap<u32, u64>,
    pub defect_free_images: usize,
}

impl GroupAggregate {
    pub fn size(&self) -> usize {
        self.image_ids.len()
    }
}

/// One aggregate per group id, sorted by group id; members keep manifest order.
pub fn build_groups(manifest: &DatasetManifest) -> Vec<GroupAggregate> {
    let mut groups: BTreeMap<&str, GroupAggregate> = BTreeMap::new();
    for e in manifest.entries() {
        let g = groups.entry(&e.group_id).or_insert_with(|| GroupAggregate {
            group_id: e.group_id.clone(),
            image_ids: Vec::new(),
            class_counts: BTreeMap::new(),
            defect_free_images: 0,
        });
        g.image_ids.push(e.image_id.clone());
        for (&c, &n) in &e.class_counts {
            *g.class_counts.entry(c).or_default() += n;
        }
        g.defect_free_images += usize::from(e.defect_free);
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Partition>,
    /// Images per partition, including defect-free groups placed in test.
    pub sizes: [usize; 3],
    /// Images per partition counted against the targets.
    pub pool_sizes: [usize; 3],
    pub targets: [usize; 3],
    pub tolerance: usize,
    pub class_counts: BTreeMap<u32, [u64; 3]>,
    pub seed: u64,
    pub repair_iterations: usize,
}

impl SplitAssignment {
    pub fn images_in(&self, p: Partition) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &q)| q == p)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    Unassigned { image_id: String },
    GroupSplit { group_id: String, partitions: Vec<Partition> },
    SizeOutOfTolerance { partition: Partition, achieved: usize, target: usize, tolerance: usize },
    ClassBelowMinimum { class_id: u32, partition: Partition, count: u64, minimum: u64 },
    DefectFreeOutsideTest { image_id: String, partition: Partition },
    DefectFreeShortfall { in_test: usize, required: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unassigned { image_id } => write!(f, "image '{image_id}' is not assigned"),
            Violation::GroupSplit { group_id, partitions } => {
                let names: Vec<_> = partitions.iter().map(|p| p.name()).collect();
                write!(f, "group '{group_id}' spans partitions {}", names.join(", "))
            }
            Violation::SizeOutOfTolerance { partition, achieved, target, tolerance } => {
                write!(f, "{partition} has {achieved} images, target {target} +/- {tolerance}")
            }
            Violation::ClassBelowMinimum { class_id, partition, count, minimum } => {
                write!(f, "class {class_id} has {count} occurrences in {partition}, minimum {minimum}")
            }
            Violation::DefectFreeOutsideTest { image_id, partition } => {
                write!(f, "defect-free image '{image_id}' is in {partition}")
            }
            Violation::DefectFreeShortfall { in_test, required } => {
                write!(f, "test holds {in_test} defect-free images, {required} required")
            }
        }
    }
}

/// Partitions that must meet the class minimum: non-zero target, or test when
/// defect-free groups are forced into it.
fn constrained_partitions(targets: &[usize; 3], has_forced: bool) -> [bool; 3] {
    [targets[0] > 0, targets[1] > 0, targets[2] > 0 || has_forced]
}

fn max_group_size(groups: &[GroupAggregate]) -> usize {
    groups.iter().map(GroupAggregate::size).max().unwrap_or(0)
}

/// Dense per-partition state used by the greedy pass and the repair loop.
struct State {
    classes: Vec<u32>,
    group_counts: Vec<Vec<u64>>,
    group_sizes: Vec<usize>,
    counts: [Vec<u64>; 3],
    sizes: [usize; 3],
    targets: [usize; 3],
    tolerance: usize,
    constrained: [bool; 3],
    min: u64,
}

impl State {
    fn new(pool: &[GroupAggregate], forced: &[GroupAggregate], targets: [usize; 3], tolerance: usize, min: u64) -> Self {
        let classes: Vec<u32> = pool
            .iter()
            .chain(forced)
            .flat_map(|g| g.class_counts.iter().filter(|(_, &n)| n > 0).map(|(&c, _)| c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let dense = |g: &GroupAggregate| -> Vec<u64> {
            classes.iter().map(|c| g.class_counts.get(c).copied().unwrap_or(0)).collect()
        };
        let mut test_counts = vec![0u64; classes.len()];
        for g in forced {
            for (t, n) in test_counts.iter_mut().zip(dense(g)) {
                *t += n;
            }
        }
        Self {
            group_counts: pool.iter().map(dense).collect(),
            group_sizes: pool.iter().map(GroupAggregate::size).collect(),
            counts: [vec![0; classes.len()], vec![0; classes.len()], test_counts],
            sizes: [0; 3],
            targets,
            tolerance,
            constrained: constrained_partitions(&targets, !forced.is_empty()),
            min,
            classes,
        }
    }

    fn add(&mut self, g: usize, p: usize) {
        self.sizes[p] += self.group_sizes[g];
        for (c, n) in self.counts[p].iter_mut().zip(&self.group_counts[g]) {
            *c += n;
        }
    }

    fn remove(&mut self, g: usize, p: usize) {
        self.sizes[p] -= self.group_sizes[g];
        for (c, n) in self.counts[p].iter_mut().zip(&self.group_counts[g]) {
            *c -= n;
        }
    }

    /// Constraint violation mass of one partition; zero means satisfied.
    fn penalty(&self, p: usize) -> u64 {
        let size_excess = self.sizes[p].abs_diff(self.targets[p]).saturating_sub(self.tolerance) as u64;
        let class_deficit: u64 = if self.constrained[p] {
            self.counts[p].iter().map(|&n| self.min.saturating_sub(n)).sum()
        } else {
            0
        };
        size_excess + class_deficit
    }

    fn total_penalty(&self) -> u64 {
        (0..3).map(|p| self.penalty(p)).sum()
    }

    /// Class minimum still missing in `p` that group `g` would supply.
    fn need_covered(&self, g: usize, p: usize) -> u64 {
        if !self.constrained[p] {
            return 0;
        }
        self.counts[p]
            .iter()
            .zip(&self.group_counts[g])
            .map(|(&have, &n)| n.min(self.min.saturating_sub(have)))
            .sum()
    }
}

fn greedy_assign(state: &mut State, order: &[usize]) -> Vec<usize> {
    let mut part = vec![0usize; state.group_sizes.len()];
    for &g in order {
        let size = state.group_sizes[g];
        let deficit = |s: &State, p: usize| s.targets[p] as i64 - s.sizes[p] as i64;
        let has_room = |s: &State, p: usize| s.targets[p] > 0 && s.sizes[p] + size <= s.targets[p] + s.tolerance;
        let candidates: Vec<usize> = (0..3).filter(|&p| has_room(state, p)).collect();
        let pick = if candidates.is_empty() {
            (0..3).max_by_key(|&p| (deficit(state, p), std::cmp::Reverse(p))).unwrap()
        } else {
            *candidates
                .iter()
                .max_by_key(|&&p| (state.need_covered(g, p), deficit(state, p), std::cmp::Reverse(p)))
                .unwrap()
        };
        state.add(g, pick);
        part[g] = pick;
    }
    part
}

/// Best single move or swap by penalty decrease; `None` when nothing improves.
fn best_repair(state: &mut State, part: &[usize], order: &[usize]) -> Option<Repair> {
    let current = state.total_penalty();
    let mut best: Option<(u64, Repair)> = None;
    let consider = |gain: u64, r: Repair, best: &mut Option<(u64, Repair)>| {
        if gain > 0 && best.as_ref().is_none_or(|(g, _)| gain > *g) {
            *best = Some((gain, r));
        }
    };

    for &g in order {
        let from = part[g];
        for to in (0..3).filter(|&p| p != from) {
            state.remove(g, from);
            state.add(g, to);
            let after = state.total_penalty();
            state.remove(g, to);
            state.add(g, from);
            if after < current {
                consider(current - after, Repair::Move { group: g, to }, &mut best);
            }
        }
    }
    if best.is_some() {
        return best.map(|(_, r)| r);
    }

    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            let (pa, pb) = (part[a], part[b]);
            if pa == pb {
                continue;
            }
            state.remove(a, pa);
            state.remove(b, pb);
            state.add(a, pb);
            state.add(b, pa);
            let after = state.total_penalty();
            state.remove(a, pb);
            state.remove(b, pa);
            state.add(a, pa);
            state.add(b, pb);
            if after < current {
                consider(current - after, Repair::Swap { a, b }, &mut best);
            }
        }
    }
    best.map(|(_, r)| r)
}

enum Repair {
    Move { group: usize, to: usize },
    Swap { a: usize, b: usize },
}

fn check_feasible(groups: &[GroupAggregate], targets: &[usize; 3], has_forced: bool, spec: &SplitSpec) -> Result<()> {
    let defect_free: usize = groups.iter().map(|g| g.defect_free_images).sum();
    if defect_free < spec.defect_free_test_count {
        return Err(Error::Infeasible(format!(
            "{} defect-free images requested in test but the manifest has {defect_free}",
            spec.defect_free_test_count
        )));
    }
    let active = constrained_partitions(targets, has_forced).iter().filter(|&&c| c).count() as u64;
    let mut totals: BTreeMap<u32, u64> = BTreeMap::new();
    for g in groups {
        for (&c, &n) in &g.class_counts {
            *totals.entry(c).or_default() += n;
        }
    }
    for (c, total) in totals.into_iter().filter(|&(_, n)| n > 0) {
        if total < active * spec.min_class_count {
            return Err(Error::Infeasible(format!(
                "class {c} has {total} occurrences, needs at least {} for {active} partitions with minimum {}",
                active * spec.min_class_count,
                spec.min_class_count
            )));
        }
    }
    Ok(())
}

pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<SplitAssignment> {
    let groups = build_groups(manifest);
    let (forced, pool): (Vec<_>, Vec<_>) = groups.iter().cloned().partition(|g| g.defect_free_images > 0);
    let pool_total: usize = pool.iter().map(GroupAggregate::size).sum();
    let targets = spec.resolve_targets(pool_total)?;
    check_feasible(&groups, &targets, !forced.is_empty(), spec)?;
    let tolerance = max_group_size(&groups);

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let mut state = State::new(&pool, &forced, targets, tolerance, spec.min_class_count);
    let mut part = greedy_assign(&mut state, &order);

    let mut iterations = 0;
    while state.total_penalty() > 0 {
        if iterations >= spec.max_repair_iterations {
            return Err(non_convergence(&state, iterations));
        }
        match best_repair(&mut state, &part, &order) {
            Some(Repair::Move { group, to }) => {
                state.remove(group, part[group]);
                state.add(group, to);
                part[group] = to;
            }
            Some(Repair::Swap { a, b }) => {
                let (pa, pb) = (part[a], part[b]);
                state.remove(a, pa);
                state.remove(b, pb);
                state.add(a, pb);
                state.add(b, pa);
                part.swap(a, b);
            }
            None => return Err(non_convergence(&state, iterations)),
        }
        iterations += 1;
    }

    let mut assignment = BTreeMap::new();
    for (g, p) in pool.iter().zip(&part) {
        for id in &g.image_ids {
            assignment.insert(id.clone(), Partition::ALL[*p]);
        }
    }
    for g in &forced {
        for id in &g.image_ids {
            assignment.insert(id.clone(), Partition::Test);
        }
    }
    let mut sizes = state.sizes;
    sizes[2] += forced.iter().map(GroupAggregate::size).sum::<usize>();
    let class_counts = state
        .classes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, [state.counts[0][i], state.counts[1][i], state.counts[2][i]]))
        .collect();
    Ok(SplitAssignment {
        assignment,
        sizes,
        pool_sizes: state.sizes,
        targets,
        tolerance,
        class_counts,
        seed: spec.seed,
        repair_iterations: iterations,
    })
}

fn non_convergence(state: &State, iterations: usize) -> Error {
    let mut violated = Vec::new();
    for p in 0..3 {
        let dev = state.sizes[p].abs_diff(state.targets[p]);
        if dev > state.tolerance {
            violated.push(format!("{} size {} vs target {}", Partition::ALL[p], state.sizes[p], state.targets[p]));
        }
        if state.constrained[p] {
            for (i, &n) in state.counts[p].iter().enumerate() {
                if n < state.min {
                    violated.push(format!("class {} has {n} in {}", state.classes[i], Partition::ALL[p]));
                }
            }
        }
    }
    Error::NonConvergence {
        iterations,
        violated: violated.join("; "),
    }
}

/// All constraint violations of `assignment`. Empty means the split is valid.
pub fn verify_split(manifest: &DatasetManifest, assignment: &SplitAssignment, spec: &SplitSpec) -> Result<Vec<Violation>> {
    let known: HashMap<&str, &ManifestEntry> = manifest.entries().iter().map(|e| (e.image_id.as_str(), e)).collect();
    if let Some(id) = assignment.assignment.keys().find(|id| !known.contains_key(id.as_str())) {
        return Err(Error::validation(format!("assignment names unknown image '{id}'")));
    }
    let mut violations = Vec::new();
    for e in manifest.entries() {
        if !assignment.assignment.contains_key(&e.image_id) {
            violations.push(Violation::Unassigned {
                image_id: e.image_id.clone(),
            });
        }
    }

    let groups = build_groups(manifest);
    let forced: BTreeSet<&str> = groups
        .iter()
        .filter(|g| g.defect_free_images > 0)
        .map(|g| g.group_id.as_str())
        .collect();
    for g in &groups {
        let parts: BTreeSet<Partition> = g.image_ids.iter().filter_map(|id| assignment.assignment.get(id).copied()).collect();
        if parts.len() > 1 {
            violations.push(Violation::GroupSplit {
                group_id: g.group_id.clone(),
                partitions: parts.into_iter().collect(),
            });
        }
    }

    let pool_total: usize = groups
        .iter()
        .filter(|g| g.defect_free_images == 0)
        .map(GroupAggregate::size)
        .sum();
    let targets = spec.resolve_targets(pool_total)?;
    let tolerance = max_group_size(&groups);
    let mut pool_sizes = [0usize; 3];
    let mut counts: BTreeMap<u32, [u64; 3]> = BTreeMap::new();
    let mut defect_free_in_test = 0;
    for e in manifest.entries() {
        let Some(&p) = assignment.assignment.get(&e.image_id) else { continue };
        if !forced.contains(e.group_id.as_str()) {
            pool_sizes[p.index()] += 1;
        }
        for (&c, &n) in &e.class_counts {
            counts.entry(c).or_default()[p.index()] += n;
        }
        if e.defect_free {
            if p == Partition::Test {
                defect_free_in_test += 1;
            } else {
                violations.push(Violation::DefectFreeOutsideTest {
                    image_id: e.image_id.clone(),
                    partition: p,
                });
            }
        }
    }
    if defect_free_in_test < spec.defect_free_test_count {
        violations.push(Violation::DefectFreeShortfall {
            in_test: defect_free_in_test,
            required: spec.defect_free_test_count,
        });
    }
    for p in Partition::ALL {
        let (achieved, target) = (pool_sizes[p.index()], targets[p.index()]);
        if achieved.abs_diff(target) > tolerance {
            violations.push(Violation::SizeOutOfTolerance {
                partition: p,
                achieved,
                target,
                tolerance,
            });
        }
    }
    let constrained = constrained_partitions(&targets, !forced.is_empty());
    for (&c, per) in &counts {
        if per.iter().sum::<u64>() == 0 {
            continue;
        }
        for p in Partition::ALL {
            if constrained[p.index()] && per[p.index()] < spec.min_class_count {
                violations.push(Violation::ClassBelowMinimum {
                    class_id: c,
                    partition: p,
                    count: per[p.index()],
                    minimum: spec.min_class_count,
                });
            }
        }
    }
    Ok(violations)
}
