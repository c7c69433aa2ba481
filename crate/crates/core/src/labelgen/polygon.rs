//! Mask to box / polygon conversion.
//!
//! Components are 4-connected. Each component's outer boundary is traced along
//! pixel edges (clockwise in image coordinates, starting at the top-left corner
//! of the component's first pixel in scan order), reduced to its corner
//! vertices and then simplified with Douglas-Peucker.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{BBox, BitMask};

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    /// Collapses zero-length edges (including the closing edge); needs at least 3 vertices left.
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Geometry("polygon has non-finite vertices".into()));
        }
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if out.last() != Some(&v) {
                out.push(v);
            }
        }
        while out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        if out.len() < 3 {
            return Err(Error::Geometry(format!("polygon needs at least 3 distinct vertices, got {}", out.len())));
        }
        Ok(Self { vertices: out })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }
}

/// Tight box over set pixels, each pixel covering its unit square.
pub fn mask_to_bbox(mask: &BitMask) -> Result<BBox> {
    let mut pixels = mask.set_pixels();
    let (c0, r0) = pixels.next().ok_or_else(|| Error::Geometry("empty mask has no bounding box".into()))?;
    let (mut cmin, mut cmax, mut rmin, mut rmax) = (c0, c0, r0, r0);
    for (c, r) in pixels {
        cmin = cmin.min(c);
        cmax = cmax.max(c);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    BBox::new(cmin as f64, rmin as f64, (cmax + 1) as f64, (rmax + 1) as f64)
}

/// One 4-connected component: its pixel count, its first pixel in scan order and its tight box.
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub pixel_count: usize,
    pub pixels: Vec<(u32, u32)>,
    pub bbox: BBox,
}

pub(crate) fn components(mask: &BitMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![u32::MAX; w as usize * h as usize];
    let idx = |c: u32, r: u32| r as usize * w as usize + c as usize;
    let mut comps = Vec::new();

    for (c, r) in mask.set_pixels() {
        if label[idx(c, r)] != u32::MAX {
            continue;
        }
        let id = comps.len() as u32;
        let mut stack = vec![(c, r)];
        label[idx(c, r)] = id;
        let mut pixels = Vec::new();
        while let Some((pc, pr)) = stack.pop() {
            pixels.push((pc, pr));
            let mut visit = |nc: u32, nr: u32| {
                if mask.get(nc, nr) && label[idx(nc, nr)] == u32::MAX {
                    label[idx(nc, nr)] = id;
                    stack.push((nc, nr));
                }
            };
            if pc > 0 {
                visit(pc - 1, pr);
            }
            if pc + 1 < w {
                visit(pc + 1, pr);
            }
            if pr > 0 {
                visit(pc, pr - 1);
            }
            if pr + 1 < h {
                visit(pc, pr + 1);
            }
        }
        pixels.sort_unstable_by_key(|&(pc, pr)| (pr, pc));
        let (cmin, cmax) = pixels.iter().fold((u32::MAX, 0), |(lo, hi), &(pc, _)| (lo.min(pc), hi.max(pc)));
        let (rmin, rmax) = (pixels[0].1, pixels[pixels.len() - 1].1);
        let bbox = BBox::new(cmin as f64, rmin as f64, (cmax + 1) as f64, (rmax + 1) as f64)
            .expect("component spans at least one pixel");
        comps.push(Component {
            pixel_count: pixels.len(),
            pixels,
            bbox,
        });
    }
    // Stable: equal sizes stay in scan order of their first pixel.
    comps.sort_by_key(|c| std::cmp::Reverse(c.pixel_count));
    comps
}

const EAST: u8 = 0;
const SOUTH: u8 = 1;
const WEST: u8 = 2;
const NORTH: u8 = 3;

fn step((x, y): (i64, i64), dir: u8) -> (i64, i64) {
    match dir {
        EAST => (x + 1, y),
        SOUTH => (x, y + 1),
        WEST => (x - 1, y),
        _ => (x, y - 1),
    }
}

/// Corner vertices of the outer boundary of one component.
fn trace_outer(comp: &Component) -> Vec<(f64, f64)> {
    let inside: std::collections::HashSet<(i64, i64)> =
        comp.pixels.iter().map(|&(c, r)| (c as i64, r as i64)).collect();
    // Directed boundary edges keyed by their start vertex, interior on the right.
    let mut out_edges: HashMap<(i64, i64), u8> = HashMap::new();
    let mut add = |v: (i64, i64), dir: u8| *out_edges.entry(v).or_default() |= 1 << dir;
    for &(c, r) in &inside {
        if !inside.contains(&(c, r - 1)) {
            add((c, r), EAST);
        }
        if !inside.contains(&(c + 1, r)) {
            add((c + 1, r), SOUTH);
        }
        if !inside.contains(&(c, r + 1)) {
            add((c + 1, r + 1), WEST);
        }
        if !inside.contains(&(c - 1, r)) {
            add((c, r + 1), NORTH);
        }
    }

    let (c0, r0) = comp.pixels[0];
    let start = (c0 as i64, r0 as i64);
    let mut corners = vec![(start.0 as f64, start.1 as f64)];
    let mut pos = start;
    let mut dir = EAST;
    loop {
        pos = step(pos, dir);
        let avail = out_edges[&pos];
        // Prefer right turns so diagonal neighbours stay separate components.
        let next = [(dir + 1) % 4, dir, (dir + 3) % 4]
            .into_iter()
            .find(|d| avail & (1 << d) != 0)
            .expect("boundary edges always form closed loops");
        if pos == start && next == EAST {
            break;
        }
        if next != dir {
            corners.push((pos.0 as f64, pos.1 as f64));
        }
        dir = next;
    }
    corners
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((p.0 - a.0).powi(2) + (p.1 - a.1).powi(2)).sqrt();
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

fn dp_open(points: &[(f64, f64)], tolerance: f64, keep: &mut [bool]) {
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (far, dist) = (lo + 1..hi)
            .map(|i| (i, segment_distance(points[i], points[lo], points[hi])))
            .fold((lo, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if dist > tolerance {
            keep[far] = true;
            stack.push((lo, far));
            stack.push((far, hi));
        }
    }
}

/// Douglas-Peucker on a closed ring. The first vertex is always kept; the ring
/// is split there and at the vertex farthest from it.
pub fn simplify_ring(ring: &[(f64, f64)], tolerance: f64) -> Vec<(f64, f64)> {
    if ring.len() <= 3 {
        return ring.to_vec();
    }
    let origin = ring[0];
    let far = (1..ring.len())
        .max_by(|&a, &b| {
            let da = (ring[a].0 - origin.0).hypot(ring[a].1 - origin.1);
            let db = (ring[b].0 - origin.0).hypot(ring[b].1 - origin.1);
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .unwrap();

    let mut closed = ring.to_vec();
    closed.push(origin);
    let mut keep = vec![false; closed.len()];
    keep[0] = true;
    keep[far] = true;
    dp_open(&closed[..=far], tolerance, &mut keep[..=far]);
    dp_open(&closed[far..], tolerance, &mut keep[far..]);
    closed.pop();
    closed.into_iter().zip(keep).filter_map(|(v, k)| k.then_some(v)).collect()
}

fn component_polygon(comp: &Component, tolerance: f64) -> Polygon {
    let corners = trace_outer(comp);
    let simplified = simplify_ring(&corners, tolerance.max(0.0));
    Polygon::new(simplified).or_else(|_| Polygon::new(corners)).expect("a traced pixel boundary has at least 4 corners")
}

/// Polygon and tight box per 4-connected component, largest component first.
pub(crate) fn mask_components(mask: &BitMask, tolerance: f64) -> Result<Vec<(Polygon, BBox)>> {
    if mask.pixel_count() == 0 {
        return Err(Error::Geometry("empty mask has no polygon".into()));
    }
    Ok(components(mask)
        .iter()
        .map(|c| (component_polygon(c, tolerance), c.bbox))
        .collect())
}

pub fn mask_to_polygon(mask: &BitMask, simplify_tolerance: f64) -> Result<Vec<Polygon>> {
    Ok(mask_components(mask, simplify_tolerance)?.into_iter().map(|(p, _)| p).collect())
}
