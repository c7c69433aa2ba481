//! Pixel-space geometry: axis-aligned boxes and binary masks.
//!
//! Boxes use continuous coordinates with the origin at the top-left corner.
//! A pixel at column `c`, row `r` covers the unit square `[c, c+1) x [r, r+1)`.

use crate::error::{Error, Result};

/// Axis-aligned box `(x_min, y_min, x_max, y_max)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("box {coords:?} has non-finite coordinates")));
        }
        if coords.iter().any(|&v| v < 0.0) {
            return Err(Error::validation(format!("box {coords:?} has negative coordinates")));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::validation(format!("box {coords:?} has zero or negative extent")));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Intersection over union. Zero for disjoint or edge-touching boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let ih = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Clip to `[0, width] x [0, height]`; `None` if nothing with positive area remains.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BBox> {
        BBox::new(
            self.x_min.clamp(0.0, width),
            self.y_min.clamp(0.0, height),
            self.x_max.clamp(0.0, width),
            self.y_max.clamp(0.0, height),
        )
        .ok()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BitMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::validation(format!(
                "mask data has {} pixels, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, value: bool) {
        let idx = row as usize * self.width as usize + col as usize;
        self.data[idx] = value;
    }

    pub fn pixel_count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    /// Iterate `(col, row)` of set pixels in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 3.0, 1.0, 2.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 2.0).is_err());
    }

    #[test]
    fn iou_basic_cases() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = BBox::new(1.0, 1.0, 3.0, 3.0).unwrap();
        let far = BBox::new(5.0, 5.0, 6.0, 6.0).unwrap();
        let touching = BBox::new(2.0, 0.0, 4.0, 2.0).unwrap();
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&far), 0.0);
        assert_eq!(a.iou(&touching), 0.0);
        assert!((a.iou(&b) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn clamp_drops_boxes_outside_image() {
        let b = BBox::new(120.0, 0.0, 130.0, 10.0).unwrap();
        assert!(b.clamp_to(100.0, 100.0).is_none());
        let c = BBox::new(90.0, 90.0, 130.0, 130.0).unwrap().clamp_to(100.0, 100.0).unwrap();
        assert_eq!(c.to_array(), [90.0, 90.0, 100.0, 100.0]);
    }

    #[test]
    fn mask_dimension_check() {
        assert!(BitMask::new(2, 3, vec![false; 5]).is_err());
        let mut m = BitMask::zeros(3, 2);
        m.set(2, 1, true);
        assert_eq!(m.pixel_count(), 1);
        assert_eq!(m.set_pixels().collect::<Vec<_>>(), vec![(2, 1)]);
    }
}
