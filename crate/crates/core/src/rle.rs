//! Row-major run-length mask codec.
//!
//! Counts alternate between runs of unset and set pixels, starting with an
//! unset run that may be empty. Every later run is non-empty, which makes the
//! encoding of a given mask unique.

use crate::error::{Error, Result};
use crate::geometry::BitMask;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u64>,
}

impl RleMask {
    /// Validates that the runs cover exactly `width * height` pixels and are canonical.
    pub fn new(width: u32, height: u32, counts: Vec<u64>) -> Result<Self> {
        let total = width as u64 * height as u64;
        let sum = counts
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::Codec("run lengths overflow".into()))?;
        if sum != total {
            return Err(Error::Codec(format!(
                "run lengths sum to {sum}, expected {width}x{height} = {total}"
            )));
        }
        if let Some(pos) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::Codec(format!("zero-length run at index {}", pos + 1)));
        }
        if total > 0 && counts.is_empty() {
            return Err(Error::Codec("empty run list".into()));
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of set pixels, read straight from the odd-indexed runs.
    pub fn pixel_count(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }
}

pub fn rle_encode(mask: &BitMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for &px in mask.data() {
        if px == current {
            run += 1;
        } else {
            counts.push(run);
            current = px;
            run = 1;
        }
    }
    if run > 0 || counts.is_empty() {
        counts.push(run);
    }
    RleMask {
        width: mask.width(),
        height: mask.height(),
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> BitMask {
    let mut data = Vec::with_capacity(rle.width as usize * rle.height as usize);
    let mut value = false;
    for &c in &rle.counts {
        data.extend(std::iter::repeat_n(value, c as usize));
        value = !value;
    }
    BitMask::new(rle.width, rle.height, data).expect("RleMask invariants guarantee the pixel total")
}
